"""``pucktrack`` command line: generate, calibrate, track, evaluate, suite."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgio
from .evaluation import (
    DEFAULT_SUITE,
    EvaluationError,
    build_tracker,
    evaluate,
    format_table,
    read_reports,
    rows_to_json,
    run_suite,
    write_reports,
)
from .events import read_ground_truth, read_stream, write_ground_truth, write_stream
from .kernel import SizeModel, fit_size_model, read_observations, write_observations
from .pipeline import PipelineConfig, run
from .scene import SceneConfig, config_values, scenario, simulate
from .tracker import TrackerConfig

log = logging.getLogger("pucktrack")

SIZE_KEYS = ("k0", "k1", "k2", "h0", "h1", "h2")


def _split_track_config(values: dict):
    """Route the keys of a track config file to the objects they configure."""
    size = {k: values.pop(k) for k in SIZE_KEYS if k in values}
    bank = {k: values.pop(k) for k in ("bank_corners", "bank_step") if k in values}
    tracker_keys = set(TrackerConfig.__dataclass_fields__)
    pipe_keys = set(PipelineConfig.__dataclass_fields__)
    tracker = {k: values.pop(k) for k in list(values) if k in tracker_keys}
    pipe = {k: values.pop(k) for k in list(values) if k in pipe_keys}
    if values:
        raise cfgio.ConfigError(f"unknown track config keys: {sorted(values)}")
    return size, bank, tracker, pipe


def cmd_generate(args) -> int:
    if args.config:
        values = cfgio.read_key_values(args.config)
        if args.seed is not None:
            values["seed"] = args.seed
        if args.duration is not None:
            values["duration_s"] = args.duration
        scene = cfgio.dataclass_from_values(SceneConfig, values)
    else:
        seed = 0 if args.seed is None else args.seed
        scene = scenario(args.scenario, seed, args.duration or 10.0)
    sim = simulate(scene)
    write_stream(sim.header, sim.events, args.output, args.format)
    print(f"{len(sim.events)} events ({sim.n_puck_events} puck, {sim.n_pattern_events} pattern, "
          f"{sim.n_paddle_events} paddle, {sim.n_noise_events} noise) -> {args.output}")
    if args.gt:
        write_ground_truth(sim.ground_truth, args.gt)
        print(f"{len(sim.ground_truth)} ground-truth samples -> {args.gt}")
    if args.save_config:
        cfgio.write_key_values(config_values(scene), args.save_config)
    if args.track_config:
        values = dict(scene.size_model.as_dict())
        values["bank_corners"] = tuple(scene.field_corners(margin=5.0))
        cfgio.write_key_values(values, args.track_config)
    if args.annotations:
        rng = np.random.default_rng(scene.seed + 1)
        gt = sim.ground_truth
        idx = np.sort(rng.choice(len(gt), size=min(args.annotation_count, len(gt)), replace=False))
        obs = np.column_stack([gt["cx"][idx], gt["cy"][idx], gt["a"][idx], gt["b"][idx]])
        obs[:, 2:] += rng.normal(0.0, args.annotation_noise, (len(idx), 2))
        write_observations(obs, args.annotations)
    return 0


def cmd_calibrate(args) -> int:
    obs = read_observations(args.observations)
    model, stats = fit_size_model(obs)
    model.save(args.output)
    print(f"fitted on {stats.n} observations: rms a {stats.rms_a:.3f} px, rms b {stats.rms_b:.3f} px "
          f"(max {stats.max_abs_a:.3f} / {stats.max_abs_b:.3f})")
    for k, v in model.as_dict().items():
        print(f"  {k} = {v:.6g}")
    return 0


def cmd_track(args) -> int:
    header, events = read_stream(args.events)
    values = cfgio.read_key_values(args.config) if args.config else {}
    size, bank, tracker_values, pipe_values = _split_track_config(values)
    if args.size_model:
        model = SizeModel.load(args.size_model)
    elif len(size) == len(SIZE_KEYS):
        model = SizeModel(**{k: float(v) for k, v in size.items()})
    else:
        print("track: need a size model (--size-model or k0..h2 in --config)", file=sys.stderr)
        return 2
    corners = bank.get("bank_corners") or [
        (0, 0), (header.width - 1, 0), (0, header.height - 1), (header.width - 1, header.height - 1)
    ]
    tracker = build_tracker(model, corners, TrackerConfig(**tracker_values), bank.get("bank_step", 1.0))
    pipe_values["mode"] = args.mode
    if args.realtime is not None:
        pipe_values["realtime"] = args.realtime
    pipe = PipelineConfig(**pipe_values)
    reports, stats, surface = run(events, tracker, pipe, header.width, header.height)
    write_reports(reports, args.output, algo="puck")
    summary = stats.format()
    print(summary)
    if args.stats:
        Path(args.stats).write_text(summary + "\n")
    if args.dump_pgm:
        surface.to_pgm(args.dump_pgm)
    return 0


def cmd_evaluate(args) -> int:
    reports, algo = read_reports(args.reports)
    gt = read_ground_truth(args.gt)
    try:
        acc = evaluate(reports, gt, args.threshold)
    except EvaluationError as exc:
        print(f"evaluate: {exc}", file=sys.stderr)
        return 1
    print(f"algo={algo} samples={acc.count}")
    for k, v in acc.as_dict().items():
        if k != "count":
            print(f"{k:>12}: {v:.4f}")
    if args.errors:
        np.savetxt(args.errors, acc.errors, fmt="%.6f", header="error_px", comments="")
    return 0


def _parse_seeds(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()] if text else []


def cmd_suite(args) -> int:
    if args.static_seeds is None and args.moving_seeds is None:
        scenes = list(DEFAULT_SUITE)
    else:
        scenes = [("static", s) for s in _parse_seeds(args.static_seeds or "")]
        scenes += [("moving", s) for s in _parse_seeds(args.moving_seeds or "")]
    pipe = PipelineConfig(mode=args.mode, realtime=args.realtime)
    rows = run_suite(scenes, args.algorithms.split(","), args.duration, pipe)
    print(format_table(rows))
    if args.json:
        Path(args.json).write_text(rows_to_json(rows) + "\n")
    return 1 if any(r.error for r in rows) else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pucktrack", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a scene into an event file and ground truth")
    g.add_argument("--scenario", choices=("static", "moving"), default="static")
    g.add_argument("--config", help="key = value scene config (overrides --scenario)")
    g.add_argument("--seed", type=int)
    g.add_argument("--duration", type=float, help="seconds")
    g.add_argument("-o", "--output", required=True, help="event file (.csv for text)")
    g.add_argument("--format", choices=("binary", "csv"))
    g.add_argument("--gt", help="ground-truth CSV")
    g.add_argument("--save-config", help="write the resolved scene config")
    g.add_argument("--track-config", help="write a track config (size model, bank region)")
    g.add_argument("--annotations", help="write noisy x,y,a,b samples for calibrate")
    g.add_argument("--annotation-count", type=int, default=50)
    g.add_argument("--annotation-noise", type=float, default=0.5, help="px")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("calibrate", help="fit the size model to x,y,a,b annotations")
    c.add_argument("observations")
    c.add_argument("-o", "--output", required=True)
    c.set_defaults(func=cmd_calibrate)

    t = sub.add_parser("track", help="run the tracker over an event file")
    t.add_argument("events")
    t.add_argument("--config", help="key = value tracker/pipeline config")
    t.add_argument("--size-model", help="size model file from calibrate")
    t.add_argument("--mode", choices=("seq", "par"), default="seq")
    t.add_argument("--realtime", type=float, metavar="FACTOR", help="playback speed (par mode)")
    t.add_argument("-o", "--output", required=True, help="report CSV")
    t.add_argument("--stats", help="write the stats summary here too")
    t.add_argument("--dump-pgm", help="final surface as PGM")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("evaluate", help="score a report CSV against ground truth")
    e.add_argument("reports")
    e.add_argument("gt")
    e.add_argument("--threshold", type=float, default=3.5, help="valid-position radius, px")
    e.add_argument("--errors", help="write per-sample errors")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("suite", help="static and moving scenes, every algorithm")
    s.add_argument("--static-seeds", help="comma separated")
    s.add_argument("--moving-seeds", help="comma separated")
    s.add_argument("--duration", type=float, default=10.0)
    s.add_argument("--algorithms", default="puck,cluster")
    s.add_argument("--mode", choices=("seq", "par"), default="seq")
    s.add_argument("--realtime", type=float, metavar="FACTOR")
    s.add_argument("--json", help="machine-readable rows")
    s.set_defaults(func=cmd_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
