"""Accuracy evaluation against ground truth and the scenario benchmark suite."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cluster import ClusterState, run_cluster
from .kernel import KernelBank, SizeModel
from .pipeline import REPORT_DTYPE, PipelineConfig, PipelineStats, reports_to_array, run
from .scene import SceneConfig, config_values, scenario, simulate
from .tracker import PuckTracker, TrackerConfig, TRACKING

logger = logging.getLogger(__name__)

STATIC_THRESHOLD_PX = 3.5
MOVING_THRESHOLD_PX = 4.0


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class AccuracyReport:
    errors: np.ndarray = field(repr=False)
    threshold_px: float
    mean: float
    median: float
    q1: float
    q3: float
    max: float
    valid_pct: float

    @property
    def count(self) -> int:
        return len(self.errors)

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "threshold_px": self.threshold_px,
            "mean": self.mean,
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
            "max": self.max,
            "valid_pct": self.valid_pct,
        }


def _sorted_reports(reports: np.ndarray) -> np.ndarray:
    # total order so that row order in the input never matters
    order = np.lexsort((reports["score"], reports["y"], reports["x"], reports["t"]))
    return reports[order]


def evaluate(reports, gt: np.ndarray, threshold_px: float) -> AccuracyReport:
    """Per-GT-sample error of the latest report at or before each sample time.

    Samples from the first report to the end of the ground truth count;
    a tracker that goes quiet keeps being scored on its last report.
    """
    reports = reports_to_array(reports)
    if len(reports) == 0 or len(gt) == 0:
        raise EvaluationError("need non-empty reports and ground truth")
    reports = _sorted_reports(reports)
    rt = reports["t"].astype(np.int64)
    gt_t = gt["t"].astype(np.int64)
    first = np.searchsorted(gt_t, rt[0], side="left")
    if first >= len(gt_t):
        raise EvaluationError("reports start after the last ground-truth sample")
    gt = gt[first:]
    idx = np.searchsorted(rt, gt["t"].astype(np.int64), side="right") - 1
    err = np.hypot(reports["x"][idx] - gt["cx"], reports["y"][idx] - gt["cy"])
    return AccuracyReport(
        errors=err,
        threshold_px=float(threshold_px),
        mean=float(err.mean()),
        median=float(np.median(err)),
        q1=float(np.percentile(err, 25)),
        q3=float(np.percentile(err, 75)),
        max=float(err.max()),
        valid_pct=float(100.0 * np.mean(err <= threshold_px)),
    )


def read_reports(path) -> tuple[np.ndarray, str]:
    """Report CSV (``t_us,x,y,score,mode``); returns the rows and the ``algo`` tag."""
    algo = "puck"
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                k, _, v = tok.partition("=")
                if k == "algo":
                    algo = v
            continue
        if line.startswith("t_us"):
            continue
        t, x, y, s, mode = line.split(",")
        rows.append((int(t), float(x), float(y), float(s), mode))
    return np.array(rows, dtype=REPORT_DTYPE) if rows else np.empty(0, REPORT_DTYPE), algo


def write_reports(reports, path, algo: str = "puck") -> None:
    reports = reports_to_array(reports)
    with open(path, "w") as fh:
        fh.write(f"# algo={algo}\n")
        fh.write("t_us,x,y,score,mode\n")
        for r in reports:
            fh.write(f"{int(r['t'])},{r['x']:.3f},{r['y']:.3f},{r['score']:.6f},{r['mode']}\n")


# -- wiring -----------------------------------------------------------------------

DEFAULT_TRACKER = TrackerConfig()


def build_tracker(
    model: SizeModel,
    field_corners: Iterable[Sequence[float]],
    config: TrackerConfig = DEFAULT_TRACKER,
    bank_step: float = 1.0,
) -> PuckTracker:
    bank = KernelBank.for_region(model, field_corners, bank_step)
    return PuckTracker(config, model, bank)


def tracker_for_scene(scene: SceneConfig, config: TrackerConfig = DEFAULT_TRACKER) -> PuckTracker:
    return build_tracker(scene.size_model, scene.field_corners(margin=5.0), config)


def config_digest(values: dict) -> str:
    blob = json.dumps(values, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunManifest:
    scenario: str
    seed: int
    algorithm: str
    scene_digest: str
    tracker_digest: str
    pipeline_digest: str
    outputs: dict = field(default_factory=dict)


@dataclass
class SuiteRow:
    scenario: str
    seed: int
    algorithm: str
    accuracy: AccuracyReport | None
    stats: PipelineStats | None
    manifest: RunManifest
    error: str | None = None
    wall_s: float = 0.0

    def as_dict(self) -> dict:
        out = {"scenario": self.scenario, "seed": self.seed, "algorithm": self.algorithm}
        if self.accuracy is not None:
            out.update({f"acc_{k}": v for k, v in self.accuracy.as_dict().items()})
        if self.stats is not None:
            out.update({f"pipe_{k}": v for k, v in self.stats.summary().items()})
        out["error"] = self.error
        out["scene_digest"] = self.manifest.scene_digest
        return out


def threshold_for(kind: str) -> float:
    return MOVING_THRESHOLD_PX if kind == "moving" else STATIC_THRESHOLD_PX


def run_scene(
    kind: str,
    seed: int,
    algorithms: Sequence[str] = ("puck", "cluster"),
    duration_s: float = 10.0,
    pipeline: PipelineConfig = PipelineConfig(),
    tracker_config: TrackerConfig = DEFAULT_TRACKER,
    sim=None,
) -> list[SuiteRow]:
    """Simulate one scene and evaluate each algorithm on it.

    The cluster baseline needs the PUCK detection to start from, so PUCK-track
    always runs first.
    """
    cfg = scenario(kind, seed, duration_s)
    if sim is None:
        sim = simulate(cfg)
    tracker = tracker_for_scene(cfg, tracker_config)
    thr = threshold_for(kind)
    digests = dict(
        scene_digest=config_digest(config_values(cfg)),
        tracker_digest=config_digest(vars(tracker_config)),
        pipeline_digest=config_digest(vars(pipeline)),
    )
    rows = []
    t0 = time.perf_counter()
    reports, stats, _ = run(sim.events, tracker, pipeline, cfg.width, cfg.height)
    puck_wall = time.perf_counter() - t0
    reports = reports_to_array(reports)
    tracked = reports[reports["mode"] == TRACKING]
    for algo in algorithms:
        manifest = RunManifest(kind, seed, algo, **digests)
        try:
            if algo == "puck":
                acc = evaluate(reports, sim.ground_truth, thr)
                rows.append(SuiteRow(kind, seed, algo, acc, stats, manifest, wall_s=puck_wall))
            elif algo == "cluster":
                if len(tracked) == 0:
                    raise EvaluationError("no PUCK detection to initialise the cluster tracker")
                first = tracked[0]
                init = ClusterState.seeded(first["x"], first["y"], cfg.size_model, int(first["t"]))
                t1 = time.perf_counter()
                creps, _ = run_cluster(sim.events, init)
                wall = time.perf_counter() - t1
                acc = evaluate(creps, sim.ground_truth, thr)
                cstats = PipelineStats(processed=len(sim.events), stage1_elapsed_s=wall, elapsed_s=wall)
                rows.append(SuiteRow(kind, seed, algo, acc, cstats, manifest, wall_s=wall))
            else:
                raise EvaluationError(f"unknown algorithm {algo!r}")
        except Exception as exc:  # recorded, suite carries on
            logger.warning("%s/%d/%s failed: %s", kind, seed, algo, exc)
            rows.append(SuiteRow(kind, seed, algo, None, None, manifest, error=str(exc)))
    return rows


DEFAULT_SUITE = (
    [("static", s) for s in (11, 12, 13, 14)] + [("moving", s) for s in (21, 22, 23, 24)]
)


def run_suite(
    scenes: Sequence[tuple[str, int]] = DEFAULT_SUITE,
    algorithms: Sequence[str] = ("puck", "cluster"),
    duration_s: float = 10.0,
    pipeline: PipelineConfig = PipelineConfig(),
    tracker_config: TrackerConfig = DEFAULT_TRACKER,
) -> list[SuiteRow]:
    rows: list[SuiteRow] = []
    for kind, seed in scenes:
        try:
            rows.extend(run_scene(kind, seed, algorithms, duration_s, pipeline, tracker_config))
        except Exception as exc:
            logger.warning("scene %s/%d failed: %s", kind, seed, exc)
            for algo in algorithms:
                manifest = RunManifest(kind, seed, algo, "", "", "")
                rows.append(SuiteRow(kind, seed, algo, None, None, manifest, error=str(exc)))
    return rows


def format_table(rows: Sequence[SuiteRow]) -> str:
    """Human-readable summary: accuracy box-plot numbers, valid %, and latency."""
    head = (
        f"{'scenario':<8} {'seed':>5} {'algo':<8} {'n':>6} {'mean':>7} {'median':>7} "
        f"{'q1':>6} {'q3':>6} {'max':>7} {'thr':>4} {'valid%':>7} {'Mev/s':>7} {'pass/s':>7} {'lat2 us':>8}"
    )
    lines = [head, "-" * len(head)]
    for r in rows:
        if r.accuracy is None:
            lines.append(f"{r.scenario:<8} {r.seed:>5} {r.algorithm:<8} FAILED: {r.error}")
            continue
        a = r.accuracy
        s = r.stats
        mev = s.throughput_eps / 1e6 if s else math.nan
        rate = s.pass_rate_hz if s else math.nan
        lat = float(np.mean(s.stage2_latency_us)) if s is not None and len(s.stage2_latency_us) else math.nan
        lines.append(
            f"{r.scenario:<8} {r.seed:>5} {r.algorithm:<8} {a.count:>6} {a.mean:>7.2f} {a.median:>7.2f} "
            f"{a.q1:>6.2f} {a.q3:>6.2f} {a.max:>7.1f} {a.threshold_px:>4.1f} {a.valid_pct:>7.1f} "
            f"{mev:>7.2f} {rate:>7.0f} {lat:>8.0f}"
        )
    return "\n".join(lines)


def _json_safe(v):
    v = float(v) if isinstance(v, (np.floating, np.integer)) and not isinstance(v, np.bool_) else v
    if isinstance(v, float) and not math.isfinite(v):
        return None  # strict JSON has no NaN
    return v


def rows_to_json(rows: Sequence[SuiteRow]) -> str:
    return json.dumps([{k: _json_safe(v) for k, v in r.as_dict().items()} for r in rows], indent=2)
