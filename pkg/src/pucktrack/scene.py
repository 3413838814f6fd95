"""Synthetic air-hockey event streams with exact ground truth.

The camera model is geometric: at every simulation step (1 ms by default)
each moving silhouette is rasterised at its old and new pose, and every
pixel whose membership changed emits ``density`` events with timestamps
spread uniformly over the step.  Camera yaw is approximated as a global
horizontal image translation, which is enough to make the printed table
decorations (stars, border lines) fire while the camera moves and stay
silent while it is still.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .events import EVENT_DTYPE, GT_DTYPE, StreamHeader
from .kernel import SizeModel

# Half-axis model of the simulated camera: the far end of the table (small y)
# projects the 6.5 cm puck to ~6x4 px, the near end to ~15x10 px.
DEFAULT_SIZE_MODEL = SizeModel(4.0, 0.002, 0.022, 2.5, 0.001, 0.017)

TABLE_LENGTH_CM = 213.5
TABLE_WIDTH_CM = 122.0
PUCK_DIAMETER_CM = 6.5


class SceneConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Star:
    cx: float
    cy: float
    r_outer: float
    r_inner: float
    points: int = 5
    rotation: float = 0.0

    def polygon(self) -> np.ndarray:
        n = 2 * self.points
        ang = self.rotation + np.pi * np.arange(n) / self.points - np.pi / 2
        r = np.where(np.arange(n) % 2 == 0, self.r_outer, self.r_inner)
        return np.column_stack([self.cx + r * np.cos(ang), self.cy + r * np.sin(ang)])


@dataclass(frozen=True)
class SceneConfig:
    width: int = 640
    height: int = 480
    # rectangle (x_min, y_min, x_max, y_max) the puck centre moves in
    field: tuple[float, float, float, float] = (90.0, 70.0, 550.0, 430.0)
    size_model: SizeModel = DEFAULT_SIZE_MODEL
    puck_pos: tuple[float, float] = (320.0, 250.0)
    puck_vel: tuple[float, float] = (400.0, 250.0)
    restitution: float = 0.95
    max_speed: float = 3000.0
    edge_density: float = 1.0
    pattern_density: float = 1.0
    stars: tuple[Star, ...] = ()
    border: bool = False
    border_width: float = 3.0
    paddle: bool = False
    paddle_scale: float = 1.6
    paddle_lag_s: float = 0.3
    paddle_offset: float = 12.0
    jitter_deg: float = 0.0
    jitter_period_s: float = 1.5
    focal_px: float = 320.0
    noise_rate: float = 0.02
    duration_s: float = 10.0
    step_us: int = 1000
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.size_model, (tuple, list)):
            object.__setattr__(self, "size_model", SizeModel(*self.size_model))
        stars = tuple(s if isinstance(s, Star) else Star(*s) for s in self.stars)
        object.__setattr__(self, "stars", stars)
        if self.duration_s <= 0:
            raise SceneConfigError("duration must be positive")
        if not 0 < self.restitution <= 1:
            raise SceneConfigError("restitution must be in (0, 1]")
        if math.hypot(*self.puck_vel) > self.max_speed:
            raise SceneConfigError("initial puck speed exceeds max_speed")
        x0, y0, x1, y1 = self.field
        px, py = self.puck_pos
        if not (x0 <= px <= x1 and y0 <= py <= y1):
            raise SceneConfigError(f"puck start {self.puck_pos} outside field {self.field}")
        if self.step_us <= 0:
            raise SceneConfigError("step_us must be positive")

    @property
    def jitter_amplitude_px(self) -> float:
        return self.focal_px * math.tan(math.radians(self.jitter_deg))

    def shift_at(self, t_s: float) -> float:
        if self.jitter_deg == 0:
            return 0.0
        return self.jitter_amplitude_px * math.sin(2 * math.pi * t_s / self.jitter_period_s)

    def field_corners(self, margin: float = 0.0) -> list[tuple[float, float]]:
        """Corners of the region the puck centre can occupy in the image."""
        x0, y0, x1, y1 = self.field
        m = abs(self.jitter_amplitude_px) + margin
        return [(x0 - m, y0), (x1 + m, y0), (x0 - m, y1), (x1 + m, y1)]


# -- kinematics -------------------------------------------------------------


def reflect_1d(pos: float, vel: float, lo: float, hi: float, e: float):
    """Advance-then-reflect on [lo, hi]; the post-wall path and velocity are scaled by ``e``."""
    bounces = 0
    while pos < lo or pos > hi:
        if pos > hi:
            pos = hi - (pos - hi) * e
        else:
            pos = lo + (lo - pos) * e
        vel = -vel * e
        bounces += 1
        if bounces > 64:
            pos = min(max(pos, lo), hi)
            break
    return pos, vel, bounces


def advance_puck(pos, vel, dt: float, bounds, e: float):
    x0, y0, x1, y1 = bounds
    x, vx, _ = reflect_1d(pos[0] + vel[0] * dt, vel[0], x0, x1, e)
    y, vy, _ = reflect_1d(pos[1] + vel[1] * dt, vel[1], y0, y1, e)
    return (x, y), (vx, vy)


def puck_trajectory(config: SceneConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Table-frame puck centre and velocity at every step boundary.

    Returns ``(t_us, pos[n, 2], vel[n, 2])`` with ``n = steps + 1``.
    """
    steps = int(round(config.duration_s * 1e6 / config.step_us))
    dt = config.step_us * 1e-6
    pos = np.empty((steps + 1, 2))
    vel = np.empty((steps + 1, 2))
    p, v = tuple(config.puck_pos), tuple(config.puck_vel)
    pos[0], vel[0] = p, v
    for s in range(1, steps + 1):
        p, v = advance_puck(p, v, dt, config.field, config.restitution)
        pos[s], vel[s] = p, v
    t = np.arange(steps + 1, dtype=np.int64) * config.step_us
    return t, pos, vel


# -- rasterisation ------------------------------------------------------------


def _ellipse_mask(cx, cy, a, b, x0, y0, w, h):
    ys, xs = np.mgrid[y0 : y0 + h, x0 : x0 + w]
    return ((xs - cx) / a) ** 2 + ((ys - cy) / b) ** 2 <= 1.0


def silhouette_change(prev, nxt, width: int, height: int):
    """Pixels whose membership differs between two ellipse poses.

    Poses are ``(cx, cy, a, b)``.  Returns ``(xs, ys, entered)`` where
    ``entered`` is True for pixels that became covered.
    """
    boxes = []
    for cx, cy, a, b in (prev, nxt):
        boxes.append((math.floor(cx - a), math.floor(cy - b), math.ceil(cx + a), math.ceil(cy + b)))
    x0 = max(min(b[0] for b in boxes), 0)
    y0 = max(min(b[1] for b in boxes), 0)
    x1 = min(max(b[2] for b in boxes), width - 1)
    y1 = min(max(b[3] for b in boxes), height - 1)
    if x1 < x0 or y1 < y0:
        empty = np.empty(0, np.int64)
        return empty, empty, np.empty(0, bool)
    w, h = x1 - x0 + 1, y1 - y0 + 1
    before = _ellipse_mask(*prev, x0, y0, w, h)
    after = _ellipse_mask(*nxt, x0, y0, w, h)
    changed = before ^ after
    ys, xs = np.nonzero(changed)
    return xs + x0, ys + y0, after[ys, xs]


def _emit(xs, ys, pol, t0: int, dt_us: int, density: float, rng: np.random.Generator):
    n = len(xs)
    if n == 0 or density <= 0:
        return np.empty(0, EVENT_DTYPE)
    base = int(math.floor(density))
    counts = np.full(n, base, dtype=np.int64)
    frac = density - base
    if frac > 0:
        counts += rng.random(n) < frac
    total = int(counts.sum())
    ev = np.empty(total, EVENT_DTYPE)
    ev["x"] = np.repeat(xs, counts)
    ev["y"] = np.repeat(ys, counts)
    ev["p"] = np.repeat(pol, counts)
    ev["t"] = t0 + rng.integers(1, dt_us + 1, size=total)
    return ev


def render_silhouette_events(
    prev,
    nxt,
    dt_us: int,
    t0: int = 0,
    density: float = 1.0,
    width: int = 640,
    height: int = 480,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Events for an ellipse moving from pose ``prev`` to ``nxt`` within ``(t0, t0 + dt_us]``.

    Unsorted; ON polarity where the silhouette arrives, OFF where it leaves.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    xs, ys, entered = silhouette_change(prev, nxt, width, height)
    return _emit(xs, ys, entered.astype(np.uint8), t0, dt_us, density, rng)


def polygon_row_crossings(poly: np.ndarray, height: int):
    """Per pixel-row x positions where the polygon boundary crosses row centres.

    Returns ``(rows, xs, entering)``; ``entering`` marks left-hand boundaries of
    inside runs (even-odd rule).
    """
    px, py = poly[:, 0], poly[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    rows_out, xs_out, ent_out = [], [], []
    for row in range(max(int(math.ceil(py.min())), 0), min(int(math.floor(py.max())), height - 1) + 1):
        yc = float(row)
        hit = ((py <= yc) & (qy > yc)) | ((qy <= yc) & (py > yc))
        if not hit.any():
            continue
        xi = px[hit] + (yc - py[hit]) * (qx[hit] - px[hit]) / (qy[hit] - py[hit])
        xi.sort()
        rows_out.append(np.full(len(xi), row))
        xs_out.append(xi)
        ent_out.append(np.arange(len(xi)) % 2 == 0)
    if not rows_out:
        return np.empty(0, np.int64), np.empty(0), np.empty(0, bool)
    return np.concatenate(rows_out), np.concatenate(xs_out), np.concatenate(ent_out)


def _bar(x0, y0, x1, y1):
    return np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], dtype=float)


def pattern_polygons(config: SceneConfig) -> list[np.ndarray]:
    polys = [s.polygon() for s in config.stars]
    if config.border:
        # printed table edge just outside the puck's reach
        m = config.size_model
        x0, y0, x1, y1 = config.field
        ax0, _ = m.predict(x0, (y0 + y1) / 2)
        ax1, _ = m.predict(x1, (y0 + y1) / 2)
        _, by0 = m.predict((x0 + x1) / 2, y0)
        _, by1 = m.predict((x0 + x1) / 2, y1)
        L, R = x0 - ax0 - 2, x1 + ax1 + 2
        T, B = y0 - by0 - 2, y1 + by1 + 2
        bw = config.border_width
        polys += [
            _bar(L - bw, T - bw, R + bw, T),
            _bar(L - bw, B, R + bw, B + bw),
            _bar(L - bw, T, L, B),
            _bar(R, T, R + bw, B),
        ]
    return polys


class _PatternSweep:
    """Events from static table decorations under horizontal camera shift."""

    def __init__(self, polys: Sequence[np.ndarray], width: int, height: int):
        rows, xs, ent = [], [], []
        for poly in polys:
            r, x, e = polygon_row_crossings(poly, height)
            rows.append(r)
            xs.append(x)
            ent.append(e)
        self.rows = np.concatenate(rows) if rows else np.empty(0, np.int64)
        self.xs = np.concatenate(xs) if xs else np.empty(0)
        self.entering = np.concatenate(ent) if ent else np.empty(0, bool)
        self.width = width

    def changed(self, s0: float, s1: float):
        if len(self.xs) == 0 or s0 == s1:
            empty = np.empty(0, np.int64)
            return empty, empty, np.empty(0, bool)
        lo_s, hi_s = min(s0, s1), max(s0, s1)
        # pixel centre x toggles when x - s sweeps across a boundary
        lo = np.ceil(self.xs + lo_s).astype(np.int64)
        hi = np.ceil(self.xs + hi_s).astype(np.int64)
        counts = hi - lo
        keep = counts > 0
        if not keep.any():
            empty = np.empty(0, np.int64)
            return empty, empty, np.empty(0, bool)
        counts = counts[keep]
        starts = np.repeat(lo[keep], counts)
        within = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        xs = starts + within
        ys = np.repeat(self.rows[keep], counts)
        # moving right, a left boundary brings the pattern onto the pixel
        on = np.repeat(self.entering[keep] == (s1 > s0), counts)
        inside = (xs >= 0) & (xs < self.width)
        return xs[inside], ys[inside], on[inside]


@dataclass
class SimulationResult:
    header: StreamHeader
    events: np.ndarray
    ground_truth: np.ndarray
    config: SceneConfig
    n_puck_events: int = 0
    n_pattern_events: int = 0
    n_paddle_events: int = 0
    n_noise_events: int = 0
    puck_velocity: np.ndarray | None = field(default=None, repr=False)


def simulate(config: SceneConfig) -> SimulationResult:
    """Generate the event stream and 1-per-step ground truth for ``config``."""
    rng = np.random.default_rng(config.seed)
    W, H = config.width, config.height
    model = config.size_model
    dt_us = config.step_us
    t, pos, vel = puck_trajectory(config)
    steps = len(t) - 1

    shift = np.array([config.shift_at(ti * 1e-6) for ti in t])
    img = pos.copy()
    img[:, 0] += shift
    a, b = model.predict(img[:, 0], img[:, 1])

    # one sample at the end of every step: the pose the step's events lead to
    gt = np.empty(steps, GT_DTYPE)
    gt["t"] = t[1:]
    gt["cx"], gt["cy"], gt["a"], gt["b"] = img[1:, 0], img[1:, 1], a[1:], b[1:]

    sweep = _PatternSweep(pattern_polygons(config), W, H) if config.jitter_deg else None

    if config.paddle:
        paddle_x = np.empty(steps + 1)
        px = pos[0, 0]
        alpha = 1.0 - math.exp(-dt_us * 1e-6 / config.paddle_lag_s)
        for s in range(steps + 1):
            px += alpha * (pos[s, 0] - px)
            paddle_x[s] = px + 10.0 * math.sin(2 * math.pi * 0.7 * t[s] * 1e-6)
        paddle_y = config.field[1] - config.paddle_offset
        pa, pb = model.predict(paddle_x + shift, paddle_y)
        pa = pa * config.paddle_scale
        pb = pb * config.paddle_scale

    noise_mean = config.noise_rate * W * H * dt_us * 1e-6
    chunks = []
    counts = dict(puck=0, pattern=0, paddle=0, noise=0)
    for s in range(steps):
        t0 = int(t[s])
        parts = []
        prev = (img[s, 0], img[s, 1], a[s], b[s])
        nxt = (img[s + 1, 0], img[s + 1, 1], a[s + 1], b[s + 1])
        ev = render_silhouette_events(prev, nxt, dt_us, t0, config.edge_density, W, H, rng)
        counts["puck"] += len(ev)
        parts.append(ev)
        if config.paddle:
            pp = (paddle_x[s] + shift[s], paddle_y, pa[s], pb[s])
            pn = (paddle_x[s + 1] + shift[s + 1], paddle_y, pa[s + 1], pb[s + 1])
            ev = render_silhouette_events(pp, pn, dt_us, t0, config.edge_density, W, H, rng)
            counts["paddle"] += len(ev)
            parts.append(ev)
        if sweep is not None:
            xs, ys, on = sweep.changed(shift[s], shift[s + 1])
            ev = _emit(xs, ys, on.astype(np.uint8), t0, dt_us, config.pattern_density, rng)
            counts["pattern"] += len(ev)
            parts.append(ev)
        if noise_mean > 0:
            n = rng.poisson(noise_mean)
            if n:
                ev = np.empty(n, EVENT_DTYPE)
                ev["x"] = rng.integers(0, W, n)
                ev["y"] = rng.integers(0, H, n)
                ev["p"] = rng.integers(0, 2, n)
                ev["t"] = t0 + rng.integers(1, dt_us + 1, n)
                counts["noise"] += n
                parts.append(ev)
        step_events = np.concatenate(parts) if len(parts) > 1 else parts[0]
        if len(step_events):
            chunks.append(step_events[np.argsort(step_events["t"], kind="stable")])
    events = np.concatenate(chunks) if chunks else np.empty(0, EVENT_DTYPE)
    header = StreamHeader(W, H, int(t[-1]), len(events))
    return SimulationResult(
        header,
        events,
        gt,
        config,
        counts["puck"],
        counts["pattern"],
        counts["paddle"],
        counts["noise"],
        vel,
    )


# -- scenario presets ---------------------------------------------------------

TABLE_STARS = (
    Star(150, 120, 24, 10, 5, 0.2),
    Star(490, 125, 22, 9, 5, 0.5),
    Star(140, 375, 28, 11, 5, 0.1),
    Star(500, 380, 28, 11, 5, 0.7),
    Star(320, 100, 18, 8, 5, 0.3),
    Star(320, 400, 26, 10, 5, 0.9),
    Star(110, 250, 20, 8, 5, 0.4),
    Star(530, 250, 20, 8, 5, 0.6),
)


def scenario(kind: str, seed: int, duration_s: float = 10.0, **overrides) -> SceneConfig:
    """Preset static-camera or moving-camera scene with seeded puck launch."""
    rng = np.random.default_rng(seed)
    speed = rng.uniform(350.0, 650.0)
    angle = rng.uniform(0, 2 * np.pi)
    pos = (320.0 + rng.uniform(-30, 30), 250.0 + rng.uniform(-20, 20))
    base = dict(
        puck_pos=pos,
        puck_vel=(speed * math.cos(angle), speed * math.sin(angle)),
        stars=TABLE_STARS,
        duration_s=duration_s,
        seed=seed,
    )
    if kind == "static":
        base.update(paddle=True, jitter_deg=0.0)
    elif kind == "moving":
        # printed high-contrast texture fires several events per edge crossing
        base.update(border=True, jitter_deg=6.0, paddle=False, pattern_density=3.0)
    else:
        raise SceneConfigError(f"unknown scenario kind {kind!r}")
    base.update(overrides)
    return SceneConfig(**base)


def config_values(config: SceneConfig) -> dict:
    """Flat dict of a config for key = value serialisation."""
    out = {}
    for f in dataclasses.fields(config):
        v = getattr(config, f.name)
        if isinstance(v, SizeModel):
            v = tuple(v.as_dict().values())
        elif f.name == "stars":
            v = tuple(dataclasses.astuple(s) for s in v)
        out[f.name] = v
    return out
