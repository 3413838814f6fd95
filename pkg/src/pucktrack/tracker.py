"""Detection and tracking of the puck on the EROS surface.

The tracker is a two-mode state machine.  While *detecting* it correlates a
fixed kernel over the detection ROI and waits for a persistent peak.  While
*tracking* it correlates the size-appropriate kernel over a small ROI around
the last position, weights the response with a Gaussian prior centred on
that position and takes the argmax inside a restricted central window.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from .eros import ErosSurface, Roi
from .kernel import KernelBank, PuckKernel, SizeModel, kernel_for

DETECTING = "detecting"
TRACKING = "tracking"


class PatchTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class ResponseMap:
    """Normalised correlation scores.

    ``scores[i, j]`` is the score with the kernel centred on frame pixel
    ``(origin_x + j, origin_y + i)``.
    """

    scores: np.ndarray
    origin_x: int = 0
    origin_y: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape

    def frame_coords(self, i: int, j: int) -> tuple[int, int]:
        return self.origin_x + j, self.origin_y + i


@numba.njit(nogil=True, cache=True, boundscheck=False)
def _correlate_runs(patch, runs, kh, kw):
    # each kernel row is a few constant stretches, so one row costs a handful
    # of prefix-sum differences instead of kw multiplies
    ph, pw = patch.shape
    oh = ph - kh + 1
    ow = pw - kw + 1
    csum = np.zeros((ph, pw + 1), dtype=np.float64)
    for r in range(ph):
        acc = 0.0
        for c in range(pw):
            acc += patch[r, c]
            csum[r, c + 1] = acc
    out = np.zeros((oh, ow), dtype=np.float64)
    for k in range(runs.shape[0]):
        u = int(runs[k, 0])
        c0 = int(runs[k, 1])
        c1 = int(runs[k, 2])
        v = runs[k, 3]
        for i in range(oh):
            src = csum[i + u]
            dst = out[i]
            for j in range(ow):
                dst[j] += v * (src[j + c1] - src[j + c0])
    return out


def convolve(patch: np.ndarray, kernel: PuckKernel, origin: tuple[int, int] = (0, 0)) -> ResponseMap:
    """Valid-region cross-correlation of ``patch`` with ``kernel``, as scores.

    ``origin`` is the frame position of ``patch[0, 0]``.
    """
    patch = np.ascontiguousarray(patch, dtype=np.float64)
    kh, kw = kernel.shape
    if patch.shape[0] < kh or patch.shape[1] < kw:
        raise PatchTooSmallError(f"patch {patch.shape} smaller than kernel {kernel.shape}")
    raw = _correlate_runs(patch, kernel.runs, kh, kw)
    return ResponseMap(
        raw / kernel.norm,
        origin[0] + kernel.half_width,
        origin[1] + kernel.half_height,
    )


def gaussian_prior(
    center: tuple[float, float],
    sigma_x: float,
    sigma_y: float,
    origin: tuple[int, int],
    shape: tuple[int, int],
) -> np.ndarray:
    """Unnormalised 2D Gaussian (peak 1) evaluated on a pixel grid.

    The grid has ``shape`` (rows, cols) and its first element sits at frame
    position ``origin`` (x, y).
    """
    xs = origin[0] + np.arange(shape[1]) - center[0]
    ys = origin[1] + np.arange(shape[0]) - center[1]
    gx = np.exp(-(xs**2) / (2.0 * sigma_x**2))
    gy = np.exp(-(ys**2) / (2.0 * sigma_y**2))
    return np.outer(gy, gx)


def argmax_first(values: np.ndarray) -> tuple[int, int]:
    """Row-major first maximum (np.argmax already breaks ties this way)."""
    idx = int(np.argmax(values))
    return divmod(idx, values.shape[1])


@dataclass(frozen=True)
class TrackerConfig:
    roi_d: Roi = Roi(220, 190, 200, 120)
    # a moving puck only keeps a thin, partly decayed outline on the surface,
    # so real peaks score well below the 1.0 of a saturated ring
    det_threshold: float = 0.04
    det_persistence: int = 3
    lost_threshold: float = 0.01
    lost_persistence: int = 10
    roi_scale: float = 1.5
    prior_sigma_fraction: float = 0.5
    argmax_fraction: float = 0.5
    redetect: bool = True
    det_radius: float = 2.0

    def __post_init__(self):
        if isinstance(self.roi_d, (tuple, list)):
            object.__setattr__(self, "roi_d", Roi(*self.roi_d))
        if not 0 < self.lost_threshold < self.det_threshold <= 1:
            raise ValueError("need 0 < lost_threshold < det_threshold <= 1")
        if self.roi_scale <= 1:
            raise ValueError("roi_scale must exceed 1")
        if not 0 < self.argmax_fraction < 1:
            raise ValueError("argmax_fraction must be in (0, 1)")
        if self.det_persistence < 1 or self.lost_persistence < 1:
            raise ValueError("persistence counts must be >= 1")


@dataclass(frozen=True)
class TrackerState:
    mode: str = DETECTING
    x: float = math.nan
    y: float = math.nan
    roi_t: Roi | None = None
    kernel: PuckKernel | None = None
    score: float = 0.0
    det_count: int = 0
    lost_count: int = 0
    clamped_lookups: int = 0

    @property
    def position(self) -> tuple[float, float]:
        return self.x, self.y


class PuckReport(NamedTuple):
    t_us: int
    x: float
    y: float
    score: float
    mode: str


class PuckTracker:
    """Detection/tracking logic bound to a size model and kernel bank."""

    def __init__(self, config: TrackerConfig, model: SizeModel, bank: KernelBank):
        self.config = config
        self.model = model
        self.bank = bank
        cx, cy = config.roi_d.center
        self.detection_kernel = kernel_for(bank, model, cx, cy)

    def initial_state(self) -> TrackerState:
        return TrackerState()

    def _kernel_at(self, x: float, y: float) -> tuple[PuckKernel, bool]:
        a, b = self.model.predict(x, y)
        return self.bank.nearest(a, b)

    def roi_for(self, x: float, y: float, kernel: PuckKernel) -> Roi:
        s = self.config.roi_scale
        return Roi.centered(x, y, int(round(s * kernel.width)), int(round(s * kernel.height)))

    def step(self, state: TrackerState, surface: ErosSurface, t_us: int = 0):
        """One pass in whichever mode the state is in; returns (state, report or None)."""
        if state.mode == TRACKING:
            return self.track_pass(state, surface, t_us)
        state = self.detect(state, surface)
        if state.mode == TRACKING:
            return state, PuckReport(t_us, state.x, state.y, state.score, TRACKING)
        return state, None

    def detect(self, state: TrackerState, surface: ErosSurface) -> TrackerState:
        cfg = self.config
        kernel = self.detection_kernel
        roi = cfg.roi_d.clip(surface.width, surface.height)
        if roi.w < kernel.width or roi.h < kernel.height:
            return state
        resp = convolve(surface.blurred_roi(roi), kernel, (roi.x, roi.y))
        i, j = argmax_first(resp.scores)
        score = float(resp.scores[i, j])
        px, py = resp.frame_coords(i, j)
        if score < cfg.det_threshold:
            return dataclasses.replace(state, det_count=0, score=score)
        if state.det_count > 0 and math.hypot(px - state.x, py - state.y) <= cfg.det_radius:
            count = state.det_count + 1
        else:
            count = 1
        if count < cfg.det_persistence:
            return dataclasses.replace(state, det_count=count, x=px, y=py, score=score)
        tk, clamped = self._kernel_at(px, py)
        return TrackerState(
            mode=TRACKING,
            x=float(px),
            y=float(py),
            roi_t=self.roi_for(px, py, tk),
            kernel=tk,
            score=score,
            det_count=count,
            lost_count=0,
            clamped_lookups=state.clamped_lookups + int(clamped),
        )

    def _lost(self, state: TrackerState, score: float) -> TrackerState:
        cfg = self.config
        lost = state.lost_count + 1
        if cfg.redetect and lost >= cfg.lost_persistence:
            return TrackerState(clamped_lookups=state.clamped_lookups)
        return dataclasses.replace(state, lost_count=lost, score=score)

    def response(self, state: TrackerState, surface: ErosSurface) -> ResponseMap | None:
        """Response over the tracking ROI, or None if the clipped ROI cannot hold the kernel."""
        kernel, _ = self._kernel_at(state.x, state.y)
        roi = self.roi_for(state.x, state.y, kernel).clip(surface.width, surface.height)
        if roi.w < kernel.width or roi.h < kernel.height:
            return None
        return convolve(surface.blurred_roi(roi), kernel, (roi.x, roi.y))

    def select_peak(self, state: TrackerState, resp: ResponseMap) -> tuple[int, int]:
        """Prior-weighted argmax inside the restricted window, as indices into ``resp``."""
        kernel, _ = self._kernel_at(state.x, state.y)
        f = self.config.prior_sigma_fraction
        prior = gaussian_prior(
            (state.x, state.y),
            f * 2.0 * kernel.a,
            f * 2.0 * kernel.b,
            (resp.origin_x, resp.origin_y),
            resp.shape,
        )
        rs, cs = self.restricted_window(state, resp)
        i, j = argmax_first((resp.scores * prior)[rs, cs])
        return i + rs.start, j + cs.start

    def restricted_window(self, state: TrackerState, resp: ResponseMap) -> tuple[slice, slice]:
        rows, cols = resp.shape
        rho = self.config.argmax_fraction
        hx = max(1, int(rho * cols / 2))
        hy = max(1, int(rho * rows / 2))
        cj = int(round(state.x)) - resp.origin_x
        ci = int(round(state.y)) - resp.origin_y
        i0, i1 = max(ci - hy, 0), min(ci + hy + 1, rows)
        j0, j1 = max(cj - hx, 0), min(cj + hx + 1, cols)
        if i0 >= i1 or j0 >= j1:
            return slice(0, rows), slice(0, cols)
        return slice(i0, i1), slice(j0, j1)

    def track_pass(self, state: TrackerState, surface: ErosSurface, t_us: int = 0):
        """One tracking pass; returns (new state, report)."""
        resp = self.response(state, surface)
        if resp is None:
            state = self._lost(state, 0.0)
            return state, PuckReport(t_us, state.x, state.y, 0.0, state.mode)
        i, j = self.select_peak(state, resp)
        score = float(resp.scores[i, j])
        px, py = resp.frame_coords(i, j)
        if score < self.config.lost_threshold:
            lost = self._lost(state, score)
            if lost.mode != TRACKING:
                return lost, PuckReport(t_us, state.x, state.y, score, DETECTING)
            lost_count = lost.lost_count
        else:
            lost_count = 0
        kernel, clamped = self._kernel_at(px, py)
        new = dataclasses.replace(
            state,
            x=float(px),
            y=float(py),
            roi_t=self.roi_for(px, py, kernel),
            kernel=kernel,
            score=score,
            lost_count=lost_count,
            clamped_lookups=state.clamped_lookups + int(clamped),
        )
        return new, PuckReport(t_us, new.x, new.y, score, TRACKING)
