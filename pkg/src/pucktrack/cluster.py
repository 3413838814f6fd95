"""Event-by-event cluster tracker used as the low-latency baseline.

Every event within ``gate`` pixels of the current estimate pulls the
position (and the squared-deviation extent) towards it with weight
``beta``; anything further away is ignored.  The tracker does not look at
shape, so any nearby source of events can capture it.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numba
import numpy as np

from .events import Event
from .kernel import SizeModel
from .pipeline import REPORT_DTYPE

DEFAULT_BETA = 0.05
GATE_FACTOR = 1.5


@dataclass(frozen=True)
class ClusterState:
    x: float
    y: float
    sx: float
    sy: float
    gate: float
    beta: float = DEFAULT_BETA
    t: int = 0

    def __post_init__(self):
        if self.gate <= 0:
            raise ValueError("gate radius must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("beta must be in (0, 1)")

    @classmethod
    def seeded(cls, x: float, y: float, model: SizeModel, t: int = 0, beta: float = DEFAULT_BETA):
        """Start at a detection, with the gate scaled to the predicted puck size."""
        a, b = model.predict(x, y)
        return cls(float(x), float(y), float(a), float(b), GATE_FACTOR * max(a, b), beta, int(t))


def cluster_update(state: ClusterState, event: Event) -> ClusterState:
    dx = event.x - state.x
    dy = event.y - state.y
    if math.hypot(dx, dy) > state.gate:
        return state
    b = state.beta
    x = (1 - b) * state.x + b * event.x
    y = (1 - b) * state.y + b * event.y
    sx2 = (1 - b) * state.sx**2 + b * dx * dx
    sy2 = (1 - b) * state.sy**2 + b * dy * dy
    return dataclasses.replace(state, x=x, y=y, sx=math.sqrt(sx2), sy=math.sqrt(sy2), t=int(event.t))


@numba.njit(nogil=True, cache=True)
def _cluster_batch(xs, ys, ts, st, gate, beta, out_t, out_x, out_y, n_out):
    # st = [x, y, sx^2, sy^2, t]
    x = st[0]
    y = st[1]
    sx2 = st[2]
    sy2 = st[3]
    g2 = gate * gate
    k = n_out
    for i in range(xs.shape[0]):
        dx = xs[i] - x
        dy = ys[i] - y
        if dx * dx + dy * dy > g2:
            continue
        x = (1.0 - beta) * x + beta * xs[i]
        y = (1.0 - beta) * y + beta * ys[i]
        sx2 = (1.0 - beta) * sx2 + beta * dx * dx
        sy2 = (1.0 - beta) * sy2 + beta * dy * dy
        out_t[k] = ts[i]
        out_x[k] = x
        out_y[k] = y
        k += 1
        st[4] = ts[i]
    st[0] = x
    st[1] = y
    st[2] = sx2
    st[3] = sy2
    return k


class ClusterTracker:
    """Batch driver for the cluster update; collects one report per accepted event."""

    def __init__(self, state: ClusterState, capacity: int = 1 << 16):
        self.gate = state.gate
        self.beta = state.beta
        self._st = np.array([state.x, state.y, state.sx**2, state.sy**2, state.t], dtype=np.float64)
        self._t = np.empty(capacity, np.uint64)
        self._x = np.empty(capacity, np.float64)
        self._y = np.empty(capacity, np.float64)
        self.count = 0

    @property
    def state(self) -> ClusterState:
        x, y, sx2, sy2, t = self._st
        return ClusterState(x, y, math.sqrt(sx2), math.sqrt(sy2), self.gate, self.beta, int(t))

    def _reserve(self, extra: int) -> None:
        need = self.count + extra
        if need <= len(self._t):
            return
        cap = max(need, 2 * len(self._t))
        for name in ("_t", "_x", "_y"):
            old = getattr(self, name)
            new = np.empty(cap, old.dtype)
            new[: self.count] = old[: self.count]
            setattr(self, name, new)

    def update_batch(self, xs, ys, ts) -> None:
        self._reserve(len(xs))
        self.count = _cluster_batch(
            xs, ys, ts, self._st, self.gate, self.beta, self._t, self._x, self._y, self.count
        )

    def update_events(self, events: np.ndarray) -> None:
        self.update_batch(events["x"], events["y"], events["t"])

    def reports(self) -> np.ndarray:
        out = np.empty(self.count, REPORT_DTYPE)
        out["t"] = self._t[: self.count]
        out["x"] = self._x[: self.count]
        out["y"] = self._y[: self.count]
        out["score"] = 1.0
        out["mode"] = "cluster"
        return out


def run_cluster(events: np.ndarray, init: ClusterState) -> tuple[np.ndarray, ClusterState]:
    """Track from ``init`` over the events that follow ``init.t``."""
    start = int(np.searchsorted(events["t"], init.t, side="right"))
    tracker = ClusterTracker(init)
    tracker.update_events(events[start:])
    seed = np.array([(init.t, init.x, init.y, 1.0, "cluster")], REPORT_DTYPE)
    return np.concatenate([seed, tracker.reports()]), tracker.state
