"""Ellipse ring kernels, the affine puck-size model and the kernel bank."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

RING_TAU = 0.15
MIN_AXIS = 2.0
SATURATION = 255.0


class KernelError(ValueError):
    pass


class CalibrationError(ValueError):
    pass


def surround_margin(a: float, b: float) -> int:
    return max(2, math.ceil(0.3 * max(a, b)))


def classify_offsets(dx, dy, a: float, b: float, tau: float = RING_TAU) -> np.ndarray:
    """Label offsets from the ellipse centre: 1 ring, 0 inside, -1 outside."""
    r = np.sqrt(np.asarray(dx, float) ** 2 / a**2 + np.asarray(dy, float) ** 2 / b**2)
    labels = np.full(r.shape, -1, dtype=np.int8)
    labels[np.abs(r - 1.0) <= tau] = 1
    labels[r < 1.0 - tau] = 0
    return labels


@dataclass(frozen=True)
class PuckKernel:
    a: float
    b: float
    weights: np.ndarray = field(repr=False)
    w_neg: float
    ring_count: int
    tau: float = RING_TAU

    @property
    def half_width(self) -> int:
        return self.weights.shape[1] // 2

    @property
    def half_height(self) -> int:
        return self.weights.shape[0] // 2

    @property
    def shape(self) -> tuple[int, int]:
        """(rows, cols) of the weight matrix."""
        return self.weights.shape

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    @property
    def height(self) -> int:
        return self.weights.shape[0]

    @cached_property
    def runs(self) -> np.ndarray:
        """Non-zero constant stretches of each weight row as ``(row, c0, c1, value)``."""
        out = []
        for u, row in enumerate(self.weights):
            c0 = 0
            for c in range(1, len(row) + 1):
                if c == len(row) or row[c] != row[c0]:
                    if row[c0] != 0.0:
                        out.append((u, c0, c, row[c0]))
                    c0 = c
        return np.array(out, dtype=np.float64).reshape(-1, 4)

    @property
    def norm(self) -> float:
        """Divisor mapping a raw response to a score (a full saturated ring -> 1)."""
        return SATURATION * self.ring_count


def build_kernel(
    a: float,
    b: float,
    w_neg: float | None = None,
    tau: float = RING_TAU,
    margin: int | None = None,
) -> PuckKernel:
    """Ring template for an ellipse with half-axes ``a`` (x) and ``b`` (y).

    Weights are 1 on the ring ``|sqrt(e) - 1| <= tau``, 0 inside and
    ``w_neg`` outside.  With ``w_neg=None`` the surround is scaled so the
    weights sum to zero.
    """
    if a < MIN_AXIS or b < MIN_AXIS:
        raise KernelError(f"half-axes ({a}, {b}) below the {MIN_AXIS} px minimum")
    if margin is None:
        margin = surround_margin(a, b)
    hw = math.ceil(a + margin)
    hh = math.ceil(b + margin)
    dy, dx = np.mgrid[-hh : hh + 1, -hw : hw + 1]
    labels = classify_offsets(dx, dy, a, b, tau)
    ring = int((labels == 1).sum())
    outside = int((labels == -1).sum())
    if w_neg is None:
        w_neg = -ring / outside if outside else 0.0
    weights = np.zeros(labels.shape, dtype=np.float64)
    weights[labels == 1] = 1.0
    weights[labels == -1] = w_neg
    weights.setflags(write=False)
    return PuckKernel(float(a), float(b), weights, float(w_neg), ring, tau)


@dataclass(frozen=True)
class SizeModel:
    """Affine half-axis model ``a = k0 + k1 x + k2 y``, ``b = h0 + h1 x + h2 y``."""

    k0: float
    k1: float
    k2: float
    h0: float
    h1: float
    h2: float

    def predict(self, x, y):
        a = self.k0 + self.k1 * x + self.k2 * y
        b = self.h0 + self.h1 * x + self.h2 * y
        return a, b

    def as_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in ("k0", "k1", "k2", "h0", "h1", "h2")}

    def save(self, path) -> None:
        lines = [f"{k} = {float(v)!r}" for k, v in self.as_dict().items()]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "SizeModel":
        from .config import read_key_values

        values = read_key_values(path)
        try:
            return cls(**{k: float(values[k]) for k in ("k0", "k1", "k2", "h0", "h1", "h2")})
        except KeyError as exc:
            raise CalibrationError(f"{path}: missing coefficient {exc}") from None


@dataclass(frozen=True)
class SizeFitStats:
    n: int
    rms_a: float
    rms_b: float
    max_abs_a: float
    max_abs_b: float


def fit_size_model(observations) -> tuple[SizeModel, SizeFitStats]:
    """Least-squares fit of the two affine size models to ``(x, y, a, b)`` rows."""
    obs = np.asarray(observations, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[1] != 4:
        raise CalibrationError("observations must be rows of (x, y, a, b)")
    if len(obs) < 3:
        raise CalibrationError(f"need at least 3 observations, got {len(obs)}")
    design = np.column_stack([np.ones(len(obs)), obs[:, 0], obs[:, 1]])
    targets = obs[:, 2:4]
    coef, _, rank, _ = np.linalg.lstsq(design, targets, rcond=None)
    if rank < 3:
        raise CalibrationError("observation positions are collinear; size model is underdetermined")
    resid = targets - design @ coef
    model = SizeModel(*(float(c) for c in coef[:, 0]), *(float(c) for c in coef[:, 1]))
    stats = SizeFitStats(
        n=len(obs),
        rms_a=float(np.sqrt(np.mean(resid[:, 0] ** 2))),
        rms_b=float(np.sqrt(np.mean(resid[:, 1] ** 2))),
        max_abs_a=float(np.abs(resid[:, 0]).max()),
        max_abs_b=float(np.abs(resid[:, 1]).max()),
    )
    return model, stats


def read_observations(path) -> np.ndarray:
    """Calibration CSV with ``x,y,a,b`` rows (header optional)."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line[0].isalpha():
            continue
        rows.append([float(v) for v in line.split(",")])
    return np.asarray(rows, dtype=np.float64).reshape(-1, 4)


def write_observations(obs, path) -> None:
    obs = np.asarray(obs, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("x,y,a,b\n")
        np.savetxt(fh, obs, fmt="%.6f", delimiter=",")


def _round_half_down(v: float) -> int:
    return math.ceil(v - 0.5)


class KernelBank:
    """Kernels precomputed on a regular (a, b) grid."""

    def __init__(
        self,
        a_range: tuple[float, float],
        b_range: tuple[float, float],
        step: float = 1.0,
        w_neg: float | None = None,
        tau: float = RING_TAU,
    ):
        self.step = float(step)
        self.a0 = max(math.floor(a_range[0] / step) * step, MIN_AXIS)
        self.b0 = max(math.floor(b_range[0] / step) * step, MIN_AXIS)
        self.na = max(1, math.ceil((a_range[1] - self.a0) / step - 1e-9) + 1)
        self.nb = max(1, math.ceil((b_range[1] - self.b0) / step - 1e-9) + 1)
        self.kernels = [
            [build_kernel(self.a0 + i * step, self.b0 + j * step, w_neg, tau) for j in range(self.nb)]
            for i in range(self.na)
        ]

    @classmethod
    def for_region(
        cls,
        model: SizeModel,
        corners: Iterable[Sequence[float]],
        step: float = 1.0,
        **kwargs,
    ) -> "KernelBank":
        """Bank covering every size the model predicts over a convex region.

        The model is affine, so the extremes over a polygon are at its corners.
        """
        pts = np.asarray(list(corners), dtype=np.float64)
        a, b = model.predict(pts[:, 0], pts[:, 1])
        return cls((a.min(), a.max()), (b.min(), b.max()), step, **kwargs)

    @property
    def a_values(self) -> np.ndarray:
        return self.a0 + self.step * np.arange(self.na)

    @property
    def b_values(self) -> np.ndarray:
        return self.b0 + self.step * np.arange(self.nb)

    def nearest(self, a: float, b: float) -> tuple[PuckKernel, bool]:
        """Closest kernel to (a, b); ties go to the smaller size.

        Returns the kernel and whether the request fell outside the grid.
        """
        i = _round_half_down((a - self.a0) / self.step)
        j = _round_half_down((b - self.b0) / self.step)
        ic = min(max(i, 0), self.na - 1)
        jc = min(max(j, 0), self.nb - 1)
        return self.kernels[ic][jc], (ic != i or jc != j)

    def __len__(self) -> int:
        return self.na * self.nb


def kernel_for(bank: KernelBank, model: SizeModel, x: float, y: float) -> PuckKernel:
    a, b = model.predict(x, y)
    kernel, clamped = bank.nearest(a, b)
    if clamped:
        logger.debug("size (%.2f, %.2f) at (%.1f, %.1f) outside kernel bank; clamped", a, b, x, y)
    return kernel
