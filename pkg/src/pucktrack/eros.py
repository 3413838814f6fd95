"""Exponential reduced ordinal surface (EROS).

Each event multiplies every cell of its (2k+1)x(2k+1) neighbourhood by
``d = 0.3 ** (1 / k)`` (truncating to an integer) and then sets its own
pixel to 255.  Cells are ``uint8``; decay goes through a lookup table so the
compiled update loop never touches floating point: the table is replayed
exactly as a 16-bit multiply-shift, which vectorises.

One thread may call :meth:`ErosSurface.update_batch` while another reads
with :meth:`ErosSurface.snapshot_roi` / :meth:`ErosSurface.blurred_roi`.
Cell writes are single bytes or aligned 16-bit words, so every value a
reader sees was stored at that cell at some point.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy import ndimage

DECAY_BASE = 0.3
BLUR_SIZE = 5
BLUR_SIGMA = 1.0


@dataclass(frozen=True)
class Roi:
    x: int
    y: int
    w: int
    h: int

    def clip(self, width: int, height: int) -> "Roi":
        x0 = max(self.x, 0)
        y0 = max(self.y, 0)
        x1 = min(self.x + self.w, width)
        y1 = min(self.y + self.h, height)
        return Roi(x0, y0, max(x1 - x0, 0), max(y1 - y0, 0))

    @property
    def empty(self) -> bool:
        return self.w <= 0 or self.h <= 0

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + (self.w - 1) / 2.0, self.y + (self.h - 1) / 2.0)

    @classmethod
    def centered(cls, cx: float, cy: float, w: int, h: int) -> "Roi":
        return cls(int(round(cx)) - w // 2, int(round(cy)) - h // 2, w, h)


class EmptyRoiError(ValueError):
    pass


def decay_factor(k_eros: int) -> float:
    return DECAY_BASE ** (1.0 / k_eros)


def decay_table(k_eros: int) -> np.ndarray:
    d = decay_factor(k_eros)
    return np.array([int(v * d) for v in range(256)], dtype=np.uint8)


def _pair_table(lut: np.ndarray) -> np.ndarray:
    v = np.arange(65536, dtype=np.uint32)
    lo = lut[v & 0xFF].astype(np.uint16)
    hi = lut[v >> 8].astype(np.uint16)
    return (lo | (hi << 8)).astype(np.uint16)


def decay_multiplier(lut: np.ndarray) -> int:
    """Integer ``m`` with ``(v * m) >> 16 == lut[v]`` for every byte, or 0 if none exists.

    The multiply-shift form vectorises; the table form is the fallback.
    """
    v = np.arange(256, dtype=np.int64)
    guess = int(round(lut[255] / 255.0 * 65536))
    for m in sorted(range(max(guess - 512, 1), min(guess + 512, 65536)), key=lambda c: abs(c - guess)):
        if np.array_equal((v * m) >> 16, lut):
            return m
    return 0


@functools.lru_cache(maxsize=None)
def _tables(k_eros: int):
    # shared, read-only: building the pair table dominates surface construction
    lut = decay_table(k_eros)
    lut16 = _pair_table(lut)
    lut.flags.writeable = False
    lut16.flags.writeable = False
    return lut, lut16, decay_multiplier(lut)


@numba.njit(nogil=True, cache=True, boundscheck=False)
def _update_mul(flat, mul, xs, ys, k, width, height, progress):
    n = xs.shape[0]
    m = np.uint32(np.uint16(mul))
    base = progress[0]
    for i in range(n):
        vx = np.int64(xs[i])
        vy = np.int64(ys[i])
        x0 = max(vx - k, 0)
        x1 = min(vx + k + 1, width)
        y0 = max(vy - k, 0)
        y1 = min(vy + k + 1, height)
        for y in range(y0, y1):
            row = flat[y * width + x0 : y * width + x1]
            for c in range(row.shape[0]):
                row[c] = np.uint8((np.uint32(np.uint16(row[c]) * m)) >> 16)
        flat[vy * width + vx] = 255
        # stored, never re-read, so the loop keeps its counters in registers
        progress[0] = base + i + 1
        progress[1] = i


@numba.njit(nogil=True, cache=True, boundscheck=False)
def _update_lut(flat, flat16, lut, lut16, xs, ys, k, width, height, progress):
    n = xs.shape[0]
    base = progress[0]
    for i in range(n):
        vx = np.int64(xs[i])
        vy = np.int64(ys[i])
        x0 = max(vx - k, 0)
        x1 = min(vx + k + 1, width)
        y0 = max(vy - k, 0)
        y1 = min(vy + k + 1, height)
        for y in range(y0, y1):
            a = y * width + x0
            b = y * width + x1
            if a & 1:
                flat[a] = lut[flat[a]]
                a += 1
            if b & 1:
                b -= 1
                flat[b] = lut[flat[b]]
            for j in range(a >> 1, b >> 1):
                flat16[j] = lut16[flat16[j]]
        flat[vy * width + vx] = 255
        progress[0] = base + i + 1
        progress[1] = i


@numba.njit(nogil=True, cache=True)
def _update_events(flat, flat16, lut, lut16, mul, xs, ys, k, width, height, progress):
    # progress[0] <- events applied so far, progress[1] <- last applied index
    if mul > 0:
        _update_mul(flat, mul, xs, ys, k, width, height, progress)
    else:
        _update_lut(flat, flat16, lut, lut16, xs, ys, k, width, height, progress)


class ErosSurface:
    """Width x height ``uint8`` surface updated event by event."""

    def __init__(self, width: int, height: int, k_eros: int = 8):
        if k_eros < 1:
            raise ValueError("k_eros must be >= 1")
        self.width = int(width)
        self.height = int(height)
        self.k_eros = int(k_eros)
        self.d = decay_factor(self.k_eros)
        self._lut, self._lut16, self._mul = _tables(self.k_eros)
        n = self.width * self.height
        # even-length backing store so the whole buffer has a uint16 view
        self._buf = np.zeros(n + (n & 1), dtype=np.uint8)
        self._buf16 = self._buf.view(np.uint16)
        self.cells = self._buf[:n].reshape(self.height, self.width)
        self._scratch_progress = np.zeros(2, dtype=np.int64)

    def reset(self) -> None:
        self._buf[:] = 0

    def update(self, x: int, y: int) -> None:
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise ValueError(f"event ({x}, {y}) outside {self.width}x{self.height}")
        self.update_batch(np.array([x], np.int64), np.array([y], np.int64))

    def update_batch(self, xs, ys, progress: np.ndarray | None = None) -> None:
        """Apply events in order.  Releases the GIL for the whole batch.

        ``progress`` (int64[2], optional) is incremented per applied event so
        a concurrent reader can tell how far the batch has got.
        """
        if progress is None:
            progress = self._scratch_progress
        _update_events(
            self._buf,
            self._buf16,
            self._lut,
            self._lut16,
            self._mul,
            xs,
            ys,
            self.k_eros,
            self.width,
            self.height,
            progress,
        )

    @property
    def buffers(self):
        """Backing arrays and decay tables, for compiled callers of ``_update_events``."""
        return self._buf, self._buf16, self._lut, self._lut16, self._mul

    def update_events(self, events: np.ndarray, progress=None) -> None:
        self.update_batch(events["x"], events["y"], progress)

    def _clip(self, roi: Roi) -> Roi:
        clipped = roi.clip(self.width, self.height)
        if clipped.empty:
            raise EmptyRoiError(f"{roi} does not overlap the {self.width}x{self.height} frame")
        return clipped

    def snapshot_roi(self, roi: Roi) -> np.ndarray:
        r = self._clip(roi)
        return self.cells[r.y : r.y + r.h, r.x : r.x + r.w].copy()

    def blurred_roi(self, roi: Roi) -> np.ndarray:
        """Gaussian-smoothed float copy of the clipped ROI (5x5, sigma 1)."""
        return gaussian_blur(self.snapshot_roi(roi))

    def to_pgm(self, path) -> None:
        with open(Path(path), "wb") as fh:
            fh.write(f"P5\n{self.width} {self.height}\n255\n".encode("ascii"))
            fh.write(self.cells.tobytes())


def gaussian_taps(size: int = BLUR_SIZE, sigma: float = BLUR_SIGMA) -> np.ndarray:
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


_TAPS = gaussian_taps()


def gaussian_blur(patch: np.ndarray) -> np.ndarray:
    """Separable normalised Gaussian blur with replicate-edge padding."""
    out = np.asarray(patch, dtype=np.float64)
    out = ndimage.correlate1d(out, _TAPS, axis=0, mode="nearest")
    return ndimage.correlate1d(out, _TAPS, axis=1, mode="nearest")


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError("not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError("only 8-bit PGM supported")
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=m.end()).reshape(h, w)
