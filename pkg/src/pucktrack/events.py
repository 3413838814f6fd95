"""Event stream types and file formats.

Events live in numpy structured arrays (``EVENT_DTYPE``) so that the hot
paths can hand them to compiled kernels without conversion.  Two on-disk
formats are supported:

* binary ``.evs``: a 32-byte header followed by packed 13-byte records
  (``t`` u64, ``x`` u16, ``y`` u16, ``p`` u8), all little-endian;
* CSV: ``t,x,y,p`` rows preceded by a ``# width=.. height=.. duration=..``
  comment line.

Ground truth is always CSV with columns ``t,cx,cy,a,b``.
"""

from __future__ import annotations

import csv
import io
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

MAGIC = b"EVS1"
FORMAT_VERSION = 1
HEADER_STRUCT = struct.Struct("<4sHHIIQQ")
HEADER_SIZE = HEADER_STRUCT.size  # 32

EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])
RECORD_SIZE = EVENT_DTYPE.itemsize  # 13, packed

GT_DTYPE = np.dtype(
    [("t", "<u8"), ("cx", "<f8"), ("cy", "<f8"), ("a", "<f8"), ("b", "<f8")]
)

DEFAULT_WIDTH = 640
DEFAULT_HEIGHT = 480


class StreamFormatError(ValueError):
    """Malformed stream or ground-truth file."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class StreamValidationError(ValueError):
    """Well-formed data that breaks a stream invariant."""


class Event(NamedTuple):
    x: int
    y: int
    t: int
    p: bool


@dataclass(frozen=True)
class StreamHeader:
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    duration: int = 0
    event_count: int = 0


class GroundTruthSample(NamedTuple):
    t: int
    cx: float
    cy: float
    a: float
    b: float


def make_events(t, x, y, p=None) -> np.ndarray:
    """Build an ``EVENT_DTYPE`` array from column sequences."""
    t = np.asarray(t)
    ev = np.empty(t.shape[0], dtype=EVENT_DTYPE)
    ev["t"] = t
    ev["x"] = x
    ev["y"] = y
    ev["p"] = 0 if p is None else p
    return ev


def events_from_tuples(events: Sequence[Event]) -> np.ndarray:
    if len(events) == 0:
        return np.empty(0, dtype=EVENT_DTYPE)
    x, y, t, p = zip(*events)
    return make_events(t, x, y, p)


def validate_events(events: np.ndarray, width: int, height: int) -> None:
    if events.dtype != EVENT_DTYPE:
        raise StreamValidationError(f"expected EVENT_DTYPE, got {events.dtype}")
    if len(events) == 0:
        return
    t = events["t"]
    bad = np.flatnonzero(t[1:] < t[:-1])
    if bad.size:
        i = int(bad[0]) + 1
        raise StreamValidationError(
            f"timestamp regression at event {i}: {int(t[i - 1])} -> {int(t[i])}"
        )
    out = np.flatnonzero((events["x"] >= width) | (events["y"] >= height))
    if out.size:
        i = int(out[0])
        raise StreamValidationError(
            f"event {i} at ({int(events['x'][i])}, {int(events['y'][i])}) "
            f"outside {width}x{height}"
        )


def _is_csv(path: Path, fmt: str | None) -> bool:
    if fmt is not None:
        if fmt not in ("binary", "csv"):
            raise ValueError(f"unknown stream format {fmt!r}")
        return fmt == "csv"
    return path.suffix.lower() in (".csv", ".txt")


def write_stream(
    header: StreamHeader,
    events: np.ndarray,
    path: str | os.PathLike,
    fmt: str | None = None,
) -> None:
    """Write ``events`` to ``path``; the header's event_count is taken from the data."""
    path = Path(path)
    events = np.asarray(events)
    if events.dtype != EVENT_DTYPE:
        events = events.astype(EVENT_DTYPE)
    validate_events(events, header.width, header.height)
    duration = header.duration
    if len(events) and duration < int(events["t"][-1]):
        duration = int(events["t"][-1])

    if _is_csv(path, fmt):
        with open(path, "w", newline="") as fh:
            fh.write(
                f"# width={header.width} height={header.height} "
                f"duration={duration}\n"
            )
            fh.write("t,x,y,p\n")
            if len(events):
                np.savetxt(
                    fh,
                    np.column_stack(
                        [events["t"], events["x"], events["y"], events["p"]]
                    ),
                    fmt="%d",
                    delimiter=",",
                )
        return

    raw = HEADER_STRUCT.pack(
        MAGIC,
        FORMAT_VERSION,
        RECORD_SIZE,
        header.width,
        header.height,
        duration,
        len(events),
    )
    with open(path, "wb") as fh:
        fh.write(raw)
        fh.write(np.ascontiguousarray(events).tobytes())


def read_stream(
    path: str | os.PathLike, fmt: str | None = None
) -> tuple[StreamHeader, np.ndarray]:
    path = Path(path)
    if _is_csv(path, fmt):
        return _read_stream_csv(path)

    data = path.read_bytes()
    if len(data) < HEADER_SIZE:
        raise StreamFormatError("truncated header", offset=len(data))
    magic, version, rec, width, height, duration, count = HEADER_STRUCT.unpack_from(
        data, 0
    )
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}", offset=0)
    if version != FORMAT_VERSION:
        raise StreamFormatError(f"unsupported version {version}", offset=4)
    if rec != RECORD_SIZE:
        raise StreamFormatError(f"unexpected record size {rec}", offset=6)
    body = len(data) - HEADER_SIZE
    expected = count * RECORD_SIZE
    if body != expected:
        # offset of the first record that is missing or partial / superfluous
        offset = HEADER_SIZE + min(body, expected) // RECORD_SIZE * RECORD_SIZE
        raise StreamFormatError(
            f"header declares {count} events but body holds {body} bytes",
            offset=offset,
        )
    events = np.frombuffer(data, dtype=EVENT_DTYPE, count=count, offset=HEADER_SIZE)
    events = events.copy()
    header = StreamHeader(width, height, duration, count)
    validate_events(events, width, height)
    return header, events


def _read_stream_csv(path: Path) -> tuple[StreamHeader, np.ndarray]:
    width, height, duration = DEFAULT_WIDTH, DEFAULT_HEIGHT, 0
    rows = []
    offset = 0
    with open(path, "rb") as fh:
        for line in fh:
            text = line.decode("ascii", errors="replace").strip()
            if text.startswith("#"):
                for tok in text[1:].split():
                    key, _, val = tok.partition("=")
                    if key == "width":
                        width = int(val)
                    elif key == "height":
                        height = int(val)
                    elif key == "duration":
                        duration = int(val)
            elif text and not text.startswith("t,"):
                parts = text.split(",")
                if len(parts) != 4:
                    raise StreamFormatError(f"expected 4 fields, got {len(parts)}", offset)
                try:
                    rows.append([int(v) for v in parts])
                except ValueError:
                    raise StreamFormatError(f"non-integer field in {text!r}", offset) from None
            offset += len(line)
    if rows:
        arr = np.asarray(rows, dtype=np.int64)
        if (arr < 0).any():
            raise StreamValidationError("negative value in event record")
        events = make_events(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3] != 0)
    else:
        events = np.empty(0, dtype=EVENT_DTYPE)
    validate_events(events, width, height)
    return StreamHeader(width, height, duration, len(events)), events


def gt_array(samples: Sequence[GroundTruthSample]) -> np.ndarray:
    arr = np.empty(len(samples), dtype=GT_DTYPE)
    for i, s in enumerate(samples):
        arr[i] = tuple(s)
    return arr


def write_ground_truth(samples, path: str | os.PathLike) -> None:
    if not isinstance(samples, np.ndarray):
        samples = gt_array(samples)
    t = samples["t"]
    if len(t) > 1 and (np.diff(t.astype(np.int64)) <= 0).any():
        raise StreamValidationError("ground truth timestamps must strictly increase")
    if len(samples) and ((samples["a"] <= 0).any() or (samples["b"] <= 0).any()):
        raise StreamValidationError("half-axes must be positive")
    with open(path, "w", newline="") as fh:
        fh.write("t,cx,cy,a,b\n")
        if len(samples):
            buf = io.StringIO()
            np.savetxt(
                buf,
                np.column_stack(
                    [samples["cx"], samples["cy"], samples["a"], samples["b"]]
                ),
                fmt="%.9f",
                delimiter=",",
            )
            for ti, line in zip(t, buf.getvalue().splitlines()):
                fh.write(f"{int(ti)},{line}\n")


def read_ground_truth(path: str | os.PathLike) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or row[0].startswith("#") or row[0] == "t":
                continue
            if len(row) != 5:
                raise StreamFormatError(f"line {lineno}: expected 5 fields")
            try:
                rows.append((int(row[0]), *(float(v) for v in row[1:])))
            except ValueError:
                raise StreamFormatError(f"line {lineno}: unparsable {row!r}") from None
    arr = np.array(rows, dtype=GT_DTYPE) if rows else np.empty(0, dtype=GT_DTYPE)
    if len(arr) > 1 and (np.diff(arr["t"].astype(np.int64)) <= 0).any():
        raise StreamValidationError("ground truth timestamps must strictly increase")
    return arr
