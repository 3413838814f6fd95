"""Two-stage runtime: event-by-event surface updates plus as-fast-as-possible tracking.

Stage 1 owns the :class:`~pucktrack.eros.ErosSurface` and applies every
event, in order, through a compiled loop that releases the GIL.  It
publishes how many events it has applied in a shared ``int64`` counter.
Stage 2 repeatedly reads the counter, runs a tracker pass on the live
surface and stamps the report with the newest event timestamp that was
already applied when the pass began.  The two stages share nothing else.

Latency is measured in event time: at the end of each update, the span
between the newest event that has *arrived* and the newest one processed.

``mode="seq"`` replaces the threads by a deterministic alternation: apply
all events up to the next pass boundary, then run one pass.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import logging
import math
import os
import sys
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .eros import ErosSurface, _update_events
from .tracker import PuckReport, PuckTracker, TrackerState, TRACKING

logger = logging.getLogger(__name__)

REPORT_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<f8"), ("y", "<f8"), ("score", "<f8"), ("mode", "U9")]
)


def reports_to_array(reports) -> np.ndarray:
    if isinstance(reports, np.ndarray):
        return reports
    arr = np.empty(len(reports), REPORT_DTYPE)
    for i, r in enumerate(reports):
        arr[i] = (r.t_us, r.x, r.y, r.score, r.mode)
    return arr


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "seq"
    k_eros: int = 8
    # seq mode: event time between tracker passes
    pass_period_us: int = 500
    # None: replay as fast as possible; otherwise playback speed factor
    realtime: float | None = None
    # real-time stage 1 sleeps this long between batches, leaving CPU to stage 2
    poll_us: int = 100
    # niceness increment for the stage-2 thread (Linux); keeps the writer from being starved
    reader_nice: int = 19
    track: bool = True

    def __post_init__(self):
        if self.mode not in ("seq", "par"):
            raise ValueError(f"mode must be 'seq' or 'par', not {self.mode!r}")
        if self.realtime is not None and self.realtime <= 0:
            raise ValueError("realtime speed factor must be positive")
        if self.pass_period_us <= 0:
            raise ValueError("pass_period_us must be positive")


class LatencyProbe:
    """Event-time backlog samples for one stage."""

    def __init__(self, name: str = ""):
        self.name = name
        self._samples: list[int] = []

    def measure(self, t_newest_available: int, t_newest_processed: int) -> int:
        lag = max(0, int(t_newest_available) - int(t_newest_processed))
        self._samples.append(lag)
        return lag

    @property
    def samples(self) -> np.ndarray:
        return np.asarray(self._samples, dtype=np.int64)

    def __len__(self) -> int:
        return len(self._samples)


class PlaybackClock:
    """Maps event timestamps to wall-clock release times.

    ``speed=None`` releases everything immediately.
    """

    def __init__(self, t_us: np.ndarray, speed: float | None = None, now: Callable[[], float] = time.perf_counter):
        self.t = np.asarray(t_us, dtype=np.int64)
        self.speed = speed
        self.now = now
        self.t0 = int(self.t[0]) if len(self.t) else 0
        self.start_wall = 0.0

    def start(self) -> None:
        self.start_wall = self.now()

    def event_time_now(self) -> float:
        if self.speed is None:
            return float("inf")
        return self.t0 + (self.now() - self.start_wall) * self.speed * 1e6

    def released(self) -> int:
        """Number of events whose release time has passed."""
        if self.speed is None:
            return len(self.t)
        # an integer key keeps numpy from casting the whole array to float
        now = np.int64(min(math.floor(self.event_time_now()), np.iinfo(np.int64).max))
        return int(np.searchsorted(self.t, now, side="right"))

    def deadline(self, i: int) -> float:
        """Wall-clock release time of event ``i``."""
        if self.speed is None:
            return self.start_wall
        return self.start_wall + (int(self.t[i]) - self.t0) / (self.speed * 1e6)


@dataclass
class PipelineStats:
    stage1_latency_us: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    stage1_backlog_peak_us: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    stage2_latency_us: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    passes: int = 0
    processed: int = 0
    dropped: int = 0
    elapsed_s: float = 0.0
    stage1_elapsed_s: float = 0.0
    stage2_elapsed_s: float = 0.0

    @property
    def throughput_eps(self) -> float:
        return self.processed / self.stage1_elapsed_s if self.stage1_elapsed_s > 0 else 0.0

    @property
    def pass_rate_hz(self) -> float:
        return self.passes / self.stage2_elapsed_s if self.stage2_elapsed_s > 0 else 0.0

    def summary(self) -> dict:
        out = {
            "processed": self.processed,
            "dropped": self.dropped,
            "throughput_eps": self.throughput_eps,
            "passes": self.passes,
            "pass_rate_hz": self.pass_rate_hz,
            "elapsed_s": self.elapsed_s,
        }
        for name in ("stage1_latency_us", "stage2_latency_us", "stage1_backlog_peak_us"):
            s = getattr(self, name)
            key = name.replace("_us", "")
            if len(s):
                out[f"{key}_mean_us"] = float(s.mean())
                out[f"{key}_median_us"] = float(np.median(s))
                out[f"{key}_p99_us"] = float(np.percentile(s, 99))
            else:
                out[f"{key}_mean_us"] = out[f"{key}_median_us"] = out[f"{key}_p99_us"] = float("nan")
        return out

    def format(self) -> str:
        lines = []
        for k, v in self.summary().items():
            lines.append(f"{k:>28}: {v:.6g}" if isinstance(v, float) else f"{k:>28}: {v}")
        return "\n".join(lines)


def _lower_thread_priority(increment: int) -> None:
    if increment <= 0 or not hasattr(os, "setpriority"):
        return
    try:
        tid = threading.get_native_id()
        os.setpriority(os.PRIO_PROCESS, tid, os.getpriority(os.PRIO_PROCESS, tid) + increment)
    except OSError:
        logger.debug("could not renice stage-2 thread")


def drive_stage1(
    apply: Callable[[int, int], None],
    clock: PlaybackClock,
    n: int,
    probe: LatencyProbe,
    peak_probe: LatencyProbe | None = None,
    poll_us: int = 100,
    stop: threading.Event | None = None,
) -> int:
    """Feed events ``[0, n)`` to ``apply(start, stop)`` as the clock releases them.

    Returns the number of events applied.  In as-fast-as-possible mode
    everything is applied in one call and no latency is sampled.
    """
    t = clock.t
    if clock.speed is None:
        apply(0, n)
        return n
    done = 0
    poll = poll_us * 1e-6
    while done < n:
        if stop is not None and stop.is_set():
            break
        avail = clock.released()
        if avail > done:
            if peak_probe is not None:
                peak_probe.measure(t[avail - 1], t[done - 1] if done else clock.t0)
            apply(done, avail)
            done = avail
            after = clock.released()
            probe.measure(t[after - 1], t[done - 1])
            if poll > 0:
                time.sleep(poll)
        else:
            wait = clock.deadline(done) - clock.now()
            if wait > 0:
                time.sleep(min(wait, max(poll, 1e-4)))
    return done


def _load_libc_clock():
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or None, use_errno=True)
        gettime = libc.clock_gettime
        nanosleep = libc.nanosleep
    except (OSError, AttributeError):
        return None
    gettime.argtypes = [ctypes.c_int, ctypes.c_void_p]
    gettime.restype = ctypes.c_int
    nanosleep.argtypes = [ctypes.c_void_p, ctypes.c_void_p]
    nanosleep.restype = ctypes.c_int
    return gettime, nanosleep


_LIBC = _load_libc_clock()
_CLOCK_MONOTONIC = 1  # same clock as time.monotonic_ns on Linux

if _LIBC is not None:
    _clock_gettime, _nanosleep = _LIBC

    @numba.njit(nogil=True)
    def _now_ns(ts):
        _clock_gettime(_CLOCK_MONOTONIC, ts.ctypes)
        return ts[0] * 1_000_000_000 + ts[1]

    @numba.njit(nogil=True)
    def _sleep_ns(ts, ns):
        ts[0] = ns // 1_000_000_000
        ts[1] = ns % 1_000_000_000
        _nanosleep(ts.ctypes, 0)

    # ctypes globals rule out on-disk caching; _warm_playback compiles up front
    @numba.njit(nogil=True, boundscheck=False)
    def _playback(flat, flat16, lut, lut16, mul, xs, ys, t, k, width, height, progress,
                  start_ns, speed, poll_ns, stop, lat, peak):
        # Real-time stage 1 as one GIL-free loop: wake, apply whatever the clock
        # has released, record the backlog, sleep.  Returns (applied, samples).
        n = t.shape[0]
        ts = np.zeros(2, dtype=np.int64)
        t0 = t[0]
        done = 0
        m = 0
        cap = lat.shape[0]
        while done < n and stop[0] == 0:
            now = _now_ns(ts)
            avail = np.searchsorted(t, t0 + np.int64((now - start_ns) * speed / 1000.0), side="right")
            if avail > done:
                prev = t[done - 1] if done > 0 else t0
                _update_events(flat, flat16, lut, lut16, mul, xs[done:avail], ys[done:avail], k, width, height, progress)
                now = _now_ns(ts)
                after = np.searchsorted(t, t0 + np.int64((now - start_ns) * speed / 1000.0), side="right")
                if m < cap:
                    peak[m] = t[avail - 1] - prev
                    lat[m] = t[max(after, avail) - 1] - t[avail - 1]
                    m += 1
                done = avail
                if poll_ns > 0:
                    _sleep_ns(ts, poll_ns)
            else:
                due = start_ns + np.int64((t[done] - t0) * 1000.0 / speed)
                wait = min(max(due - now, 0), max(poll_ns, 100_000))
                _sleep_ns(ts, wait)
        return done, m

else:  # pragma: no cover - non-POSIX fallback uses drive_stage1
    _playback = None


def _warm_playback(surface: ErosSurface) -> None:
    """Compile the playback loop before any clock starts."""
    if _playback is None:
        return
    t = np.zeros(1, np.int64)
    xs = np.zeros(1, np.uint16)
    scratch = ErosSurface(2, 2, surface.k_eros)
    flat, flat16, lut, lut16, mul = scratch.buffers
    out = np.zeros(1, np.int64)
    _playback(flat, flat16, lut, lut16, mul, xs, xs, t, scratch.k_eros, 2, 2, np.zeros(2, np.int64),
              0, 1.0, 0, np.zeros(1, np.int64), out, out.copy())


def run(events: np.ndarray, tracker: PuckTracker | None, config: PipelineConfig, width: int = 640, height: int = 480):
    """Run both stages over ``events``; returns ``(reports, stats, surface)``."""
    surface = ErosSurface(width, height, config.k_eros)
    if config.mode == "seq":
        reports, stats = _run_sequential(events, tracker, surface, config)
    else:
        reports, stats = _run_parallel(events, tracker, surface, config)
    return reports, stats, surface


def _run_sequential(events, tracker, surface, config):
    t = events["t"].astype(np.int64)
    xs = np.ascontiguousarray(events["x"])
    ys = np.ascontiguousarray(events["y"])
    n = len(events)
    stats = PipelineStats()
    reports: list[PuckReport] = []
    if n == 0:
        return reports, stats
    state = tracker.initial_state() if tracker is not None else None
    period = config.pass_period_us
    boundaries = np.arange(int(t[0]) + period, int(t[-1]) + period, period, dtype=np.int64)
    cuts = np.searchsorted(t, boundaries, side="right")
    lat2 = LatencyProbe("stage2")
    start = time.perf_counter()
    done = 0
    for bound, cut in zip(boundaries, cuts):
        if cut > done:
            surface.update_batch(xs[done:cut], ys[done:cut])
            done = int(cut)
        elif done:
            continue  # surface unchanged since the last pass
        if tracker is None or not config.track:
            continue
        t_proc = int(t[done - 1]) if done else 0
        state, rep = tracker.step(state, surface, t_proc)
        stats.passes += 1
        lat2.measure(min(int(bound), int(t[-1])), t_proc)
        if rep is not None:
            reports.append(rep)
    if done < n:
        surface.update_batch(xs[done:], ys[done:])
        done = n
    stats.elapsed_s = stats.stage1_elapsed_s = stats.stage2_elapsed_s = time.perf_counter() - start
    stats.processed = done
    stats.stage2_latency_us = lat2.samples
    return reports, stats


def _run_parallel(events, tracker, surface, config):
    t = events["t"].astype(np.int64)
    xs = np.ascontiguousarray(events["x"])
    ys = np.ascontiguousarray(events["y"])
    n = len(events)
    stats = PipelineStats()
    reports: list[PuckReport] = []
    if n == 0:
        return reports, stats

    progress = np.zeros(2, dtype=np.int64)
    clock = PlaybackClock(t, config.realtime, now=time.monotonic)
    lat1, peak1, lat2 = LatencyProbe("stage1"), LatencyProbe("stage1-peak"), LatencyProbe("stage2")
    finished = threading.Event()
    stop_flag = np.zeros(1, dtype=np.int64)
    errors: list[BaseException] = []
    timing = {}

    def apply(i0, i1):
        surface.update_batch(xs[i0:i1], ys[i0:i1], progress)

    def compiled_playback():
        span_s = (int(t[-1]) - int(t[0])) / (config.realtime * 1e6)
        cap = min(n, int(span_s / max(config.poll_us * 1e-6, 1e-5)) + 4096)
        lat = np.zeros(cap, np.int64)
        peak = np.zeros(cap, np.int64)
        flat, flat16, lut, lut16, mul = surface.buffers
        _, m = _playback(
            flat, flat16, lut, lut16, mul, xs, ys, t, surface.k_eros, surface.width, surface.height,
            progress, int(clock.start_wall * 1e9), float(config.realtime), int(config.poll_us * 1000),
            stop_flag, lat, peak,
        )
        lat1._samples.extend(lat[:m].tolist())
        peak1._samples.extend(peak[:m].tolist())

    def stage1():
        try:
            t_start = time.perf_counter()
            if config.realtime is not None and _playback is not None:
                compiled_playback()
            else:
                drive_stage1(apply, clock, n, lat1, peak1, config.poll_us)
            timing["s1"] = time.perf_counter() - t_start
        except BaseException as exc:  # surfaced after join
            errors.append(exc)
        finally:
            finished.set()

    def stage2():
        _lower_thread_priority(config.reader_nice)
        state = tracker.initial_state()
        last_seen = -1
        t_start = time.perf_counter()
        try:
            while True:
                final = finished.is_set()
                seen = int(progress[0])
                if seen == 0 or seen == last_seen:
                    if final:
                        break
                    time.sleep(0)
                    continue
                t_proc = int(t[seen - 1])
                state, rep = tracker.step(state, surface, t_proc)
                last_seen = seen
                stats.passes += 1
                avail = clock.released() if clock.speed is not None else int(progress[0])
                lat2.measure(t[max(avail, seen) - 1], t_proc)
                if rep is not None:
                    reports.append(rep)
                if final:
                    break
        except BaseException as exc:
            errors.append(exc)
            stop_flag[0] = 1
        timing["s2"] = time.perf_counter() - t_start

    if config.realtime is not None:
        _warm_playback(surface)
    old_switch = sys.getswitchinterval()
    sys.setswitchinterval(min(old_switch, 5e-5))
    start = time.perf_counter()
    clock.start()
    try:
        threads = [threading.Thread(target=stage1, name="eros-writer", daemon=True)]
        if tracker is not None and config.track:
            threads.append(threading.Thread(target=stage2, name="puck-tracker", daemon=True))
        for th in threads:
            th.start()
        for th in threads:
            th.join()
    finally:
        sys.setswitchinterval(old_switch)
    if errors:
        raise errors[0]
    stats.elapsed_s = time.perf_counter() - start
    stats.stage1_elapsed_s = timing.get("s1", stats.elapsed_s)
    stats.stage2_elapsed_s = timing.get("s2", 0.0)
    stats.processed = int(progress[0])
    stats.dropped = n - stats.processed
    stats.stage1_latency_us = lat1.samples
    stats.stage1_backlog_peak_us = peak1.samples
    stats.stage2_latency_us = lat2.samples
    return reports, stats
