"""
Synthetic event streams
=======================

Simulate the static-camera table for two seconds, write the stream in both
file formats and read it back.
"""

import tempfile
from pathlib import Path

import numpy as np

from pucktrack.events import read_ground_truth, read_stream, write_ground_truth, write_stream
from pucktrack.scene import scenario, simulate

out = Path(tempfile.mkdtemp(prefix="pucktrack-"))

cfg = scenario("static", seed=3, duration_s=2.0)
sim = simulate(cfg)
print(f"{len(sim.events)} events in {cfg.duration_s} s")
print(f"  puck {sim.n_puck_events}, paddle {sim.n_paddle_events}, noise {sim.n_noise_events}")

# packed 13-byte records behind a 32-byte header
write_stream(sim.header, sim.events, out / "static.evs")
print("binary size", (out / "static.evs").stat().st_size, "bytes")

# the CSV form is easier to eyeball
write_stream(sim.header, sim.events[:2000], out / "head.csv")
print((out / "head.csv").read_text().splitlines()[:4])

header, events = read_stream(out / "static.evs")
assert np.array_equal(events, sim.events)

# one ground-truth sample per millisecond
write_ground_truth(sim.ground_truth, out / "gt.csv")
gt = read_ground_truth(out / "gt.csv")
print("first ground-truth sample:", gt[0])

# with the camera shaking, the printed stars on the table fire too
moving = simulate(scenario("moving", seed=3, duration_s=2.0))
print(f"moving camera: {moving.n_pattern_events} background events vs {moving.n_puck_events} from the puck")
print("files in", out)
