"""
The exponentially decaying surface
==================================

Every event multiplies its neighbourhood by ``d = 0.3 ** (1 / k)`` and then
sets its own pixel to 255.  Recent edges stay bright, old ones fade in
proportion to how much activity happened around them, not to wall time.
"""

import tempfile
from pathlib import Path

import numpy as np

from pucktrack.eros import ErosSurface, Roi, decay_factor
from pucktrack.scene import scenario, simulate

for k in (2, 4, 8):
    print(f"k={k}: d={decay_factor(k):.4f}")

s = ErosSurface(16, 16, k_eros=4)
s.update(8, 8)
print("after one event:", s.cells[8, 7:10])
for _ in range(4):
    s.update(9, 8)  # each neighbour event decays (8, 8) once
print("after four neighbour events:", s.cells[8, 8], "(0.3 * 255 = 76.5 before truncation)")

sim = simulate(scenario("static", seed=3, duration_s=1.0))
surface = ErosSurface(640, 480, k_eros=8)
surface.update_events(sim.events)
g = sim.ground_truth[-1]
roi = Roi.centered(g["cx"], g["cy"], 48, 40)
patch = surface.snapshot_roi(roi)
print("cells at 255 around the puck:", int((patch == 255).sum()))
print("blurred patch range:", surface.blurred_roi(roi).min(), surface.blurred_roi(roi).max())

out = Path(tempfile.mkdtemp(prefix="pucktrack-")) / "surface.pgm"
surface.to_pgm(out)
print("surface image:", out)
