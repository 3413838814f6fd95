"""
Ring kernels and detection
==========================

The kernel rewards a thin elliptical ring, ignores the inside and penalises
the surround, with weights that sum to zero.  Correlating it with the
blurred surface lights up wherever an outline of the right size sits.
"""

import numpy as np

from pucktrack.eros import ErosSurface
from pucktrack.evaluation import tracker_for_scene
from pucktrack.kernel import build_kernel
from pucktrack.scene import scenario, simulate
from pucktrack.tracker import TRACKING, argmax_first, convolve

k = build_kernel(6, 4)
print("kernel", k.shape, "ring cells", k.ring_count, "surround weight", round(k.w_neg, 4))
for row in k.weights[::2]:
    print("".join("#" if w > 0 else ("." if w == 0 else "-") for w in row))

# a clean ring scores exactly 1 at its own position
patch = np.zeros((k.height + 8, k.width + 8))
patch[4 : 4 + k.height, 4 : 4 + k.width][k.weights == 1.0] = 255
r = convolve(patch, k)
i, j = argmax_first(r.scores)
print("peak", r.frame_coords(i, j), "score", r.scores[i, j])

# detection on a real surface: the puck starts in the middle of the table
cfg = scenario("static", seed=12, duration_s=0.5)
sim = simulate(cfg)
tracker = tracker_for_scene(cfg)
surface = ErosSurface(640, 480)
state = tracker.initial_state()
for n, chunk in enumerate(np.array_split(sim.events, 200)):
    surface.update_events(chunk)
    state, _ = tracker.step(state, surface, int(chunk["t"][-1]))
    if state.mode == TRACKING:
        break
g = sim.ground_truth[np.searchsorted(sim.ground_truth["t"], chunk["t"][-1])]
print(f"detected after {n + 1} passes at ({state.x:.0f}, {state.y:.0f}), truth ({g['cx']:.1f}, {g['cy']:.1f})")
print("tracking window", state.roi_t)
