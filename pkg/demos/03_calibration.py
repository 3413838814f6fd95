"""
Calibrating puck size across the table
======================================

The camera looks at the table at an angle, so the puck's image half-axes
grow towards the near edge.  A handful of annotated puck positions fix the
linear model ``a = k0 + k1 x + k2 y``, ``b = h0 + h1 x + h2 y``.
"""

import numpy as np

from pucktrack.kernel import KernelBank, fit_size_model
from pucktrack.scene import DEFAULT_SIZE_MODEL, scenario, simulate

cfg = scenario("static", seed=5, duration_s=3.0)
gt = simulate(cfg).ground_truth

# fifty hand-labelled frames, each axis off by about half a pixel
rng = np.random.default_rng(0)
pick = rng.choice(len(gt), 50, replace=False)
obs = np.column_stack([gt["cx"][pick], gt["cy"][pick], gt["a"][pick], gt["b"][pick]])
obs[:, 2:] += rng.normal(0, 0.5, (50, 2))

model, stats = fit_size_model(obs)
print("fitted :", {k: round(v, 4) for k, v in model.as_dict().items()})
print("truth  :", DEFAULT_SIZE_MODEL.as_dict())
print(f"residual rms a={stats.rms_a:.2f} px b={stats.rms_b:.2f} px")

for x, y in [(100, 80), (320, 250), (540, 420)]:
    a, b = model.predict(x, y)
    print(f"at ({x}, {y}) the puck is {2 * a:.1f} x {2 * b:.1f} px")

# one kernel per whole-pixel size, covering every place the puck can be
bank = KernelBank.for_region(model, cfg.field_corners(margin=5.0))
print(f"bank: {bank.na} x {bank.nb} kernels, a from {bank.a0}, b from {bank.b0}")
