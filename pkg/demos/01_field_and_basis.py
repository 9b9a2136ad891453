"""Synthetic field and the reduced-rank basis.

Builds the reference dipole field, looks at how much it varies along the
circle, and compares basis sizes on a grid over the trajectory footprint.
Run with ``python3 demos/01_field_and_basis.py``; figures go to ``demo_output/``.
"""

# %%
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from magslam import basis, experiment, kinematics
from magslam.field import field_variation

os.makedirs("demo_output", exist_ok=True)
cfg = experiment.load_config(experiment.default_config_path())
gt = experiment.build_field(cfg)
print(f"{len(gt.sources)} dipoles, background {gt.background} uT")

# %% Field magnitude along the circle
truth, _, _ = kinematics.generate_circle(cfg.radius, cfg.angular_rate, laps=1.0)
b = gt(truth.r)
print(f"variation along the circle: {field_variation(gt, truth.r):.1f} uT")

fig, ax = plt.subplots(figsize=(7, 3))
ax.plot(np.arange(len(b)) * 0.01, np.linalg.norm(b, axis=1))
ax.set_xlabel("time (s)")
ax.set_ylabel("|B| (uT)")
fig.tight_layout()
fig.savefig("demo_output/field_along_circle.svg")

# %% Resolution table: more basis functions resolve finer structure
rows = experiment.resolution_rows(cfg)
for n, dens, rmse in rows:
    print(f"n_b = {n:5d}  {dens:6.1f} per m^2  RMSE {rmse:.3f} uT")

# %% Fitted magnitude maps at the trajectory height
lo, hi = cfg.footprint(cfg.resolution_margin)
pts = basis.grid_points((lo, hi), 0.05)
side = int(round(np.sqrt(len(pts))))
fig, axes = plt.subplots(1, len(rows) + 1, figsize=(13, 3.2))
panels = [("reference", gt(pts))]
for n, _, _ in rows:
    model = basis.build_basis(basis.pad_box((lo, hi), cfg.resolution_padding), n)
    theta, _ = basis.fit_weights(model, pts, gt(pts), noise_std=cfg.resolution_noise_std)
    panels.append((f"n_b = {n}", basis.evaluate_model(model.with_weights(theta), pts)))
for ax, (title, vals) in zip(axes, panels):
    # grid points run over y fastest, so rows of the reshaped array are x
    ax.imshow(np.linalg.norm(vals, axis=1).reshape(side, side).T, origin="lower",
              extent=(lo[0], hi[0], lo[1], hi[1]))
    ax.set_title(title)
fig.tight_layout()
fig.savefig("demo_output/resolution_maps.svg")
