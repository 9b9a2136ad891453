"""Field SLAM with an array versus a single magnetometer.

The same IMU samples are paired once with the 30-sensor array and once with
one low-noise sensor.  Over a single exploratory lap there is no loop
closure, so any difference comes from what the array sees across its own
extent.  Takes a few minutes; run with ``python3 demos/03_slam_exploration.py``.
"""

# %%
import os
from dataclasses import replace

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from magslam import experiment, slam

os.makedirs("demo_output", exist_ok=True)
cfg = experiment.load_config(experiment.default_config_path())
cfg = replace(cfg, laps=1.0)
datasets = experiment.build_datasets(cfg)
model = experiment.build_model(cfg)
print(f"basis: {model.n_b} functions on {model.domain}")

# %% Solve both datasets
solutions = {}
for name, log in datasets.items():
    problem = slam.build_problem(log, model)
    solutions[name] = slam.incremental_solve(problem, step=cfg.step, lag=cfg.lag)
    rep = solutions[name].report
    print(f"{name:6s}: {rep.iterations} iterations, end error "
          f"{solutions[name].error_norm[-1]:.4f} m")

ratio = solutions["single"].error_norm[-1] / solutions["array"].error_norm[-1]
print(f"single / array end-of-lap error: {ratio:.0f}")

# %% Error curves
t = datasets["array"].times
fig, ax = plt.subplots(figsize=(7, 4))
for name, sol in solutions.items():
    ax.semilogy(t, sol.error_norm, label=f"SLAM, {name}")
ax.set_xlabel("time (s)")
ax.set_ylabel("position error (m)")
ax.legend()
fig.tight_layout()
fig.savefig("demo_output/slam_exploration.svg")
