"""Magnetic-field SLAM with magnetometer arrays: simulation and estimation.

Modules
-------
rotations    SO(3) and quaternion utilities
field        dipole ground-truth fields
basis        reduced-rank curl-free field model
kinematics   trajectories, sensor simulation, log I/O
strapdown    inertial mechanization and process residuals
slam         MAP smoother over trajectory and field weights
odometry     array-odometry aided INS filter and pure dead reckoning
experiment   config-driven runs behind the ``magslam`` command
"""

from .basis import BasisFieldModel, build_basis, evaluate_basis, fit_weights, resolution_study
from .field import DipoleSource, GroundTruthField, LinearField, evaluate_field, field_jacobian, make_field
from .kinematics import (ArrayGeometry, NavState, SensorLog, SensorParams, Trajectory, default_array,
                         generate_circle, simulate_dataset, single_mag_variant)
from .odometry import OdoFilterState, LocalFieldState, propagate, run_filter, run_ins, update
from .slam import (SlamProblem, SlamSolution, build_problem, exploration_error_metrics,
                   incremental_solve, solve)

__version__ = "0.1.0"
