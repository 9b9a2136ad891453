"""Ground-truth trajectories and simulated IMU / magnetometer-array logs."""

import configparser
import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import field as magfield
from .rotations import quat_to_matrix, yaw_quat
from .strapdown import GRAVITY

DEG = np.pi / 180.0


@dataclass(frozen=True)
class NavState:
    """Position, attitude (body-to-nav), velocity and IMU biases."""

    r: np.ndarray
    q: np.ndarray
    v: np.ndarray
    ba: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bg: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("r", "q", "v", "ba", "bg"):
            value = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(value)):
                raise ValueError(f"NavState.{name} must be finite")
            object.__setattr__(self, name, value)
        if abs(np.linalg.norm(self.q) - 1.0) > 1e-9:
            raise ValueError("NavState.q must be a unit quaternion")


@dataclass(frozen=True)
class Trajectory:
    """Sequence of navigation states stored as stacked arrays."""

    r: np.ndarray
    q: np.ndarray
    v: np.ndarray
    ba: np.ndarray
    bg: np.ndarray

    def __len__(self):
        return len(self.r)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return Trajectory(self.r[k], self.q[k], self.v[k], self.ba[k], self.bg[k])
        return NavState(self.r[k], self.q[k], self.v[k], self.ba[k], self.bg[k])

    @classmethod
    def from_arrays(cls, r, q, v, ba=None, bg=None):
        n = len(r)
        ba = np.zeros((n, 3)) if ba is None else np.broadcast_to(ba, (n, 3)).copy()
        bg = np.zeros((n, 3)) if bg is None else np.broadcast_to(bg, (n, 3)).copy()
        return cls(np.asarray(r, float), np.asarray(q, float), np.asarray(v, float), ba, bg)

    def with_biases(self, ba, bg):
        return replace(self, ba=np.asarray(ba, float), bg=np.asarray(bg, float))


@dataclass(frozen=True)
class ArrayGeometry:
    lever_arms: np.ndarray  # (n_y, 3) body frame, m

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.lever_arms, dtype=float))
        if d.shape[0] < 1 or d.shape[1] != 3:
            raise ValueError("lever_arms must be an (n_y, 3) array with n_y >= 1")
        if np.any(np.linalg.norm(d, axis=1) > 0.5):
            raise ValueError("lever arms must lie within 0.5 m of the body origin")
        object.__setattr__(self, "lever_arms", d)

    @property
    def n_y(self):
        return len(self.lever_arms)

    def subset(self, indices):
        return ArrayGeometry(self.lever_arms[list(indices)])


def default_array():
    """30-sensor planar grid, 6 columns x 5 rows over 0.32 m x 0.22 m."""
    xs = np.linspace(-0.16, 0.16, 6)
    ys = np.linspace(-0.11, 0.11, 5)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    arms = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)
    return ArrayGeometry(arms)


def single_sensor():
    return ArrayGeometry(np.zeros((1, 3)))


@dataclass(frozen=True)
class SensorParams:
    """Sensor error parameters; gyro values in degrees."""

    acc_density: float = 0.01  # m/s^2/sqrt(Hz)
    acc_bias: tuple = (-0.32, -0.59, -0.37)  # m/s^2
    acc_rw: float = 1.0e-6  # m/s^(5/2)
    gyro_density_deg: float = 0.05  # deg/s/sqrt(Hz)
    gyro_bias_deg: tuple = (-0.01, -1.39, -2.14)  # deg/s
    gyro_rw_deg: float = 1.0e-5  # deg/s^(3/2)
    mag_density: float = 0.02  # uT/sqrt(Hz)
    rate_hz: float = 100.0

    @property
    def dt(self):
        return 1.0 / self.rate_hz

    @property
    def gyro_density(self):
        return self.gyro_density_deg * DEG

    @property
    def gyro_bias(self):
        return np.asarray(self.gyro_bias_deg) * DEG

    @property
    def gyro_rw(self):
        return self.gyro_rw_deg * DEG

    @property
    def mag_std(self):
        return self.mag_density * np.sqrt(self.rate_hz)

    def noiseless(self):
        return replace(self, acc_density=0.0, acc_rw=0.0, gyro_density_deg=0.0,
                       gyro_rw_deg=0.0, mag_density=0.0, acc_bias=(0.0, 0.0, 0.0),
                       gyro_bias_deg=(0.0, 0.0, 0.0))


@dataclass(frozen=True)
class SensorLog:
    dt: float
    f: np.ndarray  # (N, 3) specific force, m/s^2
    w: np.ndarray  # (N, 3) angular rate, rad/s
    mag: np.ndarray  # (N, n_y, 3) uT, body frame
    truth: Trajectory
    geometry: ArrayGeometry
    field: object = None  # ground-truth field callable
    mag_density: float = 0.0
    seed: int = 0

    def __post_init__(self):
        n = len(self.f)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (len(self.w) == len(self.mag) == len(self.truth) == n):
            raise ValueError("all log sequences must have equal length")
        if self.mag.shape[1] != self.geometry.n_y:
            raise ValueError("magnetometer count does not match the geometry")

    def __len__(self):
        return len(self.f)

    @property
    def times(self):
        return np.arange(len(self)) * self.dt

    def head(self, n):
        return self.segment(0, n)

    def segment(self, start, stop):
        """Epochs ``[start, stop)`` as a log of their own."""
        sl = slice(start, stop)
        return replace(self, f=self.f[sl], w=self.w[sl], mag=self.mag[sl], truth=self.truth[sl])


# -------------------------------------------------------------- trajectories


def _body_signals(R, a, w_body):
    f = np.einsum("...ji,...j->...i", R, a - GRAVITY)
    return f, w_body


def generate_circle(radius=0.6, angular_rate=30 * DEG, laps=3.0, rate_hz=100.0,
                    height=1.0, center=(0.0, 0.0), start_angle=-np.pi / 2):
    """Counterclockwise horizontal circle with the body x-axis along the motion.

    Returns ``(truth, f, w)``: the trajectory at the ``N`` epochs and the
    ideal body-frame specific force and angular rate sampled at epoch
    midpoints (sample ``k`` drives the step from epoch ``k`` to ``k + 1``).
    """
    for name, value in (("radius", radius), ("angular_rate", angular_rate),
                        ("laps", laps), ("rate_hz", rate_hz)):
        if not value > 0:
            raise ValueError(f"{name} must be positive")
    n = int(round(laps * 2 * np.pi / angular_rate * rate_hz))
    dt = 1.0 / rate_hz

    def kinematics(t):
        a = start_angle + angular_rate * t
        c, s = np.cos(a), np.sin(a)
        r = np.stack([center[0] + radius * c, center[1] + radius * s, np.full_like(t, height)], axis=1)
        v = radius * angular_rate * np.stack([-s, c, np.zeros_like(t)], axis=1)
        acc = -radius * angular_rate**2 * np.stack([c, s, np.zeros_like(t)], axis=1)
        q = yaw_quat(a + np.pi / 2)
        return r, v, acc, q

    t = np.arange(n) * dt
    r, v, _, q = kinematics(t)
    _, _, acc_mid, q_mid = kinematics(t + dt / 2)
    w_body = np.tile([0.0, 0.0, angular_rate], (n, 1))
    f, w = _body_signals(quat_to_matrix(q_mid), acc_mid, w_body)
    return Trajectory.from_arrays(r, q, v), f, w


def generate_line(speed=0.3, duration=10.0, rate_hz=100.0, heading=0.0, start=(0.0, 0.0, 1.0)):
    """Constant-velocity straight line, level attitude."""
    if not (speed > 0 and duration > 0 and rate_hz > 0):
        raise ValueError("speed, duration and rate_hz must be positive")
    n = int(round(duration * rate_hz))
    t = np.arange(n) / rate_hz
    u = np.array([np.cos(heading), np.sin(heading), 0.0])
    r = np.asarray(start, float) + speed * t[:, None] * u
    v = np.tile(speed * u, (n, 1))
    q = np.tile(yaw_quat(heading), (n, 1))
    f = np.tile(-GRAVITY, (n, 1))
    w = np.zeros((n, 3))
    return Trajectory.from_arrays(r, q, v), f, w


def lap_period(angular_rate):
    return 2 * np.pi / angular_rate


# ------------------------------------------------------------- measurements


def _rng(seed, *stream):
    return np.random.default_rng([int(seed), *stream])


def simulate_imu(f_ideal, w_ideal, params, seed):
    """Add random-walk biases and white noise to ideal IMU signals.

    Returns ``(f, w, ba, bg)`` where ``ba`` and ``bg`` are the bias values
    in effect at each sample.
    """
    f_ideal = np.asarray(f_ideal, float)
    w_ideal = np.asarray(w_ideal, float)
    n = len(f_ideal)
    rng = _rng(seed, 1)
    dt = params.dt
    sf = params.acc_density * np.sqrt(params.rate_hz)
    sw = params.gyro_density * np.sqrt(params.rate_hz)
    steps = rng.standard_normal((4, n, 3))
    ba = np.asarray(params.acc_bias, float) + np.concatenate(
        [np.zeros((1, 3)), np.cumsum(params.acc_rw * np.sqrt(dt) * steps[2, :-1], axis=0)])
    bg = params.gyro_bias + np.concatenate(
        [np.zeros((1, 3)), np.cumsum(params.gyro_rw * np.sqrt(dt) * steps[3, :-1], axis=0)])
    f = f_ideal + ba + sf * steps[0]
    w = w_ideal + bg + sw * steps[1]
    return f, w, ba, bg


def sensor_positions(truth, geometry):
    """World positions of every sensor, shape ``(N, n_y, 3)``."""
    R = quat_to_matrix(truth.q)
    return truth.r[:, None, :] + np.einsum("nij,kj->nki", R, geometry.lever_arms)


def simulate_mag_array(gt_field, truth, geometry, noise_density, rate_hz, seed, stream=2):
    """Body-frame readings of every array sensor plus independent white noise.

    ``gt_field`` is any callable mapping ``(..., 3)`` positions to field
    vectors in uT, such as a :class:`GroundTruthField`.
    """
    pos = sensor_positions(truth, geometry)
    B = gt_field(pos)
    R = quat_to_matrix(truth.q)
    clean = np.einsum("nji,nkj->nki", R, B)
    std = noise_density * np.sqrt(rate_hz)
    noise = np.stack(
        [_rng(seed, stream, i).standard_normal((len(truth), 3)) for i in range(geometry.n_y)],
        axis=1,
    )
    return clean + std * noise


def simulate_dataset(gt_field, params=None, radius=0.6, angular_rate=30 * DEG, laps=3.0,
                     height=1.0, geometry=None, seed=0):
    """Circle trajectory with IMU and array measurements."""
    params = SensorParams() if params is None else params
    geometry = default_array() if geometry is None else geometry
    truth, f0, w0 = generate_circle(radius, angular_rate, laps, params.rate_hz, height)
    f, w, ba, bg = simulate_imu(f0, w0, params, seed)
    truth = truth.with_biases(ba, bg)
    mag = simulate_mag_array(gt_field, truth, geometry, params.mag_density, params.rate_hz, seed)
    return SensorLog(params.dt, f, w, mag, truth, geometry, gt_field, params.mag_density, seed)


def single_mag_variant(log, divisor=30.0):
    """Same IMU and truth, one magnetometer at the body origin with lower noise."""
    if log.geometry.n_y < 1:
        raise ValueError("log has no magnetometers")
    if log.field is None:
        raise ValueError("log carries no ground-truth field to resample from")
    geometry = single_sensor()
    density = log.mag_density / divisor
    mag = simulate_mag_array(log.field, log.truth, geometry, density, 1.0 / log.dt, log.seed, stream=3)
    return replace(log, mag=mag, geometry=geometry, mag_density=density)


# -------------------------------------------------------------- persistence


def _fmt(x):
    return repr(float(x))


def save_log(log, directory):
    """Write imu.csv, mag.csv, truth.csv and log.cfg into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    t = log.times
    with open(os.path.join(directory, "imu.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "fx", "fy", "fz", "wx", "wy", "wz"])
        for k in range(len(log)):
            w.writerow([_fmt(t[k]), *map(_fmt, log.f[k]), *map(_fmt, log.w[k])])
    with open(os.path.join(directory, "mag.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "sensor_index", "bx", "by", "bz"])
        for k in range(len(log)):
            for i in range(log.geometry.n_y):
                w.writerow([_fmt(t[k]), i, *map(_fmt, log.mag[k, i])])
    tr = log.truth
    with open(os.path.join(directory, "truth.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "rx", "ry", "rz", "qw", "qx", "qy", "qz", "vx", "vy", "vz",
                    "bax", "bay", "baz", "bgx", "bgy", "bgz"])
        for k in range(len(log)):
            w.writerow([_fmt(t[k]), *map(_fmt, tr.r[k]), *map(_fmt, tr.q[k]), *map(_fmt, tr.v[k]),
                        *map(_fmt, tr.ba[k]), *map(_fmt, tr.bg[k])])
    cfg = configparser.ConfigParser()
    cfg["log"] = {
        "dt": _fmt(log.dt),
        "mag_density": _fmt(log.mag_density),
        "seed": str(log.seed),
        "n_y": str(log.geometry.n_y),
    }
    cfg["geometry"] = {f"d{i}": " ".join(map(_fmt, d)) for i, d in enumerate(log.geometry.lever_arms)}
    with open(os.path.join(directory, "log.cfg"), "w") as fh:
        cfg.write(fh)
        if isinstance(log.field, magfield.GroundTruthField):
            fh.write(magfield.field_to_text(log.field))


def load_log(directory):
    raw = open(os.path.join(directory, "log.cfg")).read()
    cfg_text, _, field_text = raw.partition("[field]")
    cfg = configparser.ConfigParser()
    cfg.read_string(cfg_text)
    dt = float(cfg["log"]["dt"])
    n_y = int(cfg["log"]["n_y"])
    arms = np.array([[float(x) for x in cfg["geometry"][f"d{i}"].split()] for i in range(n_y)])
    imu = np.loadtxt(os.path.join(directory, "imu.csv"), delimiter=",", skiprows=1, ndmin=2)
    mag = np.loadtxt(os.path.join(directory, "mag.csv"), delimiter=",", skiprows=1, ndmin=2)
    tr = np.loadtxt(os.path.join(directory, "truth.csv"), delimiter=",", skiprows=1, ndmin=2)
    n = len(imu)
    truth = Trajectory(tr[:, 1:4], tr[:, 4:8], tr[:, 8:11], tr[:, 11:14], tr[:, 14:17])
    gt = magfield.field_from_text(field_text) if field_text.strip() else None
    return SensorLog(dt, imu[:, 1:4], imu[:, 4:7], mag[:, 2:5].reshape(n, n_y, 3), truth,
                     ArrayGeometry(arms), gt, float(cfg["log"]["mag_density"]),
                     int(cfg["log"]["seed"]))
