"""Magnetic-field odometry aided INS.

An error-state Kalman filter whose state holds the strapdown navigation
errors plus a first-order local model of the field around the array,

    y_i = m_c + J d_i + noise,

with ``m_c`` the body-frame field at the array centre and ``J`` its
symmetric, trace-free body-frame gradient (5 parameters).  Between epochs
the local model is transported along the mechanized motion,
``m_c <- R_d^T (m_c + J dr_b)``, ``J <- R_d^T J R_d``, which is where the
displacement and rotation information enters.  The filter keeps no global
map, so nothing ever pulls its position error back down.

Error-state layout (23): r, v, attitude, b_a, b_g (15), m_c (3), J (5).
"""

from dataclasses import dataclass, replace

import numpy as np

from .kinematics import NavState, SensorParams
from .rotations import dpoly_dx, gamma2, jac_right, quat_boxplus, quat_to_matrix, skew, so3_exp
from .strapdown import GRAVITY, IBA, IBG, IPHI, IR, IV, NX, process_noise, process_residual, step

NF = 8
NS = NX + NF
IM = slice(15, 18)
IJ = slice(18, 23)

# symmetric trace-free parameterization: j = (J11, J12, J13, J22, J23)
_J_BASIS = np.zeros((5, 3, 3))
_J_BASIS[0, 0, 0], _J_BASIS[0, 2, 2] = 1.0, -1.0
_J_BASIS[1, 0, 1] = _J_BASIS[1, 1, 0] = 1.0
_J_BASIS[2, 0, 2] = _J_BASIS[2, 2, 0] = 1.0
_J_BASIS[3, 1, 1], _J_BASIS[3, 2, 2] = 1.0, -1.0
_J_BASIS[4, 1, 2] = _J_BASIS[4, 2, 1] = 1.0


def j_to_matrix(j):
    return np.einsum("...k,kab->...ab", np.asarray(j, dtype=float), _J_BASIS)


def matrix_to_j(J):
    J = np.asarray(J, dtype=float)
    return np.stack([J[..., 0, 0], J[..., 0, 1], J[..., 0, 2], J[..., 1, 1], J[..., 1, 2]], axis=-1)


@dataclass(frozen=True)
class LocalFieldState:
    m_c: np.ndarray  # uT, body frame
    j: np.ndarray  # uT/m

    @property
    def jacobian(self):
        return j_to_matrix(self.j)


@dataclass(frozen=True)
class OdometryConfig:
    acc_density: float = 0.01
    gyro_density: float = 0.05 * np.pi / 180
    acc_rw: float = 1.0e-6
    gyro_rw: float = 1.0e-5 * np.pi / 180
    mag_std: float = 0.2
    model_std: float = 0.5  # uT, first-order model error across the array
    field_noise_m: float = 0.5  # uT per sqrt(m) travelled
    field_noise_j: float = 1.0  # uT/m per sqrt(m) travelled
    init_pos_std: float = 1e-6
    init_att_std: float = 1e-6
    init_vel_std: float = 1e-3
    init_m_std: float = 10.0
    init_j_std: float = 50.0
    bias_horizon: float = 100.0

    @property
    def measurement_std(self):
        return float(np.hypot(self.mag_std, self.model_std))

    @classmethod
    def from_params(cls, params, floor=1e-6, **kw):
        p = params
        return cls(acc_density=max(p.acc_density, floor),
                   gyro_density=max(p.gyro_density, floor),
                   acc_rw=max(p.acc_rw, floor * 1e-3),
                   gyro_rw=max(p.gyro_rw, floor * 1e-3),
                   mag_std=max(p.mag_std, floor), **kw)


@dataclass(frozen=True)
class OdoFilterState:
    nav: NavState
    local: LocalFieldState
    P: np.ndarray  # (23, 23)
    t: float = 0.0


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite filter input")


def transport(m_c, j, dr_b, w_dt):
    """Move the local model by body displacement ``dr_b`` and rotation Exp(w_dt)."""
    Rd = so3_exp(w_dt)
    J = j_to_matrix(j)
    m_new = Rd.T @ (m_c + J @ dr_b)
    j_new = matrix_to_j(Rd.T @ J @ Rd)
    return m_new, j_new


def transition(state, f, w, dt):
    """Nominal propagation and its 23x23 error-state transition matrix."""
    nav = state.nav
    fc = f - nav.ba
    x = (w - nav.bg) * dt
    r1, v1, q1 = step(nav.r, nav.v, nav.q, fc, w - nav.bg, dt)
    R0 = quat_to_matrix(nav.q)
    G2 = gamma2(x)
    dr_b = R0.T @ (r1 - nav.r)
    m1, j1 = transport(state.local.m_c, state.local.j, dr_b, x)

    F = np.zeros((NS, NS))
    _, J0, _ = process_residual(nav.r, nav.v, nav.q, nav.ba, nav.bg, r1, v1, q1, nav.ba,
                                nav.bg, f, w, dt)
    F[:NX, :NX] = -J0

    Rd = so3_exp(x)
    J = j_to_matrix(state.local.j)
    # displacement sensitivity
    D = np.zeros((3, NX))
    D[:, IV] = R0.T * dt
    D[:, IPHI] = skew(R0.T @ nav.v) * dt + 0.5 * dt**2 * skew(R0.T @ GRAVITY)
    D[:, IBA] = -dt**2 * G2
    D[:, IBG] = -dt**3 * dpoly_dx(x, fc, 3, 4)
    # rotation perturbation eps of R_d: eps = -Jr(x) dt dbg
    E = -jac_right(x) * dt

    F[IM, :NX] = Rd.T @ J @ D
    F[IM, IBG] += skew(m1) @ E
    F[IM, IM] = Rd.T
    F[IM, IJ] = np.stack([Rd.T @ (B @ dr_b) for B in _J_BASIS], axis=1)
    J1 = j_to_matrix(j1)
    F[IJ, IBG] = np.stack([matrix_to_j(J1 @ skew(e) - skew(e) @ J1) for e in np.eye(3)], axis=1) @ E
    F[IJ, IJ] = np.stack([matrix_to_j(Rd.T @ B @ Rd) for B in _J_BASIS], axis=1)
    nav1 = NavState(r1, q1, v1, nav.ba, nav.bg)
    return nav1, LocalFieldState(m1, j1), F, dr_b


def propagate(state, f, w, dt, cfg=None):
    """Time update with one IMU sample."""
    cfg = OdometryConfig() if cfg is None else cfg
    if not dt > 0:
        raise ValueError("dt must be positive")
    _check_finite(f, w, state.P)
    nav1, local1, F, dr_b = transition(state, np.asarray(f, float), np.asarray(w, float), dt)
    Q = np.zeros((NS, NS))
    Q[:NX, :NX] = process_noise(cfg.acc_density, cfg.gyro_density, cfg.acc_rw, cfg.gyro_rw, dt)
    travelled = float(np.linalg.norm(dr_b))
    Q[IM, IM] = cfg.field_noise_m**2 * travelled * np.eye(3)
    Q[IJ, IJ] = cfg.field_noise_j**2 * travelled * np.eye(5)
    P = F @ state.P @ F.T + Q
    P = 0.5 * (P + P.T)
    return OdoFilterState(nav1, local1, P, state.t + dt)


def measurement_matrix(geometry):
    d = geometry.lever_arms
    H = np.zeros((3 * len(d), NS))
    for i, di in enumerate(d):
        H[3 * i:3 * i + 3, IM] = np.eye(3)
        H[3 * i:3 * i + 3, IJ] = np.stack([B @ di for B in _J_BASIS], axis=1)
    return H


def predict_measurements(local, geometry):
    return local.m_c + geometry.lever_arms @ local.jacobian.T


def _inject(state, dx, P):
    nav = state.nav
    nav1 = NavState(nav.r + dx[IR], quat_boxplus(nav.q, dx[IPHI]), nav.v + dx[IV],
                    nav.ba + dx[IBA], nav.bg + dx[IBG])
    local = LocalFieldState(state.local.m_c + dx[IM], state.local.j + dx[IJ])
    G = np.eye(NS)
    G[IPHI, IPHI] = np.eye(3) - 0.5 * skew(dx[IPHI])
    P = G @ P @ G.T
    return OdoFilterState(nav1, local, 0.5 * (P + P.T), state.t)


def update(state, y, geometry, mag_noise_std, sequential=False):
    """Joint measurement update over all array sensors.

    With ``sequential=True`` sensors are processed one at a time on the same
    linearization point before a single injection, which is algebraically
    equivalent to the joint update.
    """
    y = np.asarray(y, dtype=float).reshape(-1, 3)
    if len(y) != geometry.n_y:
        raise ValueError(f"expected {geometry.n_y} measurements, got {len(y)}")
    _check_finite(y)
    H = measurement_matrix(geometry)
    nu = (y - predict_measurements(state.local, geometry)).reshape(-1)
    var = mag_noise_std**2
    P = state.P
    if not sequential:
        S = H @ P @ H.T + var * np.eye(len(nu))
        K = np.linalg.solve(S, H @ P).T
        dx = K @ nu
        IKH = np.eye(NS) - K @ H
        P = IKH @ P @ IKH.T + var * K @ K.T
    else:
        dx = np.zeros(NS)
        for i in range(geometry.n_y):
            rows = slice(3 * i, 3 * i + 3)
            Hi = H[rows]
            S = Hi @ P @ Hi.T + var * np.eye(3)
            K = np.linalg.solve(S, Hi @ P).T
            dx = dx + K @ (nu[rows] - Hi @ dx)
            IKH = np.eye(NS) - K @ Hi
            P = IKH @ P @ IKH.T + var * K @ K.T
    return _inject(state, dx, P)


def initial_state(nav, y0, geometry, cfg):
    """Filter state at the anchor with the local model fitted to the first epoch."""
    H = measurement_matrix(geometry)[:, NX:]
    y0 = np.asarray(y0, float).reshape(-1)
    prior = np.diag(np.r_[np.full(3, cfg.init_m_std**-2), np.full(5, cfg.init_j_std**-2)])
    var = cfg.measurement_std**2
    A = H.T @ H / var + prior
    sol = np.linalg.solve(A, H.T @ y0 / var)
    P = np.zeros((NS, NS))
    std = np.empty(NX)
    std[IR], std[IV], std[IPHI] = cfg.init_pos_std, cfg.init_vel_std, cfg.init_att_std
    std[IBA] = cfg.acc_rw * np.sqrt(cfg.bias_horizon)
    std[IBG] = cfg.gyro_rw * np.sqrt(cfg.bias_horizon)
    P[:NX, :NX] = np.diag(std**2)
    P[NX:, NX:] = np.diag(np.r_[np.full(3, cfg.init_m_std**2), np.full(5, cfg.init_j_std**2)])
    return OdoFilterState(nav, LocalFieldState(sol[:3], sol[3:]), P, 0.0)


@dataclass
class FilterRun:
    r: np.ndarray
    q: np.ndarray
    v: np.ndarray
    errors: np.ndarray  # (N, 3)
    local_m: np.ndarray
    local_j: np.ndarray
    P_diag: np.ndarray
    final: OdoFilterState

    @property
    def error_norm(self):
        return np.linalg.norm(self.errors, axis=1)


def run_filter(log, geometry=None, cfg=None, anchor=None):
    """Filter the whole log; returns per-epoch estimates and position errors."""
    geometry = log.geometry if geometry is None else geometry
    if geometry.n_y != log.mag.shape[1]:
        raise ValueError("geometry does not match the log's magnetometer count")
    if cfg is None:
        cfg = OdometryConfig.from_params(SensorParams())
        if log.mag_density > 0:
            cfg = replace(cfg, mag_std=log.mag_density / np.sqrt(log.dt))
    anchor = log.truth[0] if anchor is None else anchor
    n = len(log)
    r = np.empty((n, 3))
    v = np.empty((n, 3))
    q = np.empty((n, 4))
    lm = np.empty((n, 3))
    lj = np.empty((n, 5))
    pd = np.empty((n, NS))
    state = initial_state(anchor, log.mag[0], geometry, cfg)
    state = update(state, log.mag[0], geometry, cfg.measurement_std)
    for k in range(n):
        if k > 0:
            state = propagate(state, log.f[k - 1], log.w[k - 1], log.dt, cfg)
            state = update(state, log.mag[k], geometry, cfg.measurement_std)
        r[k], v[k], q[k] = state.nav.r, state.nav.v, state.nav.q
        lm[k], lj[k] = state.local.m_c, state.local.j
        pd[k] = np.diag(state.P)
    return FilterRun(r, q, v, r - log.truth.r, lm, lj, pd, state)


def run_ins(log, anchor=None):
    """Pure strapdown dead reckoning from the anchor; returns ``(r, v, q, errors)``."""
    from .strapdown import dead_reckon

    anchor = log.truth[0] if anchor is None else anchor
    r, v, q = dead_reckon(anchor, log.f, log.w, log.dt)
    return r, v, q, r - log.truth.r
