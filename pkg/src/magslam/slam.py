"""Magnetic-field SLAM as a sparse MAP problem over trajectory and field weights.

The negative log joint posterior is a sum of squared whitened residuals:

* an anchor prior on the first navigation state,
* one strapdown process residual per consecutive pair of epochs,
* one 3-vector field residual per magnetometer per epoch,
  ``y - R(q)^T Phi(r + R(q) d) theta``,
* the Gaussian prior on the basis weights.

Levenberg-Marquardt iterations solve the damped normal equations by the
Schur complement: the block-tridiagonal state part is factored as a banded
matrix, the dense weight block is eliminated last.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .basis import basis_and_gradient, field_values
from .kinematics import NavState, SensorParams, Trajectory, lap_period
from .rotations import jac_right_inv, quat_boxminus, quat_boxplus, quat_to_matrix, skew
from .strapdown import IBA, IBG, IPHI, IR, IV, NX, dead_reckon, process_noise, process_residual

log = logging.getLogger(__name__)

_EPOCH_CHUNK = 128


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseConfig:
    acc_density: float = 0.01
    gyro_density: float = 0.05 * np.pi / 180
    acc_rw: float = 1.0e-6
    gyro_rw: float = 1.0e-5 * np.pi / 180
    mag_std: float = 0.2
    anchor_pos_std: float = 1e-6
    anchor_att_std: float = 1e-6
    anchor_vel_std: float = 1e-3
    bias_horizon: float = 100.0  # s, sets the anchor bias std

    @classmethod
    def from_params(cls, params, mag_std=None, floor=1e-6):
        """Noise model matching a sensor parameter record.

        Zero densities are floored so the residual weights stay finite.
        """
        p = params
        return cls(
            acc_density=max(p.acc_density, floor),
            gyro_density=max(p.gyro_density, floor),
            acc_rw=max(p.acc_rw, floor * 1e-3),
            gyro_rw=max(p.gyro_rw, floor * 1e-3),
            mag_std=max(p.mag_std if mag_std is None else mag_std, floor),
        )

    @property
    def anchor_std(self):
        s = np.empty(NX)
        s[IR] = self.anchor_pos_std
        s[IV] = self.anchor_vel_std
        s[IPHI] = self.anchor_att_std
        s[IBA] = self.acc_rw * np.sqrt(self.bias_horizon)
        s[IBG] = self.gyro_rw * np.sqrt(self.bias_horizon)
        return s


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 100
    rel_tol: float = 1e-8
    grad_tol: float = 1e-9
    initial_damping: float = 1e-4
    damping_up: float = 10.0
    damping_down: float = 10.0
    max_damping: float = 1e12


@dataclass
class SlamProblem:
    log: object
    model: object
    geometry: object
    noise: NoiseConfig
    anchor: NavState
    include_measurements: bool = True
    include_anchor: bool = True
    # measurement information on theta from epochs held fixed outside this
    # problem: (H, b, c) adds 0.5 * (theta' H theta - 2 b' theta + c)
    theta_info: tuple = None

    def __post_init__(self):
        self._whiten = np.linalg.inv(np.linalg.cholesky(
            process_noise(self.noise.acc_density, self.noise.gyro_density,
                          self.noise.acc_rw, self.noise.gyro_rw, self.log.dt)))

    def __len__(self):
        return len(self.log)

    @property
    def n_states(self):
        return NX * len(self.log)

    @property
    def n_measurement_blocks(self):
        return len(self.log) * self.geometry.n_y if self.include_measurements else 0

    def head(self, n):
        return replace(self, log=self.log.head(n))

    def segment(self, start, stop, anchor, theta_info=None):
        """Sub-problem over epochs ``[start, stop)`` anchored at ``anchor``."""
        return replace(self, log=self.log.segment(start, stop), anchor=anchor,
                       include_anchor=True, theta_info=theta_info)


@dataclass
class SolverReport:
    iterations: int
    initial_cost: float
    final_cost: float
    converged: bool
    message: str
    costs: list = field(default_factory=list)

    def to_text(self):
        lines = [
            f"iterations = {self.iterations}",
            f"initial_cost = {self.initial_cost!r}",
            f"final_cost = {self.final_cost!r}",
            f"converged = {str(self.converged).lower()}",
            f"message = {self.message}",
        ]
        return "\n".join(lines) + "\n"


@dataclass
class SlamSolution:
    states: Trajectory
    theta: np.ndarray
    errors: np.ndarray  # (N, 3) estimated minus true position
    report: SolverReport

    @property
    def error_norm(self):
        return np.linalg.norm(self.errors, axis=1)


def build_problem(log, model, geometry=None, noise=None, anchor=None,
                  include_measurements=True, include_anchor=True):
    """Assemble a SLAM problem; defaults take the noise model from the default
    sensor parameters and anchor the first state at the true initial state."""
    geometry = log.geometry if geometry is None else geometry
    if geometry.n_y != log.mag.shape[1]:
        raise ValueError(
            f"geometry has {geometry.n_y} sensors but the log has {log.mag.shape[1]}")
    if noise is None:
        params = SensorParams()
        mag_std = log.mag_density / np.sqrt(log.dt) if log.mag_density > 0 else None
        noise = NoiseConfig.from_params(params, mag_std=mag_std)
    anchor = log.truth[0] if anchor is None else anchor
    return SlamProblem(log, model, geometry, noise, anchor, include_measurements, include_anchor)


def dead_reckoning_guess(problem, start=None):
    """Trajectory integrated from the anchor (or ``start``) with fixed biases."""
    s = problem.anchor if start is None else start
    r, v, q = dead_reckon(s, problem.log.f, problem.log.w, problem.log.dt)
    return Trajectory.from_arrays(r, q, v, s.ba, s.bg)


# ---------------------------------------------------------------- residuals


def anchor_residual(problem, x0):
    a = problem.anchor
    e = np.empty(NX)
    e[IR] = x0.r - a.r
    e[IV] = x0.v - a.v
    e[IPHI] = quat_boxminus(x0.q, a.q)
    e[IBA] = x0.ba - a.ba
    e[IBG] = x0.bg - a.bg
    J = np.eye(NX)
    J[IPHI, IPHI] = jac_right_inv(e[IPHI])
    s = problem.noise.anchor_std
    return e / s, J / s[:, None]


def process_terms(problem, traj, jacobians=True):
    lg = problem.log
    out = process_residual(
        traj.r[:-1], traj.v[:-1], traj.q[:-1], traj.ba[:-1], traj.bg[:-1],
        traj.r[1:], traj.v[1:], traj.q[1:], traj.ba[1:], traj.bg[1:],
        lg.f[:-1], lg.w[:-1], lg.dt, jacobians=jacobians)
    W = problem._whiten
    if not jacobians:
        return out @ W.T
    e, J0, J1 = out
    return e @ W.T, W @ J0, W @ J1


def measurement_terms(problem, r, q, mag, theta, jacobians=True):
    """Whitened field residuals for a block of epochs.

    Returns ``e`` with shape ``(E, n_y, 3)`` and, with ``jacobians``, the
    Jacobians w.r.t. position ``(E, n_y, 3, 3)``, attitude ``(E, n_y, 3, 3)``
    and weights ``(E, n_y, 3, n_b)``.
    """
    model = problem.model
    d = problem.geometry.lever_arms
    s = problem.noise.mag_std
    R = quat_to_matrix(q)
    p = r[:, None, :] + np.einsum("eij,kj->eki", R, d)
    if not jacobians:
        h = np.einsum("eji,ekj->eki", R, field_values(model, p, theta, check=False))
        return (mag - h) / s
    phi, G = basis_and_gradient(model, p, theta, check=False)
    B = phi @ theta
    h = np.einsum("eji,ekj->eki", R, B)
    e = (mag - h) / s
    RT = np.swapaxes(R, -1, -2)[:, None]
    RtG = RT @ G
    J_r = -RtG / s
    J_phi = -(skew(h) - RtG @ (R[:, None] @ skew(d))) / s
    J_theta = -(RT @ phi) / s
    return e, J_r, J_phi, J_theta


def cost(problem, traj, theta):
    """Half the sum of squared whitened residuals."""
    total = 0.0
    if problem.include_anchor:
        e0, _ = anchor_residual(problem, traj[0])
        total += float(e0 @ e0)
    if len(traj) > 1:
        ep = process_terms(problem, traj, jacobians=False)
        total += float(np.sum(ep**2))
    if problem.include_measurements:
        for k0 in range(0, len(traj), _EPOCH_CHUNK):
            sl = slice(k0, k0 + _EPOCH_CHUNK)
            em = measurement_terms(problem, traj.r[sl], traj.q[sl], problem.log.mag[sl],
                                   theta, jacobians=False)
            total += float(np.sum(em**2))
    total += float(np.sum((theta / problem.model.prior_std) ** 2))
    if problem.theta_info is not None:
        H, b, c = problem.theta_info
        total += float(theta @ H @ theta - 2 * b @ theta + c)
    return 0.5 * total


# ------------------------------------------------------------ linearization

_XMEAS = np.r_[0:3, 6:9]  # position and attitude columns


@dataclass
class Linearization:
    cost: float
    diag: np.ndarray  # (N, 15, 15)
    lower: np.ndarray  # (N-1, 15, 15) block (k+1, k)
    H_xt: np.ndarray  # (N*15, n_b)
    H_tt: np.ndarray
    g_x: np.ndarray  # (N*15,)
    g_t: np.ndarray

    @property
    def gradient(self):
        return np.concatenate([self.g_x, self.g_t])


def linearize(problem, traj, theta):
    n = len(traj)
    n_b = problem.model.n_b
    diag = np.zeros((n, NX, NX))
    lower = np.zeros((max(n - 1, 0), NX, NX))
    g = np.zeros((n, NX))
    H_xt = np.zeros((n, NX, n_b))
    H_tt = np.diag(problem.model.prior_std**-2.0)
    g_t = theta / problem.model.prior_std**2
    total = float(np.sum((theta / problem.model.prior_std) ** 2))
    if problem.theta_info is not None:
        H, b, c = problem.theta_info
        H_tt = H_tt + H
        g_t = g_t + H @ theta - b
        total += float(theta @ H @ theta - 2 * b @ theta + c)

    if problem.include_anchor:
        e0, J0 = anchor_residual(problem, traj[0])
        diag[0] += J0.T @ J0
        g[0] += J0.T @ e0
        total += float(e0 @ e0)

    if n > 1:
        e, A, B = process_terms(problem, traj)
        At = np.swapaxes(A, -1, -2)
        Bt = np.swapaxes(B, -1, -2)
        diag[:-1] += At @ A
        diag[1:] += Bt @ B
        lower[:] = Bt @ A
        g[:-1] += np.einsum("kji,kj->ki", A, e)
        g[1:] += np.einsum("kji,kj->ki", B, e)
        total += float(np.sum(e**2))

    if problem.include_measurements:
        ny = problem.geometry.n_y
        for k0 in range(0, n, _EPOCH_CHUNK):
            sl = slice(k0, min(k0 + _EPOCH_CHUNK, n))
            e, J_r, J_phi, J_t = measurement_terms(
                problem, traj.r[sl], traj.q[sl], problem.log.mag[sl], theta)
            E = e.shape[0]
            Jx = np.concatenate([J_r, J_phi], axis=-1).reshape(E, ny * 3, 6)
            Jt = J_t.reshape(E, ny * 3, n_b)
            ev = e.reshape(E, ny * 3)
            Jxt = np.swapaxes(Jx, -1, -2)
            hxx = Jxt @ Jx
            diag[sl][:, _XMEAS[:, None], _XMEAS[None, :]] += hxx
            g[sl][:, _XMEAS] += np.einsum("eji,ej->ei", Jx, ev)
            H_xt[sl][:, _XMEAS, :] += Jxt @ Jt
            Jt_flat = Jt.reshape(-1, n_b)
            H_tt += Jt_flat.T @ Jt_flat
            g_t += Jt_flat.T @ ev.reshape(-1)
            total += float(np.sum(e**2))

    return Linearization(0.5 * total, diag, lower, H_xt.reshape(n * NX, n_b), H_tt,
                         g.reshape(-1), g_t)


def block_tridiagonal_factor(diag, lower):
    """Cholesky factor of a symmetric block-tridiagonal matrix.

    ``diag[k]`` are the diagonal blocks and ``lower[k]`` the block at
    ``(k + 1, k)``.  Returns the inverted diagonal factor blocks and the
    sub-diagonal factor blocks; raises ``LinAlgError`` if the matrix is not
    positive definite.
    """
    n, m = diag.shape[:2]
    Linv = np.empty_like(diag)
    C = np.empty_like(lower)
    eye = np.eye(m)
    S = diag[0]
    for k in range(n):
        Lk = np.linalg.cholesky(S)
        Linv[k] = linalg.solve_triangular(Lk, eye, lower=True)
        if k < n - 1:
            C[k] = lower[k] @ Linv[k].T
            S = diag[k + 1] - C[k] @ C[k].T
    return Linv, C


def block_tridiagonal_solve(factor, rhs):
    """Solve with a factor from :func:`block_tridiagonal_factor`; ``rhs`` is ``(n, m, r)``."""
    Linv, C = factor
    n = len(Linv)
    z = np.empty_like(rhs)
    z[0] = Linv[0] @ rhs[0]
    for k in range(1, n):
        z[k] = Linv[k] @ (rhs[k] - C[k - 1] @ z[k - 1])
    x = np.empty_like(rhs)
    x[-1] = Linv[-1].T @ z[-1]
    for k in range(n - 2, -1, -1):
        x[k] = Linv[k].T @ (z[k] - C[k].T @ x[k + 1])
    return x


def solve_step(lin, damping):
    """Damped Gauss-Newton step ``(H + damping * diag(H)) dx = -g``.

    States are eliminated first through a block-tridiagonal Cholesky
    factorization, leaving a dense Schur complement in the weights.
    """
    n = lin.diag.shape[0]
    D = lin.diag.copy()
    idx = np.arange(NX)
    D[:, idx, idx] *= 1.0 + damping
    factor = block_tridiagonal_factor(D, lin.lower)
    rhs = np.concatenate([lin.g_x[:, None], lin.H_xt], axis=1).reshape(n, NX, -1)
    Y = block_tridiagonal_solve(factor, rhs).reshape(n * NX, -1)
    H_tt = lin.H_tt.copy()
    H_tt[np.diag_indices_from(H_tt)] *= 1.0 + damping
    # only position and attitude rows of H_xt are nonzero
    rows = (NX * np.arange(n)[:, None] + _XMEAS).ravel()
    Hr = lin.H_xt[rows]
    S = H_tt - Hr.T @ Y[rows, 1:]
    S = 0.5 * (S + S.T)
    b = -lin.g_t + Hr.T @ Y[rows, 0]
    d_theta = linalg.solve(S, b, assume_a="pos")
    d_x = -Y[:, 0] - Y[:, 1:] @ d_theta
    return d_x.reshape(-1, NX), d_theta


def apply_step(traj, theta, dx, d_theta):
    return (
        Trajectory(traj.r + dx[:, IR], quat_boxplus(traj.q, dx[:, IPHI]), traj.v + dx[:, IV],
                   traj.ba + dx[:, IBA], traj.bg + dx[:, IBG]),
        theta + d_theta,
    )


def dense_system(problem, traj, theta):
    """Whitened residual vector and dense Jacobian; for small problems and tests.

    Columns follow the solver's ordering: 15 error states per epoch, then
    the weights.
    """
    n = len(traj)
    n_b = problem.model.n_b
    rows_e, rows_J = [], []
    ncol = n * NX + n_b

    def block(J_parts):
        M = np.zeros((J_parts[0][1].shape[0], ncol))
        for col0, J in J_parts:
            M[:, col0:col0 + J.shape[1]] += J
        return M

    if problem.include_anchor:
        e0, J0 = anchor_residual(problem, traj[0])
        rows_e.append(e0)
        rows_J.append(block([(0, J0)]))
    if n > 1:
        e, A, B = process_terms(problem, traj)
        for k in range(n - 1):
            rows_e.append(e[k])
            rows_J.append(block([(k * NX, A[k]), ((k + 1) * NX, B[k])]))
    if problem.include_measurements:
        e, J_r, J_phi, J_t = measurement_terms(problem, traj.r, traj.q, problem.log.mag, theta)
        for k in range(n):
            for i in range(problem.geometry.n_y):
                rows_e.append(e[k, i])
                rows_J.append(block([(k * NX + 0, J_r[k, i]), (k * NX + 6, J_phi[k, i]),
                                     (n * NX, J_t[k, i])]))
    sp = problem.model.prior_std
    rows_e.append(theta / sp)
    rows_J.append(block([(n * NX, np.diag(1.0 / sp))]))
    return np.concatenate(rows_e), np.vstack(rows_J)


# ------------------------------------------------------------------ solvers


def _errors(problem, traj):
    return traj.r - problem.log.truth.r[: len(traj)]


def solve(problem, init=None, theta0=None, options=None):
    """Levenberg-Marquardt MAP estimate of the trajectory and field weights."""
    options = SolverOptions() if options is None else options
    traj = dead_reckoning_guess(problem) if init is None else init
    if len(traj) != len(problem):
        raise ValueError("initial guess length does not match the problem")
    theta = np.zeros(problem.model.n_b) if theta0 is None else np.asarray(theta0, float).copy()

    current = cost(problem, traj, theta)
    if not np.isfinite(current):
        raise SolverError("non-finite cost at the initial guess")
    initial = current
    costs = [current]
    damping = options.initial_damping
    converged, message = False, "maximum iterations reached"
    it = 0
    for it in range(1, options.max_iterations + 1):
        lin = linearize(problem, traj, theta)
        if np.max(np.abs(lin.gradient)) <= options.grad_tol:
            converged, message = True, "gradient below tolerance"
            it -= 1
            break
        while True:
            try:
                dx, dt_ = solve_step(lin, damping)
                cand_traj, cand_theta = apply_step(traj, theta, dx, dt_)
                cand = cost(problem, cand_traj, cand_theta)
            except linalg.LinAlgError:
                cand = np.inf
            if np.isfinite(cand) and cand < current:
                damping = max(damping / options.damping_down, 1e-15)
                break
            damping *= options.damping_up
            if damping > options.max_damping:
                break
        if damping > options.max_damping:
            message = "damping limit reached"
            converged = True
            break
        decrease = (current - cand) / current
        traj, theta, current = cand_traj, cand_theta, cand
        costs.append(current)
        log.debug("iteration %d cost %.6g damping %.1e", it, current, damping)
        if decrease < options.rel_tol:
            converged, message = True, "relative cost decrease below tolerance"
            break
    report = SolverReport(it, initial, current, converged, message, costs)
    return SlamSolution(traj, theta, _errors(problem, traj), report)


def extend_by_dead_reckoning(problem, traj, n):
    """Append states up to epoch ``n`` by mechanizing from the last state."""
    k = len(traj)
    if n <= k:
        return traj[:n]
    lg = problem.log
    tail = dead_reckon(traj[k - 1], lg.f[k - 1:n], lg.w[k - 1:n], lg.dt)
    last = traj[k - 1]
    m = n - k
    return Trajectory(
        np.concatenate([traj.r, tail[0][1:]]),
        np.concatenate([traj.q, tail[2][1:]]),
        np.concatenate([traj.v, tail[1][1:]]),
        np.concatenate([traj.ba, np.tile(last.ba, (m, 1))]),
        np.concatenate([traj.bg, np.tile(last.bg, (m, 1))]),
    )


def measurement_information(problem, traj, start, stop):
    """Quadratic ``(H, b, c)`` in theta from measurements of epochs
    ``[start, stop)`` with their states held at ``traj``.

    Residuals are linear in theta for fixed poses, so the quadratic is exact.
    """
    n_b = problem.model.n_b
    H = np.zeros((n_b, n_b))
    b = np.zeros(n_b)
    c = 0.0
    zero = np.zeros(n_b)
    for k0 in range(start, stop, _EPOCH_CHUNK):
        sl = slice(k0, min(k0 + _EPOCH_CHUNK, stop))
        e, _, _, J_t = measurement_terms(problem, traj.r[sl], traj.q[sl], problem.log.mag[sl], zero)
        A = J_t.reshape(-1, n_b)
        ev = e.reshape(-1)
        H += A.T @ A
        b -= A.T @ ev
        c += float(ev @ ev)
    return H, b, c


def _concat(a, b):
    return Trajectory(*(np.concatenate([getattr(a, k), getattr(b, k)])
                        for k in ("r", "q", "v", "ba", "bg")))


_TRACKING = SolverOptions(max_iterations=30, rel_tol=1e-6)


def incremental_solve(problem, window=None, options=None, step=100, lag=200,
                      tracking_options=None):
    """Solve growing prefixes of the log, warm-starting each from the last.

    Every ``window`` epochs (default: only once, at the end) the whole
    prefix is re-optimized; the final solve covers the full log, so the
    result is a batch solution reached through a sequence of
    well-initialized subproblems.  Between those solves, new epochs are
    tracked ``step`` at a time: only the latest
    ``lag`` states and the weights are free, older states are held fixed and
    enter through the exact quadratic their measurements put on theta.  This
    keeps every dead-reckoned extension short, so each local solve starts
    inside the basin of the right optimum.
    """
    n = len(problem)
    window = n if window is None else window
    if window < 2:
        raise ValueError("window must be at least 2 epochs")
    if step < 1 or lag < step:
        raise ValueError("need step >= 1 and lag >= step")
    tracking_options = _TRACKING if tracking_options is None else tracking_options
    n_b = problem.model.n_b
    empty = (np.zeros((n_b, n_b)), np.zeros(n_b), 0.0)
    k = min(lag, n)
    sub = problem.head(k)
    first = solve(sub, dead_reckoning_guess(sub), options=tracking_options)
    traj, theta = first.states, first.theta
    frozen, info = 0, empty
    reports = []
    next_full = window
    while True:
        if k >= next_full or k == n:
            sol = solve(problem.head(k), traj, theta,
                        options=options if k == n else tracking_options)
            reports.append(sol.report)
            traj, theta = sol.states, sol.theta
            frozen, info = 0, empty
            next_full = k + window
            if k == n:
                break
        k_new = min(k + step, n)
        k0 = max(0, k_new - lag)
        if k0 > frozen:
            H, b, c = measurement_information(problem, traj, frozen, k0)
            info = (info[0] + H, info[1] + b, info[2] + c)
            frozen = k0
        init = _extend_segment(problem, traj, k0, k, k_new)
        seg = problem.head(k_new) if k0 == 0 else problem.segment(k0, k_new, traj[k0], info)
        local = solve(seg, init, theta, tracking_options)
        traj = _concat(traj[:k0], local.states) if k0 else local.states
        theta = local.theta
        k = k_new
    total = SolverReport(
        sum(r.iterations for r in reports), reports[0].initial_cost, sol.report.final_cost,
        all(r.converged for r in reports), f"{len(reports)} windows; last: {sol.report.message}",
        sol.report.costs)
    sol.report = total
    sol.window_reports = reports
    return sol


def _extend_segment(problem, traj, k0, k, k_new):
    """States ``k0..k-1`` of ``traj`` followed by dead reckoning to ``k_new``."""
    lg = problem.log
    last = traj[k - 1]
    r, v, q = dead_reckon(last, lg.f[k - 1:k_new], lg.w[k - 1:k_new], lg.dt)
    m = k_new - k
    head = traj[k0:k]
    return Trajectory(
        np.concatenate([head.r, r[1:]]), np.concatenate([head.q, q[1:]]),
        np.concatenate([head.v, v[1:]]), np.concatenate([head.ba, np.tile(last.ba, (m, 1))]),
        np.concatenate([head.bg, np.tile(last.bg, (m, 1))]))


# ------------------------------------------------------------------ metrics


@dataclass
class LapSummary:
    lap: int
    max_horizontal: float
    final_horizontal: float
    max_3d: float
    final_3d: float


def exploration_error_metrics(errors, dt, period):
    """Per-lap error statistics of an ``(N, 3)`` position error series.

    Returns ``(rows, end_of_first_lap_error)``; lap ``j`` covers epochs
    ``[j * period / dt, (j + 1) * period / dt)`` with a trailing partial lap
    kept only if it spans more than half a period.
    """
    if hasattr(errors, "errors"):
        errors = errors.errors
    errors = np.asarray(errors, dtype=float)
    n = len(errors)
    per = int(round(period / dt))
    n_laps = max(1, n // per + (1 if n % per > per / 2 else 0))
    rows = []
    for j in range(n_laps):
        seg = errors[j * per: min((j + 1) * per, n)]
        if len(seg) == 0:
            break
        h = np.linalg.norm(seg[:, :2], axis=1)
        f = np.linalg.norm(seg, axis=1)
        rows.append(LapSummary(j + 1, float(h.max()), float(h[-1]), float(f.max()), float(f[-1])))
    first = float(np.linalg.norm(errors[min(per, n) - 1]))
    return rows, first


def solution_errors_csv(path, times, errors):
    """Error series in the experiment CSV schema."""
    with open(path, "w") as fh:
        fh.write("t_s,err_x_m,err_y_m,err_z_m,err_norm_m\n")
        norm = np.linalg.norm(errors, axis=1)
        for t, e, nrm in zip(times, errors, norm):
            fh.write(f"{t:.2f},{e[0]:.9e},{e[1]:.9e},{e[2]:.9e},{nrm:.9e}\n")


def save_solution(solution, path, dt, report_path=None):
    """Solution CSV (t, estimated r and q, position error) plus report block."""
    with open(path, "w") as fh:
        fh.write("t,rx,ry,rz,qw,qx,qy,qz,pos_err_m\n")
        s = solution.states
        for k in range(len(s)):
            vals = [*s.r[k], *s.q[k], solution.error_norm[k]]
            fh.write(f"{k * dt:.2f}," + ",".join(f"{v:.12e}" for v in vals) + "\n")
    if report_path is not None:
        with open(report_path, "w") as fh:
            fh.write(solution.report.to_text())


def default_lap_period(angular_rate):
    return lap_period(angular_rate)
