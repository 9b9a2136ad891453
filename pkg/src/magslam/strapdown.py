"""Strapdown mechanization in a local level navigation frame (z up).

One step integrates body-frame specific force ``f`` and angular rate ``w``
that are held constant over the sampling interval.  With constant body
rates the attitude, velocity and position recursions have closed forms,

    R+ = R Exp(w dt)
    v+ = v + R Jl(w dt) f dt + g dt
    r+ = r + v dt + R Gamma2(w dt) f dt^2 + g dt^2 / 2

which coincide with midpoint integration up to second order in ``w dt`` and
are exact for piecewise-constant inputs.
"""

import numpy as np

from .rotations import (
    dpoly_dx,
    gamma2,
    jac_left,
    jac_right,
    jac_right_inv,
    quat_boxminus,
    quat_conj,
    quat_exp,
    quat_mul,
    quat_normalize,
    quat_to_matrix,
    skew,
)

GRAVITY = np.array([0.0, 0.0, -9.81])

# error-state layout shared by the smoother and the filter
IR, IV, IPHI, IBA, IBG = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15)
NX = 15


def step(r, v, q, f, w, dt):
    """One mechanization step; ``f`` and ``w`` are bias-compensated."""
    R = quat_to_matrix(q)
    x = np.asarray(w) * dt
    Jl = jac_left(x)
    G2 = gamma2(x)
    g = GRAVITY
    v_new = v + dt * np.einsum("...ij,...j->...i", R @ Jl, f) + g * dt
    r_new = r + v * dt + dt**2 * np.einsum("...ij,...j->...i", R @ G2, f) + 0.5 * g * dt**2
    q_new = quat_normalize(quat_mul(q, quat_exp(x)))
    return r_new, v_new, q_new


def dead_reckon(state0, f, w, dt):
    """Integrate an IMU stream from ``state0`` (a NavState).

    The biases of ``state0`` are held fixed and subtracted from every
    sample.  Returns arrays ``(r, v, q)`` with one row per IMU sample, the
    first row being the initial state; sample ``k`` maps epoch ``k`` to
    ``k + 1`` so the final sample is not used.
    """
    f = np.asarray(f, dtype=float)
    w = np.asarray(w, dtype=float)
    n = len(f)
    r = np.empty((n, 3))
    v = np.empty((n, 3))
    q = np.empty((n, 4))
    r[0], v[0], q[0] = state0.r, state0.v, state0.q
    fc = f - state0.ba
    wc = w - state0.bg
    for k in range(n - 1):
        r[k + 1], v[k + 1], q[k + 1] = step(r[k], v[k], q[k], fc[k], wc[k], dt)
    return r, v, q


def process_residual(r0, v0, q0, ba0, bg0, r1, v1, q1, ba1, bg1, f, w, dt, jacobians=True):
    """Residual ``x1 [-] f(x0, u)`` of one mechanization step (batched).

    Returns the 15-vector residual and, optionally, its Jacobians with
    respect to the error states of ``x0`` and ``x1`` (layout r, v, phi, ba,
    bg with right attitude perturbations).
    """
    fc = f - ba0
    x = (w - bg0) * dt
    R0 = quat_to_matrix(q0)
    Jl = jac_left(x)
    G2 = gamma2(x)
    A = np.einsum("...ij,...j->...i", Jl, fc)
    B = np.einsum("...ij,...j->...i", G2, fc)
    v_pred = v0 + dt * np.einsum("...ij,...j->...i", R0, A) + GRAVITY * dt
    r_pred = r0 + v0 * dt + dt**2 * np.einsum("...ij,...j->...i", R0, B) + 0.5 * GRAVITY * dt**2
    q_pred = quat_mul(q0, quat_exp(x))
    e_phi = quat_boxminus(q1, q_pred)

    shape = np.shape(r0)[:-1]
    res = np.empty(shape + (NX,))
    res[..., IR] = r1 - r_pred
    res[..., IV] = v1 - v_pred
    res[..., IPHI] = e_phi
    res[..., IBA] = ba1 - ba0
    res[..., IBG] = bg1 - bg0
    if not jacobians:
        return res

    eye = np.broadcast_to(np.eye(3), shape + (3, 3))
    J0 = np.zeros(shape + (NX, NX))
    J1 = np.zeros(shape + (NX, NX))
    Jr_inv_e = jac_right_inv(e_phi)

    # d(pred)/d(x0); residual takes the negative
    dA_dx = dpoly_dx(x, fc, 2, 3)
    dB_dx = dpoly_dx(x, fc, 3, 4)
    J0[..., IR, IR] = -eye
    J0[..., IR, IV] = -dt * eye
    J0[..., IR, IPHI] = dt**2 * R0 @ skew(B)
    J0[..., IR, IBA] = dt**2 * R0 @ G2
    J0[..., IR, IBG] = dt**3 * R0 @ dB_dx
    J0[..., IV, IV] = -eye
    J0[..., IV, IPHI] = dt * R0 @ skew(A)
    J0[..., IV, IBA] = dt * R0 @ Jl
    J0[..., IV, IBG] = dt**2 * R0 @ dA_dx

    M = quat_to_matrix(quat_mul(quat_conj(q0), q1))
    J0[..., IPHI, IPHI] = -Jr_inv_e @ np.swapaxes(M, -1, -2)
    RE = quat_to_matrix(quat_exp(e_phi))
    J0[..., IPHI, IBG] = dt * Jr_inv_e @ np.swapaxes(RE, -1, -2) @ jac_right(x)
    J0[..., IBA, IBA] = -eye
    J0[..., IBG, IBG] = -eye

    J1[..., IR, IR] = eye
    J1[..., IV, IV] = eye
    J1[..., IPHI, IPHI] = Jr_inv_e
    J1[..., IBA, IBA] = eye
    J1[..., IBG, IBG] = eye
    return res, J0, J1


def process_noise(acc_density, gyro_density, acc_rw, gyro_rw, dt):
    """Discrete covariance of one step's residual (15x15).

    Accelerometer white noise drives velocity and position with the
    continuous-time integrated-random-walk correlation; gyro noise drives
    attitude; bias random walks are independent.
    """
    qa, qg = acc_density**2, gyro_density**2
    Q = np.zeros((NX, NX))
    eye = np.eye(3)
    Q[IR, IR] = qa * dt**3 / 3 * eye
    Q[IR, IV] = Q[IV, IR] = qa * dt**2 / 2 * eye
    Q[IV, IV] = qa * dt * eye
    Q[IPHI, IPHI] = qg * dt * eye
    Q[IBA, IBA] = acc_rw**2 * dt * eye
    Q[IBG, IBG] = gyro_rw**2 * dt * eye
    return Q
