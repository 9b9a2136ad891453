"""Rotation utilities on SO(3) and unit quaternions.

Conventions used throughout the package:

* quaternions are Hamilton, stored scalar-first ``(w, x, y, z)``;
* a state quaternion ``q`` rotates body-frame vectors into the navigation
  frame, ``v_nav = R(q) @ v_body``;
* attitude perturbations are applied on the right (body frame),
  ``q_true = q (x) Exp(dphi)``.

All functions accept leading batch dimensions.
"""

import numpy as np

_SMALL = 1.0


def skew(v):
    """Cross-product matrix, ``skew(a) @ b == cross(a, b)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _series(theta, m, derivative=False):
    """g_m(t) = sum_n (-1)^n t^(2n) / (2n+m)!  (or g_m'(t)/t)."""
    t2 = theta**2
    out = np.zeros_like(theta)
    fact = float(np.prod(np.arange(1, m + 1)))
    term_pow = np.ones_like(theta)
    for n in range(0, 14):
        if n > 0:
            fact *= (2 * n + m - 1) * (2 * n + m)
        if derivative:
            if n == 0:
                term_pow = np.ones_like(theta)
                continue
            out = out + (-1) ** n * 2 * n * term_pow / fact
            term_pow = term_pow * t2
        else:
            out = out + (-1) ** n * term_pow / fact
            term_pow = term_pow * t2
    return out


def _closed(theta, m, derivative=False):
    s, c = np.sin(theta), np.cos(theta)
    t = theta
    if m == 1:
        f = s / t
        d = (c * t - s) / t**2
    elif m == 2:
        f = (1 - c) / t**2
        d = (s * t - 2 * (1 - c)) / t**3
    elif m == 3:
        f = (t - s) / t**3
        d = ((1 - c) * t - 3 * (t - s)) / t**4
    elif m == 4:
        f = (t**2 / 2 + c - 1) / t**4
        d = ((t - s) * t - 4 * (t**2 / 2 + c - 1)) / t**5
    else:
        raise ValueError(m)
    return d / t if derivative else f


def coef(theta, m, derivative=False):
    """Coefficient functions of the SO(3) series ``Exp``, ``Jl`` and ``Gamma2``.

    ``coef(t, m)`` is ``sum_n (-1)^n t^(2n) / (2n+m)!`` for ``m`` in 1..4;
    with ``derivative=True`` it returns ``d/dt coef(t, m) / t``, which stays
    finite at ``t = 0``.
    """
    theta = np.asarray(theta, dtype=float)
    small = theta < _SMALL
    safe = np.where(small, _SMALL, theta)
    return np.where(small, _series(theta, m, derivative), _closed(safe, m, derivative))


def _poly(x, c1, c2, c0=1.0):
    K = skew(x)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return c0 * eye + c1[..., None, None] * K + c2[..., None, None] * (K @ K)


def so3_exp(x):
    """Rotation matrix ``Exp(x)`` of a rotation vector."""
    x = np.asarray(x, dtype=float)
    th = np.linalg.norm(x, axis=-1)
    # cos(t) = 1 - t^2 g_2(t)
    return _poly(x, coef(th, 1), coef(th, 2))


def jac_left(x):
    """Left Jacobian of SO(3): ``int_0^1 Exp(s x) ds``."""
    x = np.asarray(x, dtype=float)
    th = np.linalg.norm(x, axis=-1)
    return _poly(x, coef(th, 2), coef(th, 3))


def jac_right(x):
    return jac_left(-np.asarray(x, dtype=float))


def gamma2(x):
    """``int_0^1 int_0^s Exp(u x) du ds``; position kernel for constant rates."""
    x = np.asarray(x, dtype=float)
    th = np.linalg.norm(x, axis=-1)
    return _poly(x, coef(th, 3), coef(th, 4), c0=0.5)


def jac_right_inv(x):
    x = np.asarray(x, dtype=float)
    th = np.linalg.norm(x, axis=-1)
    small = th < 1e-3
    ts = np.where(small, 1.0, th)
    c2 = np.where(
        small,
        1.0 / 12.0 + th**2 / 720.0,
        1.0 / ts**2 - (1 + np.cos(ts)) / (2 * ts * np.sin(ts)),
    )
    return _poly(x, np.full_like(th, 0.5), c2)


def dpoly_dx(x, f, m1, m2):
    """Derivative w.r.t. ``x`` of ``(c0 I + c_m1 [x]x + c_m2 [x]x^2) f``.

    Used for the bias Jacobians of ``Jl(x) f`` (m1=2, m2=3) and
    ``Gamma2(x) f`` (m1=3, m2=4).
    """
    x = np.asarray(x, dtype=float)
    f = np.broadcast_to(np.asarray(f, dtype=float), x.shape)
    th = np.linalg.norm(x, axis=-1)
    c1, c2 = coef(th, m1), coef(th, m2)
    d1, d2 = coef(th, m1, True), coef(th, m2, True)
    xf = np.cross(x, f)
    xxf = np.cross(x, xf)
    xdotf = np.sum(x * f, axis=-1)
    outer = lambda a, b: a[..., :, None] * b[..., None, :]
    eye = np.eye(3)
    J = d1[..., None, None] * outer(xf, x)
    J = J - c1[..., None, None] * skew(f)
    J = J + d2[..., None, None] * outer(xxf, x)
    J = J + c2[..., None, None] * (
        xdotf[..., None, None] * eye + outer(x, f) - 2 * outer(f, x)
    )
    return J


# --------------------------------------------------------------- quaternions


def quat_mul(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pw, pv = p[..., :1], p[..., 1:]
    qw, qv = q[..., :1], q[..., 1:]
    w = pw * qw - np.sum(pv * qv, axis=-1, keepdims=True)
    v = pw * qv + qw * pv + np.cross(pv, qv)
    return np.concatenate([w, v], axis=-1)


def quat_conj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_exp(x):
    """Unit quaternion of rotation vector ``x``."""
    x = np.asarray(x, dtype=float)
    th = np.linalg.norm(x, axis=-1)
    half = 0.5 * th
    # sin(t/2)/t = 0.5 * sinc-like, use coef(.,1) = sin(t)/t at t/2
    s = 0.5 * coef(half, 1)
    return np.concatenate([np.cos(half)[..., None], s[..., None] * x], axis=-1)


def quat_log(q):
    """Rotation vector of a unit quaternion (shortest rotation)."""
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., :1] < 0, -q, q)
    w = np.clip(q[..., 0], -1.0, 1.0)
    v = q[..., 1:]
    n = np.linalg.norm(v, axis=-1)
    th = 2 * np.arctan2(n, w)
    small = n < 1e-12
    scale = np.where(small, 2.0 / np.where(w == 0, 1.0, w), th / np.where(small, 1.0, n))
    return scale[..., None] * v


def quat_to_matrix(q):
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_boxplus(q, dphi):
    """``q (x) Exp(dphi)``, renormalized."""
    return quat_normalize(quat_mul(q, quat_exp(dphi)))


def quat_boxminus(q1, q0):
    """Body-frame rotation vector taking ``q0`` to ``q1``: ``Log(q0^-1 q1)``."""
    return quat_log(quat_mul(quat_conj(q0), q1))


def yaw_quat(yaw):
    yaw = np.asarray(yaw, dtype=float)
    z = np.zeros_like(yaw)
    return np.stack([np.cos(yaw / 2), z, z, np.sin(yaw / 2)], axis=-1)
