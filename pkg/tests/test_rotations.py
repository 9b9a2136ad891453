import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm
from scipy.spatial.transform import Rotation

from magslam.rotations import (coef, dpoly_dx, gamma2, jac_left, jac_right, jac_right_inv,
                               quat_boxminus, quat_boxplus, quat_conj, quat_exp, quat_log,
                               quat_mul, quat_to_matrix, skew, so3_exp)

from conftest import central_diff, random_quat

vec3 = arrays(float, 3, elements=st.floats(-3.0, 3.0))


def test_skew_is_cross_product(rng):
    a, b = rng.normal(size=(2, 3))
    np.testing.assert_allclose(skew(a) @ b, np.cross(a, b), atol=1e-15)


@pytest.mark.parametrize("theta", [0.0, 1e-8, 1e-3, 0.5, 0.999, 1.0, 1.001, 2.5, 3.1])
def test_exp_matches_matrix_exponential(theta):
    axis = np.array([0.3, -0.5, 0.8]) / np.linalg.norm([0.3, -0.5, 0.8])
    x = theta * axis
    np.testing.assert_allclose(so3_exp(x), expm(skew(x)), atol=1e-14)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_coefficients_continuous_at_switch(m):
    lo, hi = coef(np.array([1 - 1e-12, 1 + 1e-12]), m)
    assert abs(lo - hi) < 1e-11
    dlo, dhi = coef(np.array([1 - 1e-12, 1 + 1e-12]), m, derivative=True)
    assert abs(dlo - dhi) < 1e-10


@pytest.mark.parametrize("m", [1, 2, 3, 4])
@pytest.mark.parametrize("t", [0.2, 0.9, 1.4, 2.7])
def test_coefficient_derivative(m, t):
    h = 1e-6
    fd = (coef(t + h, m) - coef(t - h, m)) / (2 * h)
    np.testing.assert_allclose(coef(t, m, derivative=True) * t, fd, rtol=1e-7)


@given(vec3)
@settings(max_examples=60, deadline=None)
def test_left_jacobian_integral_identity(x):
    # Jl(x) = int_0^1 Exp(s x) ds and Gamma2(x) = int_0^1 (1 - s) Exp(s x) ds
    s = np.linspace(0.0, 1.0, 2001)
    E = so3_exp(s[:, None] * x)
    w = np.full_like(s, 1.0)
    w[0] = w[-1] = 0.5
    w /= w.sum()
    np.testing.assert_allclose(jac_left(x), np.einsum("s,sij->ij", w, E), atol=1e-6)
    np.testing.assert_allclose(gamma2(x), np.einsum("s,sij->ij", w * (1 - s), E), atol=1e-6)


@given(vec3)
@settings(max_examples=60, deadline=None)
def test_right_jacobian_inverse(x):
    np.testing.assert_allclose(jac_right(x) @ jac_right_inv(x), np.eye(3), atol=1e-10)


def test_right_jacobian_first_order(rng):
    x = rng.normal(size=3)
    d = 1e-7 * rng.normal(size=3)
    lhs = so3_exp(x + d)
    rhs = so3_exp(x) @ so3_exp(jac_right(x) @ d)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


@pytest.mark.parametrize("m1,m2,fun", [(2, 3, jac_left), (3, 4, gamma2)])
def test_dpoly_dx_matches_finite_differences(rng, m1, m2, fun):
    for x in (rng.normal(size=3), 1e-4 * rng.normal(size=3), 2.5 * rng.normal(size=3)):
        f = rng.normal(size=3)
        fd = central_diff(lambda y: fun(y) @ f, x)
        np.testing.assert_allclose(dpoly_dx(x, f, m1, m2), fd, atol=1e-8)


def test_quaternion_matches_scipy(rng):
    q = random_quat(rng, 20)
    ours = quat_to_matrix(q)
    ref = Rotation.from_quat(q[:, [1, 2, 3, 0]]).as_matrix()
    np.testing.assert_allclose(ours, ref, atol=1e-14)


def test_quat_product_composes_rotations(rng):
    p, q = random_quat(rng), random_quat(rng)
    np.testing.assert_allclose(quat_to_matrix(quat_mul(p, q)),
                               quat_to_matrix(p) @ quat_to_matrix(q), atol=1e-14)
    np.testing.assert_allclose(quat_mul(q, quat_conj(q)), [1, 0, 0, 0], atol=1e-15)


@given(arrays(float, 3, elements=st.floats(-3.1, 3.1)))
@settings(max_examples=80, deadline=None)
def test_quat_log_inverts_exp(x):
    if np.linalg.norm(x) >= np.pi:
        x = x / np.linalg.norm(x) * 3.0
    np.testing.assert_allclose(quat_log(quat_exp(x)), x, atol=1e-10)
    np.testing.assert_allclose(quat_to_matrix(quat_exp(x)), so3_exp(x), atol=1e-13)


def test_boxplus_boxminus_roundtrip(rng):
    q = random_quat(rng, 10)
    d = 0.4 * rng.normal(size=(10, 3))
    q1 = quat_boxplus(q, d)
    np.testing.assert_allclose(quat_boxminus(q1, q), d, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(q1, axis=1), 1.0, atol=1e-15)
