import numpy as np
import pytest

from magslam.field import (DipoleSource, FieldDomainError, GroundTruthField, LinearField,
                           evaluate_field, field_from_text, field_jacobian, field_to_text,
                           field_variation, make_field, sample_sources)

from conftest import central_diff

MU0 = 4e-7 * np.pi
KEEP = ((-0.8, -0.8, 0.8), (0.8, 0.8, 1.2))


def reference_dipole_sum(field, r):
    """Straight-line implementation used as an oracle."""
    total = np.array(field.background, dtype=float)
    for s in field.sources:
        d = np.asarray(r) - s.position
        n = np.linalg.norm(d)
        u = d / n
        total = total + MU0 / (4 * np.pi) * (3 * u * np.dot(s.moment, u) - s.moment) / n**3 * 1e6
    return total


@pytest.fixture(scope="module")
def rich_field():
    return make_field(40, 20.0, 7, keep_out=KEEP)


def interior_points(rng, n=100):
    lo, hi = np.array(KEEP[0]), np.array(KEEP[1])
    return rng.uniform(lo, hi, size=(n, 3))


def test_homogeneous_field():
    f = GroundTruthField()
    np.testing.assert_array_equal(f(np.array([[0.3, -2.0, 7.0]])), [[20.0, 0.0, 44.0]])
    np.testing.assert_array_equal(field_jacobian(f, np.zeros(3)), np.zeros((3, 3)))


def test_on_axis_dipole():
    m = 2.5
    f = GroundTruthField(np.array([20.0, 0, 44]), (DipoleSource(np.zeros(3), np.array([0, 0, m])),))
    d = 0.7
    b = f(np.array([0, 0, d])) - f.background
    np.testing.assert_allclose(b[:2], 0, atol=1e-15)
    np.testing.assert_allclose(b[2], MU0 / (2 * np.pi) * m / d**3 * 1e6, rtol=1e-13)


def test_decay_factor_eight():
    f = GroundTruthField(np.array([20.0, 0, 44]), (DipoleSource(np.zeros(3), np.array([0, 0, 3.0])),))
    b1 = f(np.array([0, 0, 0.5]))[2] - 44.0
    b2 = f(np.array([0, 0, 1.0]))[2] - 44.0
    assert abs(b1 / b2 / 8 - 1) <= 1e-9


def test_matches_reference_implementation(rich_field, rng):
    pts = interior_points(rng, 25)
    ours = rich_field(pts)
    ref = np.array([reference_dipole_sum(rich_field, p) for p in pts])
    np.testing.assert_allclose(ours, ref, rtol=1e-12, atol=1e-12)


def test_superposition(rng):
    a = sample_sources(5, ((-2, -2, -1), (2, 2, 0)), 5.0, seed=1)
    b = sample_sources(4, ((-2, -2, -1), (2, 2, 0)), 5.0, seed=2)
    bg = np.array([20.0, 0, 44])
    fa, fb = GroundTruthField(bg, a), GroundTruthField(bg, b)
    fab = GroundTruthField(bg, a + b)
    pts = rng.uniform([-1, -1, 0.5], [1, 1, 1.5], size=(20, 3))
    np.testing.assert_allclose(fab(pts), fa(pts) + fb(pts) - bg, rtol=1e-14, atol=1e-12)


def test_jacobian_matches_finite_differences(rich_field, rng):
    for p in interior_points(rng, 20):
        J = field_jacobian(rich_field, p)
        fd = central_diff(lambda x: rich_field(x), p, h=1e-5)
        assert np.abs(J - fd).max() <= 1e-5 * np.abs(J).max()


def test_jacobian_symmetric_trace_free(rich_field, rng):
    J = field_jacobian(rich_field, interior_points(rng, 100))
    norm = np.linalg.norm(J, axis=(1, 2))
    assert np.all(np.abs(np.trace(J, axis1=1, axis2=2)) <= 1e-9 * norm)
    assert np.all(np.linalg.norm(J - np.swapaxes(J, 1, 2), axis=(1, 2)) <= 1e-9 * norm)


def fd_curl_div(fun, p, h=1e-4):
    J = central_diff(fun, p, h=h)
    curl = np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])
    return curl, np.trace(J), np.abs(J).max()


def test_finite_difference_curl_and_divergence(rich_field, rng):
    for p in interior_points(rng, 100):
        curl, div, scale = fd_curl_div(rich_field, p)
        assert np.abs(curl).max() <= 1e-6 * scale
        assert abs(div) <= 1e-6 * scale


def test_exclusion_radius_enforced():
    f = GroundTruthField(np.array([20.0, 0, 44]), (DipoleSource(np.zeros(3), np.array([1.0, 0, 0])),),
                         exclusion_radius=0.1)
    with pytest.raises(FieldDomainError):
        f(np.array([0.05, 0, 0]))
    with pytest.raises(FieldDomainError):
        field_jacobian(f, np.array([0.0, 0.09, 0]))
    f(np.array([0.0, 0.0, 0.11]))


@pytest.mark.parametrize("bg", [(0, 0, 5.0), (0, 0, 150.0)])
def test_background_magnitude_checked(bg):
    with pytest.raises(ValueError):
        GroundTruthField(np.array(bg))


@pytest.mark.parametrize("moment", [(0, 0, 0), (np.nan, 0, 1)])
def test_invalid_dipole_rejected(moment):
    with pytest.raises(ValueError):
        DipoleSource(np.zeros(3), np.array(moment, float))


def test_sampling_deterministic():
    box = ((-1, -1, -1), (1, 1, 1))
    a, b = sample_sources(1, box, 1.0, seed=3), sample_sources(1, box, 1.0, seed=3)
    np.testing.assert_array_equal(a[0].position, b[0].position)
    np.testing.assert_array_equal(a[0].moment, b[0].moment)


def test_default_sources_outside_trajectory_box():
    f = make_field(40, 20.0, 7, keep_out=KEEP)
    assert len(f.sources) == 40
    lo, hi = np.array(KEEP[0]) - 0.3, np.array(KEEP[1]) + 0.3
    inside = np.all((f.positions > lo) & (f.positions < hi), axis=1)
    assert not inside.any()


@pytest.mark.parametrize("kwargs", [dict(count=0), dict(volume=((0, 0, 0), (1, 1, 0)))])
def test_sampling_preconditions(kwargs):
    args = dict(count=3, volume=((0, 0, 0), (1, 1, 1)), moment_scale=1.0, seed=0) | kwargs
    with pytest.raises(ValueError):
        sample_sources(**args)


def test_variation_across_trajectory(rich_field):
    t = np.linspace(0, 2 * np.pi, 400)
    pts = np.stack([0.6 * np.cos(t), 0.6 * np.sin(t), np.ones_like(t)], axis=1)
    assert 5.0 <= field_variation(rich_field, pts) <= 20.0


def test_text_roundtrip_is_exact(rich_field, rng):
    back = field_from_text(field_to_text(rich_field))
    pts = interior_points(rng, 10)
    np.testing.assert_array_equal(back(pts), rich_field(pts))
    assert back.seed == 7


def test_linear_field():
    G = np.array([[1.0, 2, 0], [2, -3, 1], [0, 1, 2]])
    f = LinearField(np.array([20.0, 0, 44]), G)
    p = np.array([0.1, -0.2, 0.3])
    np.testing.assert_allclose(f(p), [20 + 0.1 - 0.4, 0.2 + 0.6 + 0.3, 44 - 0.2 + 0.6])
    with pytest.raises(ValueError):
        LinearField(np.zeros(3), np.eye(3))
