import numpy as np
import pytest

from magslam.field import GroundTruthField, make_field
from magslam.kinematics import (DEG, ArrayGeometry, NavState, SensorParams, default_array,
                                generate_circle, lap_period, load_log, save_log, sensor_positions,
                                simulate_dataset, simulate_imu, simulate_mag_array,
                                single_mag_variant, single_sensor)
from magslam.rotations import quat_to_matrix

KEEP = ((-0.8, -0.8, 0.8), (0.8, 0.8, 1.2))


@pytest.fixture(scope="module")
def rich_field():
    return make_field(40, 20.0, 7, keep_out=KEEP)


@pytest.fixture(scope="module")
def short_log(rich_field):
    return simulate_dataset(rich_field, laps=0.1, seed=4)


def test_default_array_layout():
    g = default_array()
    assert g.n_y == 30
    np.testing.assert_allclose(g.lever_arms.mean(axis=0), 0, atol=1e-12)
    d = g.lever_arms[:, None] - g.lever_arms[None]
    np.testing.assert_allclose(np.linalg.norm(d, axis=-1).max(), np.hypot(0.32, 0.22), rtol=1e-12)
    xs = np.unique(np.round(g.lever_arms[:, 0], 12))
    ys = np.unique(np.round(g.lever_arms[:, 1], 12))
    np.testing.assert_allclose(np.diff(xs), 0.064, rtol=1e-9)
    np.testing.assert_allclose(np.diff(ys), 0.055, rtol=1e-9)


@pytest.mark.parametrize("arms", [np.zeros((0, 3)), np.array([[0.6, 0, 0]])])
def test_geometry_validation(arms):
    with pytest.raises(ValueError):
        ArrayGeometry(arms)


def test_navstate_requires_unit_quaternion():
    with pytest.raises(ValueError):
        NavState(np.zeros(3), np.array([1.0, 0.1, 0, 0]), np.zeros(3))


def test_circle_epoch_count_and_period():
    truth, f, w = generate_circle(angular_rate=30 * DEG, laps=3, rate_hz=100)
    assert lap_period(30 * DEG) == pytest.approx(12.0)
    assert len(truth) == len(f) == len(w) == 3600


def test_circle_specific_force_constant():
    _, f, w = generate_circle(radius=1.0, angular_rate=30 * DEG, laps=1)
    expected = np.sqrt(9.81**2 + (0.5236**2 * 1.0) ** 2)
    np.testing.assert_allclose(np.linalg.norm(f, axis=1), expected, rtol=1e-4)
    np.testing.assert_allclose(np.linalg.norm(f, axis=1), np.linalg.norm(f[0]), rtol=1e-12)
    np.testing.assert_allclose(w, np.tile([0, 0, 30 * DEG], (len(w), 1)))


def test_circle_body_x_tangent_and_closed():
    truth, _, _ = generate_circle(laps=2)
    R = quat_to_matrix(truth.q)
    xb = R[:, :, 0]
    vhat = truth.v / np.linalg.norm(truth.v, axis=1, keepdims=True)
    np.testing.assert_allclose(xb, vhat, atol=1e-12)
    np.testing.assert_allclose(truth.r[1200], truth.r[0], atol=1e-9)
    np.testing.assert_allclose(np.linalg.norm(truth.q, axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("kw", [dict(radius=0.0), dict(laps=-1), dict(rate_hz=0), dict(angular_rate=0)])
def test_circle_rejects_nonpositive(kw):
    with pytest.raises(ValueError):
        generate_circle(**kw)


def test_initial_biases_from_defaults():
    p = SensorParams()
    _, f0, w0 = generate_circle(laps=0.05)
    f, w, ba, bg = simulate_imu(f0, w0, p, seed=0)
    np.testing.assert_allclose(ba[0], [-0.32, -0.59, -0.37])
    np.testing.assert_allclose(bg[0] / DEG, [-0.01, -1.39, -2.14])


def test_noiseless_imu_is_ideal_plus_bias():
    p = SensorParams(acc_density=0.0, acc_rw=0.0, gyro_density_deg=0.0, gyro_rw_deg=0.0)
    _, f0, w0 = generate_circle(laps=0.1)
    f, w, _, _ = simulate_imu(f0, w0, p, seed=3)
    np.testing.assert_array_equal(f, f0 + np.asarray(p.acc_bias))
    np.testing.assert_array_equal(w, w0 + p.gyro_bias)


def test_imu_noise_variance():
    p = SensorParams(acc_rw=0.0, gyro_rw_deg=0.0)
    n = 100_000
    f, w, _, _ = simulate_imu(np.zeros((n, 3)), np.zeros((n, 3)), p, seed=11)
    var_f = np.var(f - np.asarray(p.acc_bias), axis=0)
    var_w = np.var(w - p.gyro_bias, axis=0)
    np.testing.assert_allclose(var_f, p.acc_density**2 * p.rate_hz, rtol=0.05)
    np.testing.assert_allclose(var_w, p.gyro_density**2 * p.rate_hz, rtol=0.05)


def test_bias_random_walk_increment_std():
    p = SensorParams(acc_rw=1e-2)
    n = 50_000
    _, _, ba, _ = simulate_imu(np.zeros((n, 3)), np.zeros((n, 3)), p, seed=5)
    np.testing.assert_allclose(np.std(np.diff(ba, axis=0)), 1e-2 * np.sqrt(0.01), rtol=0.05)


def test_mag_noise_std_from_density():
    assert SensorParams().mag_std == pytest.approx(0.2)
    truth, _, _ = generate_circle(laps=0.5)
    y = simulate_mag_array(GroundTruthField(), truth, default_array(), 0.02, 100.0, seed=1)
    clean = simulate_mag_array(GroundTruthField(), truth, default_array(), 0.0, 100.0, seed=1)
    assert np.std(y - clean) == pytest.approx(0.2, rel=0.05)


def test_homogeneous_identity_readings_identical():
    truth, _, _ = generate_circle(laps=0.1, start_angle=-np.pi / 2)
    one = truth[:1]
    one = type(truth)(one.r, np.array([[1.0, 0, 0, 0]]), one.v, one.ba, one.bg)
    y = simulate_mag_array(GroundTruthField(), one, default_array(), 0.0, 100.0, seed=0)
    np.testing.assert_allclose(y[0], np.tile([20.0, 0, 44.0], (30, 1)), atol=1e-12)


def test_noiseless_readings_match_field(rich_field):
    truth, _, _ = generate_circle(laps=0.2)
    g = default_array()
    y = simulate_mag_array(rich_field, truth, g, 0.0, 100.0, seed=0)
    pos = sensor_positions(truth, g)
    R = quat_to_matrix(truth.q)
    for k in (0, 77, 239):
        for i in (0, 13, 29):
            np.testing.assert_allclose(y[k, i], R[k].T @ rich_field(pos[k, i]), rtol=1e-13)


def test_sensor_streams_independent_of_count(rich_field):
    truth, _, _ = generate_circle(laps=0.05)
    g = default_array()
    full = simulate_mag_array(rich_field, truth, g, 0.02, 100.0, seed=2)
    sub = simulate_mag_array(rich_field, truth, g.subset(range(4)), 0.02, 100.0, seed=2)
    np.testing.assert_array_equal(full[:, :4], sub)


def test_rigid_array_distances(rich_field):
    truth, _, _ = generate_circle(laps=1)
    pos = sensor_positions(truth, default_array())
    d = np.linalg.norm(pos[:, 0] - pos[:, 29], axis=1)
    assert np.ptp(d) <= 1e-12


def test_dataset_deterministic(rich_field):
    a = simulate_dataset(rich_field, laps=0.05, seed=9)
    b = simulate_dataset(rich_field, laps=0.05, seed=9)
    for name in ("f", "w", "mag"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = simulate_dataset(rich_field, laps=0.05, seed=10)
    assert not np.array_equal(a.mag, c.mag)


def test_single_variant(short_log):
    s = single_mag_variant(short_log)
    assert s.geometry.n_y == 1
    np.testing.assert_array_equal(s.geometry.lever_arms, np.zeros((1, 3)))
    np.testing.assert_array_equal(s.f, short_log.f)
    np.testing.assert_array_equal(s.w, short_log.w)
    assert s.mag_density == pytest.approx(0.02 / 30)
    clean = simulate_mag_array(short_log.field, short_log.truth, single_sensor(), 0.0, 100.0, 0)
    np.testing.assert_allclose(np.std(s.mag - clean), 0.2 / 30, rtol=0.2)


def test_log_roundtrip(short_log, tmp_path):
    save_log(short_log, tmp_path)
    back = load_log(tmp_path)
    np.testing.assert_array_equal(back.f, short_log.f)
    np.testing.assert_array_equal(back.w, short_log.w)
    np.testing.assert_array_equal(back.mag, short_log.mag)
    np.testing.assert_array_equal(back.truth.r, short_log.truth.r)
    np.testing.assert_array_equal(back.truth.q, short_log.truth.q)
    np.testing.assert_array_equal(back.geometry.lever_arms, short_log.geometry.lever_arms)
    pts = np.array([[0.1, 0.2, 1.0]])
    np.testing.assert_array_equal(back.field(pts), short_log.field(pts))
    header = (tmp_path / "imu.csv").read_text().splitlines()[0]
    assert header == "t,fx,fy,fz,wx,wy,wz"
    assert (tmp_path / "mag.csv").read_text().splitlines()[0] == "t,sensor_index,bx,by,bz"


def test_log_length_validation(short_log):
    from dataclasses import replace
    with pytest.raises(ValueError):
        replace(short_log, f=short_log.f[:-1])
