import filecmp
import os

import numpy as np
import pytest

from magslam import basis, cli, experiment
from magslam.field import GroundTruthField

SMALL = """
[run]
seed = 3
[trajectory]
laps = 0.1
[model]
n_b = 20
[solver]
window = 60
step = 20
lag = 40
max_iterations = 10
[resolution]
counts = 10 30
grid_step = 0.2
"""


def write_cfg(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.fixture()
def small_cfg(tmp_path):
    return write_cfg(tmp_path, SMALL)


def test_reference_config_is_valid():
    assert experiment.validate_config(experiment.default_config_path()) == []
    cfg = experiment.load_config(experiment.default_config_path())
    assert cfg.n_b == 250 and cfg.laps == 3 and cfg.estimators == experiment.ESTIMATORS
    assert cfg.sensors.gyro_bias_deg == (-0.01, -1.39, -2.14)


def test_defaults_fill_missing_keys(tmp_path):
    cfg = experiment.load_config(write_cfg(tmp_path, "[run]\nseed = 5\n"))
    ref = experiment.load_config(experiment.default_config_path())
    assert cfg.seed == 5
    assert cfg.n_b == ref.n_b and cfg.radius == ref.radius


def test_negative_radius_diagnostic(tmp_path):
    diags = experiment.validate_config(write_cfg(tmp_path, "[trajectory]\nradius = -1\n"))
    assert len(diags) == 1
    assert "[trajectory] radius" in diags[0] and "positive" in diags[0]


def test_small_basis_diagnostic(tmp_path):
    diags = experiment.validate_config(write_cfg(tmp_path, "[model]\nn_b = 2\n"))
    assert len(diags) == 1
    assert "[model] n_b" in diags[0] and "3" in diags[0]


def test_all_diagnostics_reported(tmp_path):
    text = "[model]\nn_b = 2\nbogus = 1\n[trajectory]\nradius = x\n[extra]\na = 1\n"
    diags = experiment.validate_config(write_cfg(tmp_path, text))
    assert len(diags) == 4
    joined = "\n".join(diags)
    for part in ("[model] n_b", "[model] bogus", "[trajectory] radius", "[extra]"):
        assert part in joined


def test_missing_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        experiment.validate_config(str(tmp_path / "nope.cfg"))


def test_cli_exit_codes(tmp_path, capsys):
    bad = write_cfg(tmp_path, "[model]\nn_b = 2\n", "bad.cfg")
    assert cli.main(["validate", "--config", bad]) == cli.EXIT_CONFIG
    assert "[model] n_b" in capsys.readouterr().err
    assert cli.main(["validate"]) == cli.EXIT_OK
    assert cli.main(["run", "--config", bad]) == cli.EXIT_CONFIG
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_CONFIG


def test_override_flags(small_cfg, tmp_path):
    cfg = experiment.load_config(small_cfg, seed=9, output=str(tmp_path / "o"), estimators="ins,slam")
    assert cfg.seed == 9 and cfg.output == str(tmp_path / "o")
    assert cfg.estimators == ("ins", "slam")
    with pytest.raises(experiment.ConfigError):
        experiment.load_config(small_cfg, estimators="kalman")


def test_run_writes_artifacts(small_cfg, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", small_cfg, "--out", str(out)]) == cli.EXIT_OK
    names = sorted(os.listdir(out))
    expected = ["comparison.svg", "errors_ins_array.csv", "errors_odometry_array.csv",
                "errors_slam_array.csv", "errors_slam_single.csv", "summary.txt"]
    assert names == expected
    header, data = experiment.read_errors_csv(out / "errors_slam_array.csv")
    assert header == ["t_s", "err_x_m", "err_y_m", "err_z_m", "err_norm_m"]
    assert data.shape == (120, 5)
    np.testing.assert_allclose(data[:, 4], np.linalg.norm(data[:, 1:4], axis=1), rtol=1e-8)
    summary = (out / "summary.txt").read_text()
    assert "exploration_ratio_single_over_array" in summary
    svg = (out / "comparison.svg").read_text()
    assert "time (s)" in svg and "position error (m)" in svg


def test_run_is_deterministic(small_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["run", "--config", small_cfg, "--out", str(d)]) == cli.EXIT_OK
    names = sorted(os.listdir(a))
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert mismatch == [] and errors == []


def test_seed_changes_output(small_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["run", "--config", small_cfg, "--out", str(a), "--estimators", "ins"])
    cli.main(["run", "--config", small_cfg, "--out", str(b), "--estimators", "ins", "--seed", "4"])
    assert (a / "errors_ins_array.csv").read_bytes() != (b / "errors_ins_array.csv").read_bytes()


def test_zero_noise_ins_curve(tmp_path):
    text = SMALL + """
[sensors]
acc_density = 0
acc_bias = 0 0 0
acc_rw = 0
gyro_density_deg = 0
gyro_bias_deg = 0 0 0
gyro_rw_deg = 0
mag_density = 0
"""
    cfg = experiment.load_config(write_cfg(tmp_path, text), estimators="ins")
    results = experiment.run(cfg, str(tmp_path / "out"))
    assert len(results) == 1
    assert np.linalg.norm(results[0].errors, axis=1).max() < 1e-6


def test_estimator_failure_keeps_partial_artifacts(small_cfg, tmp_path, monkeypatch):
    real = experiment.run_estimator

    def flaky(name, log_, model, cfg):
        if name == "odometry":
            raise RuntimeError("boom")
        return real(name, log_, model, cfg)

    monkeypatch.setattr(experiment, "run_estimator", flaky)
    out = tmp_path / "out"
    code = cli.main(["run", "--config", small_cfg, "--out", str(out), "--estimators", "ins,odometry"])
    assert code == cli.EXIT_ESTIMATOR
    assert (out / "errors_ins_array.csv").exists()
    assert not (out / "errors_odometry_array.csv").exists()
    assert (out / "summary.txt").exists()


def test_resolution_command(small_cfg, tmp_path):
    out = tmp_path / "res"
    assert cli.main(["resolution", "--config", small_cfg, "--out", str(out)]) == cli.EXIT_OK
    data = np.loadtxt(out / "resolution.csv", delimiter=",", skiprows=1)
    assert (out / "resolution.csv").read_text().splitlines()[0] == "n_b,density_per_m2,rmse_uT"
    cfg = experiment.load_config(small_cfg)
    direct = basis.resolution_study(experiment.build_field(cfg), cfg.footprint(cfg.resolution_margin),
                                    cfg.counts, cfg.grid_step, cfg.resolution_padding,
                                    cfg.lengthscale, cfg.signal_std, cfg.resolution_noise_std)
    np.testing.assert_allclose(data[:, 2], [r[2] for r in direct], rtol=1e-8)
    assert data[1, 2] < data[0, 2]


def test_resolution_densities():
    cfg = experiment.load_config(experiment.default_config_path())
    lo, hi = cfg.footprint(cfg.resolution_margin)
    area = basis.footprint_area((lo, hi))
    assert area == pytest.approx(2.0, abs=0.1)
    np.testing.assert_allclose(np.array(cfg.counts) / area, [5, 50, 500], rtol=0.05)


def test_homogeneous_resolution(tmp_path):
    cfg = experiment.load_config(write_cfg(tmp_path, "[resolution]\ncounts = 3\ngrid_step = 0.2\n"))
    rows = experiment.resolution_rows(cfg, reference=GroundTruthField())
    assert rows[0][0] == 3 and rows[0][2] <= 1e-6


def test_partial_lap_metrics(small_cfg):
    cfg = experiment.load_config(small_cfg, estimators="ins")
    datasets = experiment.build_datasets(cfg)
    assert set(datasets) == {"array", "single"}
    res = experiment.run_estimator("ins", datasets["array"], None, cfg)
    assert len(res.laps) == 1 and len(res.errors) == 120
