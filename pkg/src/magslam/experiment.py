"""Config-driven experiments: SLAM comparison runs and the resolution table.

Configs are INI files.  Every key has a default (see ``DEFAULTS``), so a
config only needs to list what it changes; ``paper.cfg`` in the package
``configs`` directory spells the full reference scenario out.
"""

import configparser
import logging
import os
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from . import basis, kinematics, odometry, slam
from .field import make_field

log = logging.getLogger(__name__)

ESTIMATORS = ("slam", "odometry", "ins")

DEFAULTS = {
    "run": {"seed": "0", "output": "out", "estimators": "all"},
    "field": {
        "seed": "7",
        "sources": "40",
        "moment_scale": "20.0",
        "background": "20.0 0.0 44.0",
        "volume_lo": "-2.5 -2.5 -1.0",
        "volume_hi": "2.5 2.5 2.0",
        "keep_out_clearance": "0.2",
        "margin": "0.3",
    },
    "trajectory": {
        "radius": "0.6",
        "angular_rate_deg": "30.0",
        "laps": "3",
        "height": "1.0",
        "rate_hz": "100.0",
    },
    "sensors": {
        "acc_density": "0.01",
        "acc_bias": "-0.32 -0.59 -0.37",
        "acc_rw": "1e-6",
        "gyro_density_deg": "0.05",
        "gyro_bias_deg": "-0.01 -1.39 -2.14",
        "gyro_rw_deg": "1e-5",
        "mag_density": "0.02",
        "array": "on",
        "single": "on",
        "single_divisor": "30.0",
    },
    "model": {
        "n_b": "250",
        "lengthscale": "0.3",
        "signal_std": "5.0",
        "footprint_margin": "0.3",
        "lateral_padding": "0.6",
        "vertical_padding": "0.6",
    },
    "solver": {"window": "3600", "step": "100", "lag": "200", "max_iterations": "100"},
    "odometry": {"field_noise_m": "0.5", "field_noise_j": "1.0", "model_std": "0.5"},
    "resolution": {
        "counts": "10 100 1000",
        "footprint_margin": "0.1",
        "grid_step": "0.05",
        "padding": "0.3",
        "noise_std": "0.01",
    },
}


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class EstimatorError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    output: str
    estimators: tuple
    field_seed: int
    sources: int
    moment_scale: float
    background: tuple
    volume: tuple
    keep_out_clearance: float
    margin: float
    radius: float
    angular_rate_deg: float
    laps: float
    height: float
    rate_hz: float
    sensors: kinematics.SensorParams
    use_array: bool
    use_single: bool
    single_divisor: float
    n_b: int
    lengthscale: float
    signal_std: float
    footprint_margin: float
    lateral_padding: float
    vertical_padding: float
    window: int
    step: int
    lag: int
    max_iterations: int
    field_noise_m: float
    field_noise_j: float
    model_std: float
    counts: tuple
    resolution_margin: float
    grid_step: float
    resolution_padding: float
    resolution_noise_std: float
    source: str = field(default="", compare=False)

    @property
    def angular_rate(self):
        return self.angular_rate_deg * kinematics.DEG

    @property
    def lap_period(self):
        return kinematics.lap_period(self.angular_rate)

    def footprint(self, margin=None):
        """Horizontal box around the circle at the trajectory height."""
        m = self.footprint_margin if margin is None else margin
        ext = self.radius + m
        return (np.array([-ext, -ext, self.height]), np.array([ext, ext, self.height]))

    @property
    def domain(self):
        lo, hi = self.footprint()
        pad = np.array([self.lateral_padding, self.lateral_padding, self.vertical_padding])
        return lo - pad, hi + pad

    @property
    def keep_out(self):
        """Box around the circle, grown by the clearance; sources stay outside
        it by a further ``margin``."""
        c = self.keep_out_clearance
        ext = self.radius + c
        return (np.array([-ext, -ext, self.height - c]), np.array([ext, ext, self.height + c]))


def default_config_path():
    return str(resources.files("magslam") / "configs" / "paper.cfg")


def _vector(text, n):
    vals = [float(x) for x in text.replace(",", " ").split()]
    if len(vals) != n:
        raise ValueError(f"expected {n} numbers")
    return tuple(vals)


def _read(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_dict(DEFAULTS)
    with open(path) as fh:
        cp.read_file(fh, source=path)
    return cp


def _parse(cp, source=""):
    """Build a config while collecting every problem instead of stopping at the first."""
    diags = []

    def get(section, key, conv, check=None, constraint=""):
        raw = cp.get(section, key)
        try:
            val = conv(raw)
        except (TypeError, ValueError) as exc:
            diags.append(f"[{section}] {key} = {raw!r}: cannot parse ({exc})")
            return None
        if check is not None and not check(val):
            diags.append(f"[{section}] {key} = {raw!r}: must be {constraint}")
        return val

    def flag(raw):
        low = raw.strip().lower()
        if low in ("on", "yes", "true", "1"):
            return True
        if low in ("off", "no", "false", "0"):
            return False
        raise ValueError("expected on/off")

    pos = lambda x: x > 0
    nonneg = lambda x: x >= 0

    for section in cp.sections():
        if section not in DEFAULTS:
            diags.append(f"[{section}]: unknown section")
            continue
        for key in cp[section]:
            if key not in DEFAULTS[section]:
                diags.append(f"[{section}] {key}: unknown key")

    def estimators(raw):
        names = [s for s in raw.replace(",", " ").split() if s]
        if names == ["all"]:
            return ESTIMATORS
        bad = [s for s in names if s not in ESTIMATORS]
        if bad or not names:
            raise ValueError(f"choose from {', '.join(ESTIMATORS)} or all")
        return tuple(dict.fromkeys(names))

    def counts(raw):
        return tuple(int(x) for x in raw.replace(",", " ").split())

    seed = get("run", "seed", int, nonneg, "a non-negative integer")
    out = cp.get("run", "output")
    est = get("run", "estimators", estimators)
    fseed = get("field", "seed", int, nonneg, "a non-negative integer")
    sources = get("field", "sources", int, lambda x: x >= 1, "at least 1")
    mscale = get("field", "moment_scale", float, pos, "positive")
    bg = get("field", "background", lambda s: _vector(s, 3),
             lambda b: 10.0 <= np.linalg.norm(b) <= 100.0, "of magnitude within [10, 100] uT")
    vlo = get("field", "volume_lo", lambda s: _vector(s, 3))
    vhi = get("field", "volume_hi", lambda s: _vector(s, 3))
    if vlo is not None and vhi is not None and not all(a < b for a, b in zip(vlo, vhi)):
        diags.append("[field] volume_lo/volume_hi: volume_lo must be below volume_hi on every axis")
    clear = get("field", "keep_out_clearance", float, nonneg, "non-negative")
    margin = get("field", "margin", float, nonneg, "non-negative")
    radius = get("trajectory", "radius", float, pos, "positive")
    rate = get("trajectory", "angular_rate_deg", float, pos, "positive")
    laps = get("trajectory", "laps", float, pos, "positive")
    height = get("trajectory", "height", float)
    hz = get("trajectory", "rate_hz", float, pos, "positive")
    sensors = dict(
        acc_density=get("sensors", "acc_density", float, nonneg, "non-negative"),
        acc_bias=get("sensors", "acc_bias", lambda s: _vector(s, 3)),
        acc_rw=get("sensors", "acc_rw", float, nonneg, "non-negative"),
        gyro_density_deg=get("sensors", "gyro_density_deg", float, nonneg, "non-negative"),
        gyro_bias_deg=get("sensors", "gyro_bias_deg", lambda s: _vector(s, 3)),
        gyro_rw_deg=get("sensors", "gyro_rw_deg", float, nonneg, "non-negative"),
        mag_density=get("sensors", "mag_density", float, nonneg, "non-negative"),
    )
    use_array = get("sensors", "array", flag)
    use_single = get("sensors", "single", flag)
    if use_array is False and use_single is False:
        diags.append("[sensors] array/single: at least one dataset must be on")
    divisor = get("sensors", "single_divisor", float, pos, "positive")
    n_b = get("model", "n_b", int, lambda n: n >= basis.LINEAR_COUNT,
              f"at least {basis.LINEAR_COUNT} (the linear terms)")
    ell = get("model", "lengthscale", float, pos, "positive")
    sig = get("model", "signal_std", float, pos, "positive")
    fmargin = get("model", "footprint_margin", float, nonneg, "non-negative")
    lat = get("model", "lateral_padding", float, nonneg, "non-negative")
    vert = get("model", "vertical_padding", float, pos, "positive")
    window = get("solver", "window", int, lambda w: w >= 2, "at least 2")
    step = get("solver", "step", int, lambda w: w >= 1, "at least 1")
    lag = get("solver", "lag", int, lambda w: w >= 1, "at least 1")
    if step is not None and lag is not None and lag < step:
        diags.append("[solver] lag: must be at least step")
    iters = get("solver", "max_iterations", int, lambda w: w >= 1, "at least 1")
    fnm = get("odometry", "field_noise_m", float, nonneg, "non-negative")
    fnj = get("odometry", "field_noise_j", float, nonneg, "non-negative")
    mstd = get("odometry", "model_std", float, nonneg, "non-negative")
    cnt = get("resolution", "counts", counts,
              lambda c: len(c) > 0 and min(c) >= basis.LINEAR_COUNT,
              f"a nonempty list of counts, each at least {basis.LINEAR_COUNT}")
    rmargin = get("resolution", "footprint_margin", float, nonneg, "non-negative")
    gstep = get("resolution", "grid_step", float, pos, "positive")
    rpad = get("resolution", "padding", float, nonneg, "non-negative")
    rnoise = get("resolution", "noise_std", float, pos, "positive")

    if diags:
        return None, diags
    params = kinematics.SensorParams(rate_hz=hz, **sensors)
    cfg = ExperimentConfig(
        seed, out, est, fseed, sources, mscale, bg, (vlo, vhi), clear, margin, radius, rate,
        laps, height, hz, params, use_array, use_single, divisor, n_b, ell, sig, fmargin, lat,
        vert, window, step, lag, iters, fnm, fnj, mstd, cnt, rmargin, gstep, rpad, rnoise, source)
    return cfg, []


def validate_config(path):
    """Diagnostics for a config file; an empty list means it is valid."""
    try:
        cp = _read(path)
    except configparser.Error as exc:
        return [f"syntax: {exc}".replace("\n", " ")]
    return _parse(cp, path)[1]


def load_config(path, seed=None, output=None, estimators=None):
    """Parse and validate; command-line style overrides replace config values."""
    try:
        cp = _read(path)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}".replace("\n", " ")]) from exc
    if seed is not None:
        cp.set("run", "seed", str(seed))
    if output is not None:
        cp.set("run", "output", str(output))
    if estimators is not None:
        cp.set("run", "estimators", estimators if isinstance(estimators, str) else " ".join(estimators))
    cfg, diags = _parse(cp, path)
    if diags:
        raise ConfigError(diags)
    return cfg


# ------------------------------------------------------------------ scenario


def build_field(cfg):
    return make_field(cfg.sources, cfg.moment_scale, cfg.field_seed, cfg.background,
                      cfg.volume, keep_out=cfg.keep_out, margin=cfg.margin)


def build_model(cfg):
    return basis.build_basis(cfg.domain, cfg.n_b, cfg.lengthscale, cfg.signal_std)


def build_datasets(cfg, gt_field=None):
    """Array log plus its single-magnetometer twin (same IMU samples)."""
    gt_field = build_field(cfg) if gt_field is None else gt_field
    array_log = kinematics.simulate_dataset(
        gt_field, cfg.sensors, radius=cfg.radius, angular_rate=cfg.angular_rate, laps=cfg.laps,
        height=cfg.height, seed=cfg.seed)
    out = {}
    if cfg.use_array:
        out["array"] = array_log
    if cfg.use_single:
        out["single"] = kinematics.single_mag_variant(array_log, cfg.single_divisor)
    return out


@dataclass
class EstimatorResult:
    estimator: str
    dataset: str
    errors: np.ndarray
    laps: list
    end_of_first_lap: float
    info: dict = field(default_factory=dict)

    @property
    def final_error(self):
        return float(np.linalg.norm(self.errors[-1]))


def run_estimator(name, log_, model, cfg):
    """Position error series of one estimator on one dataset."""
    if name == "slam":
        problem = slam.build_problem(log_, model)
        opts = replace(slam.SolverOptions(), max_iterations=cfg.max_iterations)
        sol = slam.incremental_solve(problem, cfg.window, opts, step=cfg.step, lag=cfg.lag)
        errors = sol.errors
        info = {"iterations": sol.report.iterations, "final_cost": sol.report.final_cost,
                "converged": sol.report.converged}
    elif name == "odometry":
        ocfg = odometry.OdometryConfig.from_params(
            cfg.sensors, field_noise_m=cfg.field_noise_m, field_noise_j=cfg.field_noise_j,
            model_std=cfg.model_std)
        if log_.mag_density > 0:
            ocfg = replace(ocfg, mag_std=log_.mag_density / np.sqrt(log_.dt))
        errors = odometry.run_filter(log_, cfg=ocfg).errors
        info = {}
    elif name == "ins":
        errors = odometry.run_ins(log_)[3]
        info = {}
    else:
        raise ValueError(f"unknown estimator {name!r}")
    if not np.all(np.isfinite(errors)):
        raise EstimatorError(f"{name} produced non-finite errors")
    rows, first = slam.exploration_error_metrics(errors, log_.dt, cfg.lap_period)
    return EstimatorResult(name, "", errors, rows, first, info)


def estimator_plan(cfg, datasets):
    """(estimator, dataset) pairs: SLAM on every dataset, filters on one.

    The filters only use the IMU plus the array, so they run on the array
    dataset when present; their single-sensor counterparts are not shown.
    """
    plan = []
    for est in cfg.estimators:
        if est == "slam":
            plan.extend((est, d) for d in datasets)
        else:
            plan.append((est, "array" if "array" in datasets else next(iter(datasets))))
    return plan


def write_errors_csv(path, times, errors):
    slam.solution_errors_csv(path, times, errors)


def read_errors_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return header, data


def summary_text(cfg, results):
    lines = ["# magslam experiment summary",
             f"seed = {cfg.seed}",
             f"laps = {cfg.laps:g}",
             f"lap_period_s = {cfg.lap_period:.6g}",
             f"n_b = {cfg.n_b}",
             ""]
    lines.append("estimator,dataset,lap,max_horizontal_m,final_horizontal_m,max_3d_m,final_3d_m")
    for res in results:
        for row in res.laps:
            lines.append(f"{res.estimator},{res.dataset},{row.lap},{row.max_horizontal:.6e},"
                         f"{row.final_horizontal:.6e},{row.max_3d:.6e},{row.final_3d:.6e}")
    lines.append("")
    lines.append("estimator,dataset,end_of_lap1_m,final_m")
    for res in results:
        lines.append(f"{res.estimator},{res.dataset},{res.end_of_first_lap:.6e},"
                     f"{res.final_error:.6e}")
    by_key = {(r.estimator, r.dataset): r for r in results}
    if ("slam", "array") in by_key and ("slam", "single") in by_key:
        a = by_key["slam", "array"].end_of_first_lap
        s = by_key["slam", "single"].end_of_first_lap
        ratio = s / a if a > 0 else float("inf")
        lines.append("")
        lines.append(f"exploration_ratio_single_over_array = {ratio:.6g}")
    return "\n".join(lines) + "\n"


def plot_comparison(path, times, results, log_scale=True):
    """Static SVG of the error curves; metadata is pinned so files are reproducible."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "magslam"
    fig, ax = plt.subplots(figsize=(7, 4))
    for res in results:
        ax.plot(times[: len(res.errors)], np.linalg.norm(res.errors, axis=1),
                label=f"{res.estimator} ({res.dataset})", lw=1.2)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("position error (m)")
    if log_scale:
        ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def run(cfg, out_dir=None):
    """Generate the datasets, run the selected estimators and write artifacts.

    Returns the list of results; raises ``EstimatorError`` after writing
    whatever artifacts were completed if an estimator fails.
    """
    out_dir = cfg.output if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    gt = build_field(cfg)
    datasets = build_datasets(cfg, gt)
    model = build_model(cfg)
    results = []
    failures = []
    for est, name in estimator_plan(cfg, datasets):
        lg = datasets[name]
        log.info("running %s on %s dataset", est, name)
        try:
            res = run_estimator(est, lg, model, cfg)
        except Exception as exc:  # keep going so partial artifacts survive
            failures.append(f"{est}/{name}: {exc}")
            continue
        res.dataset = name
        results.append(res)
        write_errors_csv(os.path.join(out_dir, f"errors_{est}_{name}.csv"), lg.times, res.errors)
    times = next(iter(datasets.values())).times
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(summary_text(cfg, results))
    if results:
        plot_comparison(os.path.join(out_dir, "comparison.svg"), times, results)
    if failures:
        raise EstimatorError("; ".join(failures))
    return results


def resolution_cmd(cfg, out_dir=None):
    """Write ``resolution.csv`` for the configured basis counts.

    The table is written first; a non-decreasing RMSE then raises
    ``EstimatorError``.
    """
    out_dir = cfg.output if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    rows = resolution_rows(cfg)
    with open(os.path.join(out_dir, "resolution.csv"), "w") as fh:
        fh.write("n_b,density_per_m2,rmse_uT\n")
        for n, dens, rmse in rows:
            fh.write(f"{n},{dens:.6g},{rmse:.9e}\n")
    rmse = [r[2] for r in rows]
    order = np.argsort([r[0] for r in rows])
    sorted_rmse = np.asarray(rmse)[order]
    if np.any(np.diff(sorted_rmse) >= 0):
        raise EstimatorError(f"RMSE is not strictly decreasing in n_b: {sorted_rmse}")
    return rows


def resolution_rows(cfg, reference=None):
    reference = build_field(cfg) if reference is None else reference
    return basis.resolution_study(reference, cfg.footprint(cfg.resolution_margin), cfg.counts,
                                  cfg.grid_step, cfg.resolution_padding, cfg.lengthscale,
                                  cfg.signal_std, cfg.resolution_noise_std)
