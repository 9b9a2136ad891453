"""Command line entry point: ``magslam run|resolution|validate``."""

import argparse
import logging
import sys

from . import experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ESTIMATOR = 3


def _parser():
    p = argparse.ArgumentParser(prog="magslam", description="Magnetic-field SLAM experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "simulate datasets and run the estimators"),
                        ("resolution", "basis-count resolution table"),
                        ("validate", "check a config file")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", default=None,
                       help="INI config (default: the bundled paper.cfg)")
        if name != "validate":
            s.add_argument("--out", default=None, help="output directory")
            s.add_argument("--seed", type=int, default=None, help="master seed override")
        if name == "run":
            s.add_argument("--estimators", default=None,
                           help="comma-separated subset of slam,odometry,ins, or all")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    path = args.config or experiment.default_config_path()

    if args.command == "validate":
        try:
            diags = experiment.validate_config(path)
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for d in diags:
            print(f"{path}: {d}", file=sys.stderr)
        if not diags:
            print(f"{path}: ok")
        return EXIT_CONFIG if diags else EXIT_OK

    try:
        cfg = experiment.load_config(path, seed=args.seed, output=args.out,
                                     estimators=getattr(args, "estimators", None))
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except experiment.ConfigError as exc:
        for d in exc.diagnostics:
            print(f"{path}: {d}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "resolution":
        try:
            rows = experiment.resolution_cmd(cfg)
        except experiment.EstimatorError as exc:
            print(f"resolution check failed: {exc}", file=sys.stderr)
            return EXIT_ESTIMATOR
        for n, dens, rmse in rows:
            print(f"n_b={n:5d}  density={dens:8.2f}/m^2  rmse={rmse:.4g} uT")
        return EXIT_OK

    try:
        results = experiment.run(cfg)
    except experiment.EstimatorError as exc:
        print(f"estimator failure: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    for res in results:
        print(f"{res.estimator:9s} {res.dataset:7s} end of lap 1 {res.end_of_first_lap:.4g} m"
              f"  final {res.final_error:.4g} m")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
