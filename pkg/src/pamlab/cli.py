"""``pam-lab`` command line interface.

Each subcommand runs one experiment.  Settings come from an optional TOML
or JSON file (``--config``) and are overridden by explicit flags.

Exit status: 0 on success, 2 for an invalid configuration (with one line
per offending field), 1 when a stage fails at runtime.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import PamLabError
from .experiments import EXPERIMENTS, ConfigError, load_config, run, validate_config

log = logging.getLogger("pamlab")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _walk(text):
    if text in ("nearest-neighbor", "nn"):
        return text
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError(
            "walk must be 'nearest-neighbor' or JSON such as '{\"atoms\": [[1, 0, 1.0], ...]}'"
        )


# (flag, config key, type, help)
_COMMON = [
    ("--N", "Ns", _int_list, "comma-separated odd lattice sides, e.g. 9,27,81"),
    ("--samples", "samples", int, "disorder samples per lattice side"),
    ("--seed", "seed", int, "master seed"),
    ("--kind", "kind", str, "potential kind: iid or martingale"),
    ("--distribution", "distribution", str, "base law: gaussian, rademacher, uniform"),
    ("--walk", "walk", _walk, "walk measure: 'nearest-neighbor' or JSON {atoms: [[j1, j2, mass], ...]}"),
    ("--out", "out", str, "output directory"),
]

_SPECIFIC = {
    "noise-diagnostics": [
        ("--K", "K", _int_list, "truncation levels for the Cauchy diagnostic"),
        ("--gamma", "gamma", float, "regularity of the Cauchy distance"),
    ],
    "pam-convergence": [
        ("--T", "T", float, "final time"),
        ("--dt", "dt", float, "time step (default: dt * ||xi||_inf <= 0.1)"),
    ],
    "operator-norm": [
        ("--alpha", "alpha", float, "regularity alpha in (1/2, 1)"),
        ("--trials", "trials", int, "random test fields per disorder sample"),
    ],
    "chaos-moments": [
        ("--p", "p", float, "moment order"),
    ],
    "polymer": [
        ("--T", "T", float, "polymer horizon"),
        ("--times", "times", _float_list, "marginal times in (0, T]"),
        ("--n-paths", "n_paths", int, "walk paths per disorder sample"),
        ("--x", "x", _int_list, "starting site l1,l2"),
    ],
    "spectrum": [
        ("--k", "k", int, "number of lowest eigenvalues"),
    ],
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pam-lab",
        description="Experiments for the renormalised two-dimensional lattice parabolic Anderson model.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="TOML or JSON file with experiment settings")
        for flag, key, typ, help_ in _COMMON + _SPECIFIC[name]:
            p.add_argument(flag, dest=key, type=typ, default=None, help=help_)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    raw = {}
    if args.config:
        try:
            raw = load_config(args.config)
        except (OSError, ValueError) as exc:
            print(f"config: cannot read {args.config}: {exc}", file=sys.stderr)
            return 2
    raw = dict(raw)
    raw["experiment"] = args.experiment
    for key, val in vars(args).items():
        if key in ("experiment", "config", "verbose") or val is None:
            continue
        raw[key] = val
    try:
        cfg = validate_config(raw)
    except ConfigError as exc:
        for field, msg in exc.errors.items():
            print(f"config error: {field}: {msg}", file=sys.stderr)
        return 2
    log.info("running %s into %s", cfg.experiment, cfg.out)
    try:
        manifest = run(cfg)
    except (PamLabError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"runtime failure in stage {cfg.experiment}: {exc}", file=sys.stderr)
        return 1
    log.info("wrote %s", ", ".join(manifest["files"]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
