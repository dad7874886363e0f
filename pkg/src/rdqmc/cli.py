"""Command-line interface.

Subcommands::

    rdqmc study --config FILE [--seed N] [--workers N] [--out DIR]
    rdqmc solve --config FILE --y "v1,v2,..." [--seed N] [--out DIR]
    rdqmc kl    --config FILE [--seed N] [--out DIR]
    rdqmc cbc   --config FILE [--out DIR]

Exit codes: 0 on success, 2 for validation errors (config, file
formats, argument vectors), 3 for numerical failures (nonlinear solver
divergence, invalid coefficient samples, eigensolver breakdown).
"""

import argparse
import sys

import numpy as np

from .assembly import CoefficientBoundError
from .estimator import EvaluationError
from .harness import (
    ConfigError,
    load_config,
    parse_parameter_vector,
    resolve_config,
    run_cbc,
    run_kl,
    run_single,
    run_study,
)
from .lattice import GeneratingVectorError
from .mesh import MeshFormatError
from .solver import NewtonDivergenceError

_VALIDATION = (ConfigError, MeshFormatError, GeneratingVectorError, ValueError)
_NUMERICAL = (
    NewtonDivergenceError,
    CoefficientBoundError,
    EvaluationError,
    np.linalg.LinAlgError,
    FloatingPointError,
    ZeroDivisionError,
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rdqmc",
        description=(
            "Quasi-Monte Carlo convergence studies for a reaction-diffusion "
            "growth model with random coefficients"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="config file path")
        p.add_argument("--seed", type=int, default=None, help="override seed")
        p.add_argument(
            "--workers", type=int, default=None, help="override worker count"
        )
        p.add_argument("--out", default=None, help="output directory")

    p_study = sub.add_parser("study", help="run a QMC/MC convergence study")
    common(p_study)
    p_solve = sub.add_parser("solve", help="single solve at an explicit y")
    common(p_solve)
    p_solve.add_argument(
        "--y", required=True, help='parameter vector, e.g. "0.1,-0.2,..."'
    )
    p_kl = sub.add_parser("kl", help="precompute lognormal mode caches")
    common(p_kl)
    p_cbc = sub.add_parser("cbc", help="construct a lattice generating vector")
    common(p_cbc)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(load_config(args.config))
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(["--seed: must be non-negative"])
            cfg["seed"] = args.seed
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError(["--workers: must be a positive integer"])
            cfg["workers"] = args.workers
        outdir = args.out or cfg["out"] or "rdqmc_out"

        if args.command == "study":
            summary = run_study(cfg, outdir)
            slopes = summary.get("slopes", {})
            for kind, slope in sorted(slopes.items()):
                print(f"{kind} fitted rate: {slope:.4f}")
            print(f"study results written to {outdir}")
        elif args.command == "solve":
            y = parse_parameter_vector(args.y, cfg["field.s"], cfg["mode"])
            run_single(cfg, y, outdir=args.out or (cfg["out"] or None))
        elif args.command == "kl":
            run_kl(cfg, outdir)
            print(f"kl caches written to {outdir}")
        elif args.command == "cbc":
            run_cbc(cfg, outdir)
            print(f"generating vector written to {outdir}")
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except _VALIDATION as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
