"""Command line entry point: ``wipcom <subcommand> [--config FILE] [flags]``.

Exit codes: 0 success, 2 configuration error, 3 convergence failure,
4 simulation divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .errors import (
    BalanceTimeoutError,
    ConfigError,
    InfeasibleTargetError,
    InvalidParameterError,
    LearningDivergedError,
    ObserverDivergedError,
    PoolGenerationError,
    SimulationDivergedError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_DIVERGENCE = 4

COMMANDS = {
    "gen-poses": harness.run_gen_poses,
    "gen-betas": harness.run_gen_betas,
    "filter": harness.run_filter,
    "learn": harness.run_learn,
    "simulate": harness.run_simulate,
    "eval": harness.run_eval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wipcom", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment INI file")
    common.add_argument("--seed", type=int, help="root seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--n-poses", dest="n_poses", type=int)
    common.add_argument("--n-betas", dest="n_betas", type=int)
    common.add_argument("--noise", type=float, help="initial-estimate noise fraction")
    common.add_argument("--eta", type=float, help="gradient step size")
    common.add_argument("--xtol", dest="x_tol", type=float, help="CoM error tolerance [m]")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name in ("learn", "simulate", "eval"):
            p.add_argument("--init", default="perturbed",
                           help="initial estimate: 'perturbed', 'truth' or a beta CSV path")
        if name == "learn":
            p.add_argument("--early-stop", dest="early_stop", action="store_const", const=True,
                           help="stop after n_consecutive poses below --xtol")
        if name == "simulate":
            p.add_argument("--pose-index", dest="pose_index", type=int)
            p.add_argument("--runs", dest="n_runs", type=int)
            p.add_argument("--duration", type=float)
        if name == "filter":
            p.add_argument("--no-baseline", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    keys = ("seed", "out", "n_poses", "n_betas", "noise", "eta", "x_tol",
            "pose_index", "n_runs", "duration", "early_stop")
    overrides = {k: getattr(args, k, None) for k in keys}
    try:
        cfg = harness.load_experiment(args.config, overrides)
        kwargs = {}
        if hasattr(args, "init"):
            kwargs["init"] = args.init
        if args.command == "filter":
            kwargs["baseline"] = not args.no_baseline
        report = COMMANDS[args.command](cfg, **kwargs)
    except (ConfigError, InvalidParameterError, InfeasibleTargetError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationDivergedError, ObserverDivergedError) as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (LearningDivergedError, BalanceTimeoutError, PoolGenerationError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    print(report.to_json(), end="")
    return EXIT_OK if report.ok else EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
