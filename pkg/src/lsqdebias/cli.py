"""Command-line batch runner.

    lsqdebias SUBCOMMAND [--config PATH] [--seed INT] [--out DIR] [--reps INT]

Exit codes: 0 success, 2 config error, 3 numerical infeasibility, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from .debiased import FoldError
from .dgp import DGPError, InfeasibleSpectrumError
from .experiments import (
    ConfigError,
    Experiment,
    load_config,
    parse_config,
    run_experiment,
    write_outputs,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsqdebias", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for exp in Experiment:
        p = sub.add_parser(exp.value, help=f"run the {exp.value} experiment")
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--reps", type=int, help="override the number of replications")
        if exp is Experiment.ESTIMATE:
            p.add_argument("--data", help="CSV with columns x, y, z (replaces sampling from the dgp)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "out_dir": args.out, "reps": args.reps,
                 "data": getattr(args, "data", None)}
    try:
        if args.config:
            cfg = load_config(args.config, args.command, overrides)
        else:
            cfg = parse_config({}, args.command, overrides)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, e)
    except OSError as e:
        return _fail(EXIT_IO, e)

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = _show_warning
            result = run_experiment(cfg)
            paths = write_outputs(result, cfg)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, e)
    except (InfeasibleSpectrumError, FoldError, np.linalg.LinAlgError) as e:
        return _fail(EXIT_NUMERICAL, e)
    except DGPError as e:
        return _fail(EXIT_CONFIG, e)
    except OSError as e:
        return _fail(EXIT_IO, e)
    print("\n".join(result.summary))
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def _fail(code: int, err: Exception) -> int:
    print(f"error: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
