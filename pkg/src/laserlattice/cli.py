"""``simulate``: run a JSON experiment spec and write the results CSV.

Exit codes: 0 on success, 2 for an invalid spec or unusable input/output,
3 when the computation itself fails numerically (rows completed before the
failure are already flushed to the output file).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .errors import NumericalFailure, SpecValidationError
from .experiments import load_spec, run_experiment

_THREADS_ENV = "LASERLATTICE_THREADS"


def _thread_count(cli_value: int | None) -> int:
    if cli_value is None:
        env = os.environ.get(_THREADS_ENV)
        if env is None:
            return 1
        try:
            cli_value = int(env)
        except ValueError:
            raise SpecValidationError(f"{_THREADS_ENV} must be an integer, got {env!r}") from None
    if cli_value < 1:
        raise SpecValidationError(f"thread count must be >= 1, got {cli_value}")
    return cli_value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulate",
        description="Run a flat-JSON experiment spec and write a schema-stable CSV.",
    )
    parser.add_argument("spec", help="path to the JSON experiment spec")
    parser.add_argument("--out", default=None,
                        help="output CSV path (overrides the spec's output field)")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker processes (default: ${_THREADS_ENV} or 1)")
    parser.add_argument("--seed-offset", type=int, default=0,
                        help="shift added to every base seed (default 0)")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args.spec)
        threads = _thread_count(args.threads)
        summary = run_experiment(spec, args.out, threads=threads,
                                 seed_offset=args.seed_offset)
    except (SpecValidationError, json.JSONDecodeError, OSError) as exc:
        print(f"simulate: invalid spec or I/O: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"simulate: numerical failure: {exc} "
              "(rows finished before the failure are flushed to the output)",
              file=sys.stderr)
        return 3
    print(f"{len(summary.rows)} rows -> {summary.out_path}")
    for fit in summary.fits:
        f = fit.fit
        print(f"fit {fit.quantity} [{fit.source}]: slope = {f.slope:.4f} "
              f"+- {f.slope_se:.4f} (95% CI [{f.ci_low:.4f}, {f.ci_high:.4f}], "
              f"{f.n_points} points)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
