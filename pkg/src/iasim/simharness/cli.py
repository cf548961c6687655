"""Command-line entry point: ``iasim <subcommand> ...``.

Flags override environment variables, which override the config file::

    IASIM_SEED IASIM_TRIALS IASIM_WORKERS IASIM_OUT

Exit status is 0 on success, 1 for a configuration error and 2 when
``validate`` reports a failed check.
"""

import argparse
import logging
import os
import sys

from .. import precode
from ..netmodel import NetworkConfig
from ..numkit import ContractViolation
from .config import ConfigError, load_config
from .runner import partition_rows_to_csv, rows_to_csv, run_experiment, run_partition_study, write_csv
from .validate import MUTATIONS, validate_suite

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION = 0, 1, 2
ENV_PREFIX = "IASIM_"

log = logging.getLogger("iasim")


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; 2 is reserved for validation
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _env_int(name):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{ENV_PREFIX}{name}: expected an integer, got {raw!r}") from None


def _run_flags(p):
    p.add_argument("config", help="YAML config file or preset name")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trials", type=int, help="trials per sweep point")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--out", help="CSV output path (default: stdout)")


def build_parser():
    parser = _Parser(prog="iasim", description="Interference alignment Monte Carlo simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    _run_flags(sub.add_parser("sweep-snr", help="sum rate against SNR"))
    _run_flags(sub.add_parser("sweep-doppler", help="effective throughput against normalized Doppler"))
    _run_flags(sub.add_parser("partition-study", help="best hybrid IA/TDMA partition against Doppler"))
    f = sub.add_parser("feasibility", help="proper-system feasibility of a symmetric network")
    f.add_argument("--k", type=int, required=True)
    f.add_argument("--nt", type=int, required=True)
    f.add_argument("--nr", type=int, required=True)
    f.add_argument("--d", type=int, required=True)
    v = sub.add_parser("validate", help="run the built-in oracle and invariant checks")
    v.add_argument("--mutation", choices=sorted(MUTATIONS), help=argparse.SUPPRESS)
    v.add_argument("--scale", type=float, default=1.0, help="multiplier on per-check sample counts")
    return parser


def _resolve(args):
    cfg = load_config(args.config)
    pick = lambda flag, env: flag if flag is not None else _env_int(env)
    out = args.out if args.out is not None else os.environ.get(ENV_PREFIX + "OUT") or None
    return cfg.with_overrides(seed=pick(args.seed, "SEED"), trials=pick(args.trials, "TRIALS"),
                              workers=pick(args.workers, "WORKERS"), output_path=out)


def _emit(text, path):
    if path:
        write_csv(text, path)
        log.info("wrote %s", path)
    else:
        sys.stdout.write(text)


def _sweep(args, variable):
    cfg = _resolve(args)
    if cfg.sweep_variable != variable:
        raise ConfigError(f"sweep.variable: {args.command} needs {variable!r}, config has {cfg.sweep_variable!r}")
    _emit(rows_to_csv(run_experiment(cfg)), cfg.output_path)
    return EXIT_OK


def _partition(args):
    cfg = _resolve(args)
    if cfg.sweep_variable != "normalized_doppler":
        raise ConfigError("sweep.variable: partition-study sweeps 'normalized_doppler'")
    if cfg.partition_strategy == "exhaustive" and cfg.network.K > 10:
        raise ConfigError("network.K: exhaustive partition search supports K <= 10")
    _emit(partition_rows_to_csv(run_partition_study(cfg)), cfg.output_path)
    return EXIT_OK


def _feasibility(args):
    try:
        config = NetworkConfig.symmetric(args.k, args.nt, args.nr, args.d)
    except ContractViolation as exc:
        raise ConfigError(str(exc)) from None
    print(precode.check_feasibility(config))
    return EXIT_OK


def _validate(args):
    report = validate_suite(mutation=args.mutation, scale=args.scale)
    print(report.text())
    return EXIT_OK if report.passed else EXIT_VALIDATION


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "sweep-snr": lambda a: _sweep(a, "snr_db"),
        "sweep-doppler": lambda a: _sweep(a, "normalized_doppler"),
        "partition-study": _partition,
        "feasibility": _feasibility,
        "validate": _validate,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
