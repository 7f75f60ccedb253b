"""Command-line entry point: ``slowfast <experiment> [options]``.

Seed precedence is ``--seed`` > config file > ``SLOWFAST_SEED`` > built-in default.
Exit status 0 means the experiment passed its acceptance check, 1 that it ran
but failed, 2 that the configuration was rejected.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import ConfigError, InvalidInputError, NoiseDominatedError, OracleFailure, ReplicaAbortError
from .experiments import KINDS, ExperimentSpec, emit_results, read_config, run_experiment

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
SEED_ENV = "SLOWFAST_SEED"


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed out of unsigned 64-bit range: {text}")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slowfast", description="Averaging and CLT rate experiments.")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="EXPERIMENT")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", help="TOML or JSON file with experiment settings")
        p.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--replicas", type=_positive, help="replica count (draw count for oracle-suite)")
        p.add_argument("--threads", type=_positive, help="worker threads for replica chunks")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def resolve_spec(args, environ=None) -> ExperimentSpec:
    environ = os.environ if environ is None else environ
    data = read_config(args.config) if args.config else {}
    data["kind"] = args.kind
    for name in ("replicas", "threads"):
        if getattr(args, name) is not None:
            data[name] = getattr(args, name)
    if args.out is not None:
        data["output"] = args.out
    if args.seed is not None:
        data["seed"] = args.seed
    elif "seed" not in data and environ.get(SEED_ENV):
        try:
            data["seed"] = _u64(environ[SEED_ENV])
        except argparse.ArgumentTypeError as exc:
            raise ConfigError(f"{SEED_ENV}: {exc}") from None
    return ExperimentSpec.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = resolve_spec(args)
    except (ConfigError, InvalidInputError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        record = run_experiment(spec)
    except (ConfigError, InvalidInputError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ReplicaAbortError, NoiseDominatedError, OracleFailure) as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    try:
        paths = emit_results(record, spec.output)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _summarise(record, paths)
    return EXIT_PASS if record.passed else EXIT_FAIL


def _summarise(record, paths):
    print(f"{record.kind} ({record.experiment_id}, seed {record.seed}, build {record.fingerprint})")
    print(",".join(record.columns))
    for row in record.rows:
        print(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row))
    if record.slope is not None:
        lo, hi = record.diagnostics["expected_slope"]
        print(f"slope {record.slope:.3f} +/- {record.halfwidth:.3f} (accepted range [{lo}, {hi}])")
    elif "fit_rejected" in record.diagnostics:
        print(f"slope fit rejected: {record.diagnostics['fit_rejected']}")
    if "lyapunov" in record.diagnostics:
        ly = record.diagnostics["lyapunov"]
        print(f"Var<Zbar_T,h> {ly['variance']:.5g} +/- {ly['stderr']:.2g} vs Lyapunov {ly['oracle']:.5g}")
    print(f"{'PASS' if record.passed else 'FAIL'}  wall clock {record.wall_clock:.1f}s")
    print(f"wrote {paths['csv']} and {paths['json']}")


if __name__ == "__main__":
    sys.exit(main())
