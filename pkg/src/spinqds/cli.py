"""Command-line experiment runner.

Subcommands::

    spinqds validate <config>             check a config against the schema
    spinqds run <config> [--out DIR] [--seed N] [--cap DIM]
                                          run the configured study
    spinqds report <result-dir>           summarize an emitted result set

``run`` writes ``results.csv`` (data records), ``checks.csv`` (pass/fail
rows), ``timings.csv``, ``superoperator.csv`` (the model's generator,
row-major ``re,im`` cells) and per-curve plot data into the output
directory.  Exit code 0 means every non-negative-control check passed;
1 means some check failed; 2 means the config or arguments were invalid.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from spinqds import studies
from spinqds.config import ConfigError, load_model, schema_text
from spinqds.lattice import CapacityError


def _check_line(check: dict) -> str:
    if check["role"] == studies.ROLE_CONTROL:
        status = "XFAIL-OK" if check["passed"] else "XFAIL-BAD"
    else:
        status = "PASS" if check["passed"] else "FAIL"
    return (f"[{status}] {check['study']}: {check['check']} "
            f"value={check['value']:.6e} threshold {check['threshold']}")


def _cmd_validate(args) -> int:
    try:
        load_model(args.config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    print(f"{args.config}: OK")
    return 0


def _cmd_run(args) -> int:
    try:
        spec = load_model(args.config)
    except (FileNotFoundError, ConfigError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    cap = None if args.cap == 0 else args.cap
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        result = studies.run_study(spec, seed=args.seed, cap=cap)
        matrix = studies.generator_matrix(spec, cap)
    except CapacityError as exc:
        print(f"capacity error ({spec.study.kind}, cap={cap}): {exc}", file=sys.stderr)
        return 2
    studies.emit_csv(result, outdir / "results.csv")
    studies.emit_checks_csv(result, outdir / "checks.csv")
    studies.emit_timings_csv(result, outdir / "timings.csv")
    studies.emit_superoperator_csv(matrix, outdir / "superoperator.csv")
    studies.emit_plot_data(result, outdir)
    for check in result.checks:
        print(_check_line(check))
    print(f"results written to {outdir}")
    return 0 if result.passed() else 1


def _cmd_report(args) -> int:
    checks_path = Path(args.result_dir) / "checks.csv"
    if not checks_path.exists():
        print(f"error: no checks.csv in {args.result_dir}", file=sys.stderr)
        return 2
    checks = studies.read_csv(checks_path)
    for check in checks:
        print(_check_line(check))
    n_checks = sum(1 for c in checks if c["role"] == studies.ROLE_CHECK)
    n_passed = sum(1 for c in checks
                   if c["role"] == studies.ROLE_CHECK and c["passed"])
    print(f"{n_passed}/{n_checks} checks passed")
    return 0 if n_passed == n_checks else 1


def _cmd_schema(args) -> int:
    print(schema_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinqds",
        description="Semigroup and dilation experiments on spin-lattice windows.")
    sub = parser.add_subparsers(dest="command", required=True)

    validate = sub.add_parser("validate", help="validate a config file")
    validate.add_argument("config")
    validate.set_defaults(func=_cmd_validate)

    run = sub.add_parser("run", help="run the study configured in a config file")
    run.add_argument("config")
    run.add_argument("--out", default="results", help="output directory")
    run.add_argument("--seed", type=int, default=0, help="RNG seed for observables")
    run.add_argument("--cap", type=int, default=256,
                     help="matrix-size cap (0 disables the check)")
    run.set_defaults(func=_cmd_run)

    report = sub.add_parser("report", help="summarize an emitted result directory")
    report.add_argument("result_dir")
    report.set_defaults(func=_cmd_report)

    schema = sub.add_parser("schema", help="print the config schema")
    schema.set_defaults(func=_cmd_schema)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
