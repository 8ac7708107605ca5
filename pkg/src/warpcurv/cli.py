"""Command-line entry point: ``warpcurv analyze | warp | verify-paper``."""
from __future__ import annotations

import argparse
import sys
from typing import Sequence

import numpy as np

from . import report as jsonout
from .classify import ClassifyConfig, ClassificationReport, classify
from .corpus import builtin_cases, case_by_name, run_case
from .expr import EvaluationError
from .tensor import ChartFormatError, SamplingError, SingularMetricError, chart_to_text, read_chart
from .warped import WarpError, WarpSpecError, assemble, read_warp_spec, verify_assembly

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_CLAIM = 4


class CliError(Exception):
    def __init__(self, code: str, message: str, status: int):
        super().__init__(message)
        self.code = code
        self.status = status


def _fail(code: str, message: str, status: int):
    raise CliError(code, message, status)


def _config(args) -> ClassifyConfig:
    if args.points < 1:
        _fail("E-CONFIG", "--points must be at least 1", EXIT_INPUT)
    if not (args.abs_tol > 0 and args.rel_tol > 0):
        _fail("E-CONFIG", "tolerances must be positive", EXIT_INPUT)
    if not 0 <= args.seed < 2 ** 64:
        _fail("E-CONFIG", "--seed must fit in 64 unsigned bits", EXIT_INPUT)
    return ClassifyConfig(args.points, args.seed, args.abs_tol, args.rel_tol)


def _write_json(path: str | None, payload):
    if not path:
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(jsonout.dumps(payload))
    except OSError as exc:
        _fail("E-OUTPUT", f"cannot write {path}: {exc.strerror}", EXIT_INPUT)


def _verdict(value) -> str:
    if value is True:
        return "PASS"
    if value is False:
        return "FAIL"
    return str(value)


def _print_flags(report: ClassificationReport, out=None):
    out = out or sys.stdout
    f = report.flags
    rows = [("flat", f["flat"]), ("constant_curvature", f["constant_curvature"]),
            ("conformally_flat", f["conformally_flat"]), ("roter", f["roter"]), ("grt", f["grt"])]
    for name, value in rows:
        print(f"  {name:<20} {_verdict(value)}", file=out)
    level = f["ein_level"]
    print(f"  {'ein_level':<20} {'Ein(%d)' % level if level else 'none'}", file=out)


def _print_ranges(report: ClassificationReport, out=None):
    out = out or sys.stdout
    for which in ("roter", "grt"):
        ranges = report.coefficient_ranges(which)
        cells = "  ".join(f"{k}=[{lo:.4g}, {hi:.4g}]" for k, (lo, hi) in ranges.items())
        print(f"  {which} coefficients: {cells}", file=out)


def cmd_analyze(args) -> int:
    config = _config(args)
    try:
        chart = read_chart(args.metric)
    except OSError as exc:
        _fail("E-INPUT", f"cannot read {args.metric}: {exc.strerror}", EXIT_INPUT)
    except ChartFormatError as exc:
        _fail("E-PARSE", str(exc), EXIT_INPUT)
    if chart.n < 3:
        _fail("E-INPUT", f"classification needs dimension >= 3, got {chart.n}", EXIT_INPUT)
    report = classify(chart, config, args.metric)
    print(f"{args.metric}: dimension {chart.n}, {config.points} points, seed {config.seed}")
    _print_flags(report)
    _print_ranges(report)
    print(f"  special_vanishing    {', '.join(report.special_vanishing) or 'none'}")
    for w in report.warnings:
        print(f"  warning: {w}")
    _write_json(args.json, report.to_json())
    return EXIT_OK


def cmd_warp(args) -> int:
    config = _config(args)
    try:
        spec = read_warp_spec(args.spec)
        chart = assemble(spec)
    except OSError as exc:
        _fail("E-INPUT", f"cannot read {args.spec}: {exc.strerror}", EXIT_INPUT)
    except WarpSpecError as exc:
        _fail("E-PARSE", str(exc), EXIT_INPUT)
    except WarpError as exc:
        _fail("E-WARP", str(exc), EXIT_INPUT)
    print(f"{args.spec}: base dimension {spec.p}, fiber dimension {spec.q}, warp {spec.warp.to_source()}")
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(chart_to_text(chart, f"assembled from {args.spec}"))
        except OSError as exc:
            _fail("E-OUTPUT", f"cannot write {args.out}: {exc.strerror}", EXIT_INPUT)
        print(f"  wrote {args.out}")
    if not args.verify:
        if not args.out:
            sys.stdout.write(chart_to_text(chart))
        return EXIT_OK
    rep = verify_assembly(spec, config)
    print("  formula deviations (max relative):")
    for name, dev in rep.formula_deviations.items():
        print(f"    {name:<8} {dev:.3e}")
    ex = rep.warp_extremes
    print(f"  max |T| = {ex['max_abs_T']:.3e}, max |P| = {ex['max_abs_P']:.3e}, max |Q| = {ex['max_abs_Q']:.3e}")
    if rep.block_checks:
        passed = [b for b in rep.block_checks if b["grt_passed"]]
        print(f"  block equations with solved coefficients: grt holds at {len(passed)}/{len(rep.block_checks)} points")
        if passed:
            worst = {k: max(b[k] for b in passed) for k in ("base", "mixed", "fiber")}
            print("    worst residuals where grt holds: " + ", ".join(f"{k} {v:.3e}" for k, v in worst.items()))
    if rep.table_cross_check_warnings:
        print(f"  printed-table cross-check: {len(rep.table_cross_check_warnings)} mismatching entries")
    for w in rep.warnings:
        print(f"  warning: {w}")
    _write_json(args.json, rep.to_json())
    if rep.max_deviation() > config.rel_tol:
        _fail("E-NUMERIC", f"predicted blocks deviate from direct computation ({rep.max_deviation():.3e})",
              EXIT_NUMERIC)
    return EXIT_OK


def cmd_verify_paper(args) -> int:
    config = _config(args)
    if args.case:
        try:
            cases = [case_by_name(args.case)]
        except KeyError:
            names = ", ".join(c.name for c in builtin_cases())
            _fail("E-CASE", f"unknown case '{args.case}' (known: {names})", EXIT_INPUT)
    else:
        cases = builtin_cases()
    reports = [run_case(c, config) for c in cases]
    width = max(len(c.name) for r in reports for c in r.checks) + 2
    print(f"{'case':<16}{'check':<{width}}{'verdict':<9}{'worst dev':<12}detail")
    for r in reports:
        for c in r.checks:
            dev = "-" if c.worst_deviation is None else f"{c.worst_deviation:.2e}"
            print(f"{r.name:<16}{c.name:<{width}}{_verdict(c.passed):<9}{dev:<12}{c.detail}")
        if r.report.special_vanishing:
            print(f"{r.name:<16}special_vanishing: {', '.join(r.report.special_vanishing)}")
    ok = sum(r.passed for r in reports)
    print(f"{ok}/{len(reports)} cases pass")
    _write_json(args.json, {"config": config.to_json(), "passed": ok == len(reports),
                            "cases": [r.to_json() for r in reports]})
    if ok != len(reports):
        failing = ", ".join(r.name for r in reports if not r.passed)
        _fail("E-CLAIM", f"claim mismatch in {failing}", EXIT_CLAIM)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--points", type=int, default=25, help="sample points per chart (default 25)")
    common.add_argument("--seed", type=int, default=42, help="PRNG seed (default 42)")
    common.add_argument("--abs-tol", type=float, default=1e-12, dest="abs_tol")
    common.add_argument("--rel-tol", type=float, default=1e-8, dest="rel_tol")
    common.add_argument("--json", metavar="PATH", help="write the JSON report here")

    parser = argparse.ArgumentParser(prog="warpcurv", description="Pointwise curvature-structure checks.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("analyze", parents=[common], help="classify a metric chart")
    p.add_argument("metric")
    p.set_defaults(func=cmd_analyze)
    p = sub.add_parser("warp", parents=[common], help="assemble and verify a warped product")
    p.add_argument("spec")
    p.add_argument("--verify", action="store_true", help="compare blockwise predictions with direct computation")
    p.add_argument("--out", metavar="PATH", help="write the assembled chart")
    p.set_defaults(func=cmd_warp)
    p = sub.add_parser("verify-paper", parents=[common], help="run the regression corpus")
    p.add_argument("--case")
    p.set_defaults(func=cmd_verify_paper)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with np.errstate(all="ignore"):
            return args.func(args)
    except CliError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return exc.status
    except SamplingError as exc:
        print(f"error[E-SAMPLING]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EvaluationError, SingularMetricError, np.linalg.LinAlgError) as exc:
        print(f"error[E-NUMERIC]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
