"""Regression corpus: a five-dimensional warped product over a line.

The fiber is ``dx2^2 + h (dx3^2 + dx4^2) + h psi dx5^2`` with ``h = h(x2)``
and ``psi = psi(x3)``; the full metric is ``dx1^2 + f(x1) * fiber``.  Each
case pins ``f``, ``h`` and ``psi``, carries closed-form curvature
components as independent oracles, and lists the structure verdicts the
case must reproduce.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .classify import ClassifyConfig, ClassificationReport, classify
from .expr import Expr, compile_many, differentiate, parse, simplify_basic
from .tensor import MetricChart, chart_to_text, curvature_sample, draw_points
from .warped import WarpedSpec, assemble, warp_spec_to_text

PARAMS = {"c1": 1.0, "c2": 1.0}
BASE_COORDS = ("x1",)
FIBER_COORDS = ("x2", "x3", "x4", "x5")
DEFAULT_BOX = {"x1": (0.5, 1.5), "x2": (0.2, 1.2), "x3": (0.2, 1.2), "x4": (0.2, 1.2), "x5": (0.2, 1.2)}
COMPONENT_TOL = 1e-9
ODE_TOL = 1e-10
KAPPA_SPREAD_TOL = 1e-8

ALL_COORDS = BASE_COORDS + FIBER_COORDS


def _e(src: str) -> Expr:
    return parse(src, ALL_COORDS, PARAMS)


GENERIC_F = _e("x1^2 + 2")
GENERIC_H = _e("x2^2 + 2")
GENERIC_PSI = _e("x3^2 + 2")
STEP1_H = _e("c1 * exp(c2 * x2)")
STEP2_F = _e("exp(-sqrt(c1) * (x1 + c2)) * (exp(sqrt(c1) * (x1 + c2)) + 4 * c1)^2 / (16 * c1^2)")
STEP2_F_ALT = _e("exp(-sqrt(c1) * (x1 + c2)) * (1 + 4 * c1 * exp(sqrt(c1) * (x1 + c2)))^2 / (16 * c1^2)")
STEP3_PSI = _e("(c1 * x3 + 2 * c2)^2 / (4 * c2)")
SPECIAL_F = _e("x1^2")
SPECIAL_H = _e("c2 * cos(x2 - 2 * c1)^2")
SPECIAL_PSI = _e("exp(x3)")


# ---------------------------------------------------------------------------
# Charts
# ---------------------------------------------------------------------------


def base_chart() -> MetricChart:
    return MetricChart(BASE_COORDS, {(0, 0): _e("1")}, dict(PARAMS), {"x1": DEFAULT_BOX["x1"]})


def fiber_chart(h: Expr, psi: Expr, box: dict | None = None) -> MetricChart:
    box = {**DEFAULT_BOX, **(box or {})}
    entries = {(0, 0): _e("1"), (1, 1): h, (2, 2): h, (3, 3): simplify_basic(h * psi)}
    return MetricChart(FIBER_COORDS, entries, dict(PARAMS), {c: box[c] for c in FIBER_COORDS})


def warped_spec(f: Expr, h: Expr, psi: Expr, box: dict | None = None, name: str = "") -> WarpedSpec:
    return WarpedSpec(base_chart(), fiber_chart(h, psi, box), f, name)


# ---------------------------------------------------------------------------
# Closed-form component oracles (1-based indices, listed up to symmetry)
# ---------------------------------------------------------------------------


def _derivs(e: Expr, v: str):
    d1 = differentiate(e, v)
    return d1, differentiate(d1, v)


def fiber_oracles(h: Expr, psi: Expr) -> dict:
    """Nonzero fiber ``R`` and ``S`` components; indices count x2..x5 as 1..4."""
    hp, hpp = _derivs(h, "x2")
    sp, spp = _derivs(psi, "x3")
    a = (hp ** 2 - 2 * h * hpp) / (4 * h)
    R = {
        (1, 2, 1, 2): a,
        (1, 3, 1, 3): a,
        (1, 4, 1, 4): psi * a,
        (2, 3, 2, 3): -(hp ** 2) / 4,
        (3, 4, 3, 4): -psi * hp ** 2 / 4,
        (2, 4, 2, 4): (-psi * hp ** 2 - 2 * h * spp + h * sp ** 2 / psi) / 4,
    }
    S = {
        (1, 1): 3 * (2 * h * hpp - hp ** 2) / (4 * h ** 2),
        (2, 2): (2 * hpp + hp ** 2 / h - (sp ** 2 - 2 * psi * spp) / psi ** 2) / 4,
        (3, 3): (2 * h * hpp + hp ** 2) / (4 * h),
        (4, 4): (2 * (psi * hpp + spp) + psi * hp ** 2 / h - sp ** 2 / psi) / 4,
    }
    return {"R": R, "S": S}


def full_oracles(f: Expr, h: Expr, psi: Expr) -> dict:
    """Nonzero ``R`` and ``S`` components of the five-dimensional metric."""
    fp, fpp = _derivs(f, "x1")
    hp, hpp = _derivs(h, "x2")
    sp, spp = _derivs(psi, "x3")
    a = (fp ** 2 - 2 * f * fpp) / (4 * f)
    b = (-h * fp ** 2 - 2 * f * hpp + f * hp ** 2 / h) / 4
    c = -(h ** 2 * fp ** 2 + f * hp ** 2) / 4
    R = {
        (1, 2, 1, 2): a,
        (1, 3, 1, 3): h * a,
        (1, 4, 1, 4): h * a,
        (1, 5, 1, 5): h * psi * a,
        (2, 3, 2, 3): b,
        (2, 4, 2, 4): b,
        (2, 5, 2, 5): psi * b,
        (3, 4, 3, 4): c,
        (4, 5, 4, 5): psi * c,
        (3, 5, 3, 5): (f * (-psi * hp ** 2 - 2 * h * spp + h * sp ** 2 / psi) - h ** 2 * psi * fp ** 2) / 4,
    }
    s55 = (2 * h * psi * fpp + 2 * h * psi * fp ** 2 / f + 2 * psi * hpp + psi * hp ** 2 / h
           + 2 * spp - sp ** 2 / psi) / 4
    S = {
        (1, 1): -(fp ** 2 - 2 * f * fpp) / f ** 2,
        (2, 2): (2 * fpp + 2 * fp ** 2 / f + (6 * h * hpp - 3 * hp ** 2) / h ** 2) / 4,
        (3, 3): s55 / psi,
        (4, 4): (2 * (h * fpp + hpp) + 2 * h * fp ** 2 / f + hp ** 2 / h) / 4,
        (5, 5): s55,
    }
    return {"R": R, "S": S}


def expected_tensors(n: int, R_values: dict, S_values: dict):
    """Fill every symmetry image of the listed components; everything else is zero."""
    R = np.zeros((n, n, n, n))
    for (i, j, k, l), v in R_values.items():
        i, j, k, l = i - 1, j - 1, k - 1, l - 1
        for (a, b, s1) in ((i, j, 1), (j, i, -1)):
            for (c, d, s2) in ((k, l, 1), (l, k, -1)):
                R[a, b, c, d] = s1 * s2 * v
                R[c, d, a, b] = s1 * s2 * v
    S = np.zeros((n, n))
    for (i, j), v in S_values.items():
        S[i - 1, j - 1] = S[j - 1, i - 1] = v
    return R, S


# ---------------------------------------------------------------------------
# Cases
# ---------------------------------------------------------------------------


@dataclass
class PaperCase:
    name: str
    description: str
    chart: MetricChart
    oracles: dict
    expected: dict
    spec: WarpedSpec | None = None
    expected_fiber: dict = field(default_factory=dict)
    extra_checks: list[tuple[str, Callable]] = field(default_factory=list)
    export_name: str = ""

    @property
    def fiber(self) -> MetricChart | None:
        return self.spec.fiber if self.spec is not None else None


def ode_residual(f: Expr, points) -> float:
    """Worst ``|-2 f'^2 + f (2 f'' - 1)|`` over the given ``x1`` values."""
    fp, fpp = _derivs(f, "x1")
    fn = compile_many([f, fp, fpp], ["x1"] + sorted(PARAMS))
    worst = 0.0
    for x in points:
        F, Fp, Fpp = fn([float(x)] + [PARAMS[k] for k in sorted(PARAMS)])
        worst = max(worst, abs(-2 * Fp * Fp + F * (2 * Fpp - 1)))
    return worst


def _ode_check(f: Expr):
    def check(case: PaperCase, config: ClassifyConfig, report, fiber_report):
        rng = np.random.Generator(np.random.PCG64(config.seed))
        xs = rng.uniform(*case.chart.domain["x1"], size=config.points)
        res = ode_residual(f, xs)
        return res < ODE_TOL, f"max ODE residual {res:.3e}", res
    return check


def _fiber_case(name, export, description, h, psi, expected, box=None) -> PaperCase:
    chart = fiber_chart(h, psi, box)
    return PaperCase(name, description, chart, fiber_oracles(h, psi), expected, export_name=export)


def _full_case(name, export, description, f, h, psi, expected, expected_fiber, box=None, extra=()) -> PaperCase:
    spec = warped_spec(f, h, psi, box, name)
    return PaperCase(name, description, assemble(spec), full_oracles(f, h, psi), expected, spec,
                     expected_fiber, list(extra), export)


def builtin_cases() -> list[PaperCase]:
    special_box = {"x2": (2 * PARAMS["c1"] - 0.6, 2 * PARAMS["c1"] + 0.6)}
    return [
        _fiber_case("fiber-general", "fiber_general", "fiber with generic h, psi: generalized Roter, Ein(3)",
                    GENERIC_H, GENERIC_PSI, {"grt": True, "ein_level": 3}),
        _fiber_case("fiber-step-i", "fiber_step1", "fiber with exponential h: Roter, Ein(2)",
                    STEP1_H, GENERIC_PSI, {"roter": True, "ein_level": 2}),
        _fiber_case("fiber-step-iii", "fiber_step3", "fiber with exponential h and quadratic psi: constant curvature",
                    STEP1_H, STEP3_PSI, {"constant_curvature": True}),
        _full_case("M-general", "m_general", "generic f, h, psi: Ein(4), not generalized Roter",
                   GENERIC_F, GENERIC_H, GENERIC_PSI, {"ein_level": 4, "grt": False}, {}),
        _full_case("M-step-I", "m_step1",
                   "exponential h: proper generalized Roter, Ein(3), fiber proper Roter",
                   GENERIC_F, STEP1_H, GENERIC_PSI, {"grt": True, "roter": False, "ein_level": 3},
                   {"roter": True, "conformally_flat": False}),
        _full_case("M-step-II", "m_step2", "warp solving the Step II ODE: proper Roter, Ein(2)",
                   STEP2_F, STEP1_H, GENERIC_PSI,
                   {"roter": True, "ein_level": 2, "conformally_flat": False}, {"roter": True},
                   extra=[("warp ODE residual", _ode_check(STEP2_F))]),
        _full_case("M-step-III", "m_step3", "additionally quadratic psi: constant curvature, fiber too",
                   STEP2_F, STEP1_H, STEP3_PSI, {"constant_curvature": True, "kappa_spread": True},
                   {"constant_curvature": True}),
        _full_case("M-special", "m_special",
                   "f = x1^2, h = c2 cos^2(x2 - 2 c1), psi = exp(x3): special generalized Roter, Ein(3), "
                   "fiber proper generalized Roter",
                   SPECIAL_F, SPECIAL_H, SPECIAL_PSI,
                   {"grt": True, "roter": False, "ein_level": 3, "special_vanishing": True},
                   {"grt": True, "roter": False, "ein_level": 3}, box=special_box),
    ]


def case_by_name(name: str) -> PaperCase:
    for case in builtin_cases():
        if case.name.lower() == name.lower():
            return case
    raise KeyError(name)


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    claim: str
    passed: bool
    detail: str
    worst_deviation: float | None = None

    def to_json(self) -> dict:
        return {"check": self.name, "claim": self.claim, "passed": self.passed,
                "detail": self.detail, "worst_deviation": self.worst_deviation}


@dataclass
class CaseReport:
    name: str
    description: str
    checks: list[CheckResult]
    report: ClassificationReport
    fiber_report: ClassificationReport | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        out = {
            "case": self.name,
            "description": self.description,
            "passed": self.passed,
            "checks": [c.to_json() for c in self.checks],
            "flags": self.report.flags,
            "special_vanishing": self.report.special_vanishing,
            "warnings": self.report.warnings,
        }
        if self.fiber_report is not None:
            out["fiber_flags"] = self.fiber_report.flags
            out["fiber_special_vanishing"] = self.fiber_report.special_vanishing
        return out


def component_deviation(case: PaperCase, config: ClassifyConfig) -> tuple[float, float]:
    """Worst relative deviation of direct ``R`` and ``S`` from the closed forms.

    Each deviation is ``max|direct - oracle|`` over all components (listed
    and implied-zero) divided by ``max|oracle|`` at the same point.
    """
    chart = case.chart
    R_items = list(case.oracles["R"].items())
    S_items = list(case.oracles["S"].items())
    order = list(chart.coords) + sorted(chart.params)
    fn = compile_many([e for _, e in R_items] + [e for _, e in S_items], order)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    drawn = draw_points(chart, config.points, rng, lambda p: curvature_sample(chart, p))
    worst_R = worst_S = 0.0
    for point, sample in drawn:
        values = fn([point[c] for c in chart.coords] + [chart.params[k] for k in sorted(chart.params)])
        rv = {k: v for (k, _), v in zip(R_items, values)}
        sv = {k: v for (k, _), v in zip(S_items, values[len(R_items):])}
        R_exp, S_exp = expected_tensors(chart.n, rv, sv)
        worst_R = max(worst_R, float(np.max(np.abs(sample.R - R_exp))) / float(np.max(np.abs(R_exp))))
        worst_S = max(worst_S, float(np.max(np.abs(sample.S - S_exp))) / float(np.max(np.abs(S_exp))))
    return worst_R, worst_S


def kappa_spread(report: ClassificationReport) -> float:
    ks = np.array([p.sample.kappa for p in report.points])
    return float((ks.max() - ks.min()) / max(np.max(np.abs(ks)), 1e-300))


def _flag_checks(prefix: str, expected: dict, report: ClassificationReport) -> list[CheckResult]:
    out = []
    for key, want in expected.items():
        if key == "special_vanishing":
            got = report.special_vanishing
            out.append(CheckResult(f"{prefix}special_vanishing", "some coefficient vanishes identically",
                                   bool(got) == want, f"vanishing: {', '.join(got) or 'none'}"))
        elif key == "kappa_spread":
            spread = kappa_spread(report)
            out.append(CheckResult(f"{prefix}kappa_spread", f"kappa constant to {KAPPA_SPREAD_TOL:g}",
                                   spread < KAPPA_SPREAD_TOL, f"relative spread {spread:.3e}", spread))
        else:
            got = report.flags[key]
            out.append(CheckResult(f"{prefix}{key}", f"{key} = {want}", got == want, f"got {got}"))
    return out


def run_case(case: PaperCase | str, config: ClassifyConfig | None = None) -> CaseReport:
    if isinstance(case, str):
        case = case_by_name(case)
    config = config or ClassifyConfig()
    checks = []
    dev_R, dev_S = component_deviation(case, config)
    checks.append(CheckResult("components.R", f"closed-form R components, rel {COMPONENT_TOL:g}",
                              dev_R < COMPONENT_TOL, f"worst {dev_R:.3e}", dev_R))
    checks.append(CheckResult("components.S", f"closed-form S components, rel {COMPONENT_TOL:g}",
                              dev_S < COMPONENT_TOL, f"worst {dev_S:.3e}", dev_S))
    report = classify(case.chart, config, case.name)
    checks += _flag_checks("", case.expected, report)
    fiber_report = None
    if case.expected_fiber:
        fiber_report = classify(case.fiber, config, case.name + ":fiber")
        checks += _flag_checks("fiber.", case.expected_fiber, fiber_report)
    for name, fn in case.extra_checks:
        ok, detail, dev = fn(case, config, report, fiber_report)
        checks.append(CheckResult(name, name, bool(ok), detail, dev))
    return CaseReport(case.name, case.description, checks, report, fiber_report)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def export_corpus(directory: str) -> list[str]:
    """Write every case as chart / spec files; returns the written paths."""
    os.makedirs(directory, exist_ok=True)
    written = []

    def put(name, text):
        path = os.path.join(directory, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        written.append(path)

    put("base.metric", chart_to_text(base_chart(), "base line dx1^2"))
    for case in builtin_cases():
        put(f"{case.export_name}.metric", chart_to_text(case.chart, case.description))
        if case.spec is not None:
            fiber_name = f"{case.export_name}_fiber.metric"
            put(fiber_name, chart_to_text(case.spec.fiber, f"fiber of {case.name}"))
            put(f"{case.export_name}.spec",
                warp_spec_to_text("base.metric", fiber_name, case.spec.warp, case.description))
    put("product_fiber.metric", chart_to_text(fiber_chart(GENERIC_H, GENERIC_PSI), "generic fiber"))
    put("product.spec", warp_spec_to_text("base.metric", "product_fiber.metric", _e("1"),
                                          "plain product: warp identically one"))
    return written


__all__ = [
    "PaperCase", "CaseReport", "CheckResult", "builtin_cases", "case_by_name", "run_case",
    "export_corpus", "fiber_oracles", "full_oracles", "expected_tensors", "component_deviation",
    "ode_residual", "warped_spec", "fiber_chart", "base_chart",
    "GENERIC_F", "GENERIC_H", "GENERIC_PSI", "STEP1_H", "STEP2_F", "STEP2_F_ALT", "STEP3_PSI",
    "SPECIAL_F", "SPECIAL_H", "SPECIAL_PSI", "PARAMS",
]
