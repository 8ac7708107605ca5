import os

import numpy as np
import pytest

from warpcurv.classify import ClassifyConfig, classify
from warpcurv.corpus import (
    PARAMS, STEP2_F, STEP2_F_ALT, STEP3_PSI, builtin_cases, case_by_name, export_corpus, ode_residual,
    run_case,
)
from warpcurv.expr import evaluate
from warpcurv.tensor import metric_at, read_chart
from warpcurv.warped import read_warp_spec

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
NAMES = ["fiber-general", "fiber-step-i", "fiber-step-iii", "M-general", "M-step-I", "M-step-II",
         "M-step-III", "M-special"]


def test_case_list():
    assert [c.name for c in builtin_cases()] == NAMES


def test_lookup_is_case_insensitive():
    assert case_by_name("m-step-ii").name == "M-step-II"
    with pytest.raises(KeyError):
        case_by_name("nope")


def test_oracle_counts():
    for c in builtin_cases():
        if c.spec is None:
            assert (len(c.oracles["R"]), len(c.oracles["S"])) == (6, 4)
        else:
            assert (len(c.oracles["R"]), len(c.oracles["S"])) == (10, 5)


def test_fiber_index_mapping():
    chart = case_by_name("fiber-general").chart
    assert chart.coords[0] == "x2"
    g, _, _ = metric_at(chart, {"x2": 0.5, "x3": 0.5, "x4": 0.5, "x5": 0.5})
    # fiber index 1 is the flat (dx2)^2 slot; h = x2^2 + 2 sits on indices 2, 3
    assert g[0, 0] == 1.0 and g[1, 1] == pytest.approx(2.25)


def test_step_two_warp_ode():
    xs = np.random.Generator(np.random.PCG64(42)).uniform(0.5, 1.5, 25)
    assert ode_residual(STEP2_F, xs) < 1e-10


def test_step_two_alternate_form():
    xs = np.linspace(0.5, 1.5, 11)
    assert ode_residual(STEP2_F_ALT, xs) < 1e-10


def test_step_three_psi_at_origin():
    assert evaluate(STEP3_PSI, {"x3": 0.0, **PARAMS}) == 1.0


@pytest.mark.parametrize("name", NAMES)
def test_case_reproduces(name):
    rep = run_case(name, ClassifyConfig(points=10, seed=42))
    failed = [(c.name, c.detail) for c in rep.checks if not c.passed]
    assert rep.passed, failed


def test_general_flags():
    rep = run_case("M-general", ClassifyConfig(points=10))
    assert rep.report.flags["ein_level"] == 4 and rep.report.flags["grt"] is False


def test_step_three_kappa_constant():
    rep = run_case("M-step-III", ClassifyConfig(points=10))
    ks = [p.sample.kappa for p in rep.report.points]
    assert rep.report.flags["constant_curvature"]
    assert (max(ks) - min(ks)) / max(abs(k) for k in ks) < 1e-8


def test_special_case_lists_vanishing_coefficient():
    rep = run_case("M-special", ClassifyConfig(points=10))
    assert rep.report.special_vanishing
    assert rep.fiber_report.flags["grt"] and not rep.fiber_report.flags["roter"]


def test_export_round_trip(tmp_path):
    written = export_corpus(str(tmp_path))
    assert len(written) == 21
    spec = read_warp_spec(tmp_path / "m_step1.spec")
    case = case_by_name("M-step-I")
    pt = {"x1": 0.9, "x2": 0.3, "x3": 0.8, "x4": 0.6, "x5": 0.4}
    from warpcurv.warped import assemble
    assert np.allclose(metric_at(assemble(spec), pt)[0], metric_at(case.chart, pt)[0], rtol=1e-15)
    chart = read_chart(tmp_path / "m_special.metric")
    assert chart.domain["x2"] == case_by_name("M-special").chart.domain["x2"]


def test_checked_in_corpus_is_current(tmp_path):
    export_corpus(str(tmp_path))
    for name in sorted(os.listdir(tmp_path)):
        with open(os.path.join(ROOT, "corpus", name), encoding="utf-8") as fh:
            assert fh.read() == (tmp_path / name).read_text(), name


@pytest.mark.parametrize("name", NAMES)
def test_scaling_leaves_verdicts(name):
    cfg = ClassifyConfig(points=6, seed=42)
    case = case_by_name(name)
    a = classify(case.chart, cfg).flags
    b = classify(case.chart.scaled(2.0), cfg).flags
    assert a == b
