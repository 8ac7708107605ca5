import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from warpcurv.tensor import (
    ChartFormatError, SamplingError, SingularMetricError, Tolerances, chart_to_text, christoffel,
    conformal, curvature_sample, draw_points, gaussian, kulkarni_nomizu, metric_at, parse_chart,
    ricci_family, sym2_vectorize, sym4_index, sym4_vectorize, symmetry_residuals,
)
from warpcurv.corpus import STEP1_H, GENERIC_PSI, fiber_chart

from conftest import random_symmetric

# R in canonical class order for SKEW3 at (0.3, 0.7, -0.4); computed symbolically with sympy
SKEW3_POINT = {"x1": 0.3, "x2": 0.7, "x3": -0.4}
SKEW3_R = [0.40130303751835404622, 0.019611630515845085015, -0.088586390547935418463,
           0.013052472558787436829, 0.20922125246293303165, -0.51557128122959906378]


# ---------------------------------------------------------------- chart files


def test_parse_chart_fills_symmetric_entries(charts):
    c = charts["skew3"]
    assert c.n == 3 and c.coords == ("x1", "x2", "x3")
    assert c.entry(0, 1) is c.entry(1, 0)
    assert c.domain["x3"] == (-1.0, 1.0)


def test_chart_text_round_trip(charts):
    c = charts["skew3"]
    again = parse_chart(chart_to_text(c, "round trip"))
    g1, dg1, d2g1 = metric_at(c, SKEW3_POINT)
    g2, dg2, d2g2 = metric_at(again, SKEW3_POINT)
    assert np.allclose(g1, g2, rtol=1e-14) and np.allclose(dg1, dg2, rtol=1e-14)
    assert np.allclose(d2g1, d2g2, rtol=1e-14)


@pytest.mark.parametrize("text, line, fragment", [
    ("dim 2\ncoords x y\ndomain x 0 1\ndomain y 0 1\ng 1 1 : 1\ng 2 2 : q\n", 6, "unknown identifier 'q'"),
    ("dim 2\ncoords x y\ndomain x 0 1\n", None, "domain"),
    ("dim 2\ncoords x y\ndomain x 0 1\ndomain y 0 1\ng 1 2 : x\ng 2 1 : y\n", 6, ""),
    ("dim 2\ncoords x y\ndomain x 0 1\ndomain y 0 1\ng 1 3 : x\n", 5, ""),
    ("dim 2\ncoords x y\ndomain x 1 0\ndomain y 0 1\n", 3, ""),
    ("dim 3\ncoords x y\n", 2, ""),
    ("bogus\n", 1, ""),
])
def test_chart_format_errors(text, line, fragment):
    with pytest.raises(ChartFormatError) as info:
        parse_chart(text)
    msg = str(info.value)
    assert fragment in msg
    if line is not None:
        assert msg.endswith(f"at line {line}")


def test_parameters_are_bound():
    c = parse_chart("dim 2\ncoords x y\nparam k = 3\ndomain x 0 1\ndomain y 0 1\ng 1 1 : k\ng 2 2 : k*x\n")
    g, _, _ = metric_at(c, {"x": 0.5, "y": 0.2})
    assert np.allclose(g, np.diag([3.0, 1.5]))


# ---------------------------------------------------------------- metric derivatives


def test_euclidean_derivatives_vanish(charts):
    g, dg, d2g = metric_at(charts["flat3"], {"x1": 0.1, "x2": 0.2, "x3": 0.3})
    assert np.array_equal(g, np.eye(3))
    assert not dg.any() and not d2g.any()


def test_step_one_fiber_entry_and_derivatives():
    fiber = fiber_chart(STEP1_H, GENERIC_PSI)
    g, dg, d2g = metric_at(fiber, {"x2": 0.0, "x3": 0.5, "x4": 0.5, "x5": 0.5})
    # fiber index 2 (0-based) is the (dx3)^2 slot carrying h(x2)
    assert g[1, 1] == pytest.approx(1.0)
    assert dg[0, 1, 1] == pytest.approx(1.0)
    assert d2g[0, 0, 1, 1] == pytest.approx(1.0)


def test_power_rule_entry():
    c = parse_chart("dim 2\ncoords x1 x2\ndomain x1 1 3\ndomain x2 0 1\ng 1 1 : x1^2\ng 2 2 : 1\n")
    _, dg, d2g = metric_at(c, {"x1": 2.0, "x2": 0.5})
    assert dg[0, 0, 0] == 4.0 and d2g[0, 0, 0, 0] == 2.0


def test_second_derivatives_symmetric(charts):
    _, _, d2g = metric_at(charts["skew3"], SKEW3_POINT)
    assert np.array_equal(d2g, d2g.transpose(1, 0, 2, 3))


def test_singular_metric_rejected():
    c = parse_chart("dim 2\ncoords x y\ndomain x -1 1\ndomain y 0 1\ng 1 1 : x\ng 2 2 : 1\n")
    with pytest.raises(SingularMetricError):
        metric_at(c, {"x": 0.0, "y": 0.5})


# ---------------------------------------------------------------- Christoffel, Riemann


def test_sphere_christoffel(charts):
    th = 0.9
    s = curvature_sample(charts["sphere"], {"th": th, "ph": 0.4})
    assert s.gamma[0, 1, 1] == pytest.approx(-math.sin(th) * math.cos(th), rel=1e-14)
    assert s.gamma[1, 0, 1] == pytest.approx(1 / math.tan(th), rel=1e-14)
    assert np.allclose(s.gamma, s.gamma.transpose(0, 2, 1), atol=0)


def test_flat_christoffel_and_curvature(charts):
    s = curvature_sample(charts["flat3"], {"x1": 0.1, "x2": 0.2, "x3": 0.3})
    assert not s.gamma.any() and not s.R.any()
    assert s.kappa == 0.0 and s.kappa2 == 0.0 and not s.S.any()


def test_christoffel_direct_formula(charts):
    g, dg, _ = metric_at(charts["skew3"], SKEW3_POINT)
    gamma = christoffel(np.linalg.inv(g), dg)
    n = 3
    lowered = np.zeros((n, n, n))
    for l in range(n):
        for j in range(n):
            for k in range(n):
                lowered[l, j, k] = 0.5 * (dg[j, l, k] + dg[k, l, j] - dg[l, j, k])
    assert np.allclose(gamma, np.einsum("il,ljk->ijk", np.linalg.inv(g), lowered), rtol=1e-14, atol=1e-15)


def test_riemann_matches_symbolic_oracle(charts):
    s = curvature_sample(charts["skew3"], SKEW3_POINT)
    assert np.allclose(sym4_vectorize(s.R), SKEW3_R, rtol=1e-12, atol=1e-14)


def test_sphere_curvature(charts):
    th = 1.1
    s = curvature_sample(charts["sphere"], {"th": th, "ph": 2.0})
    # the convention that reproduces the closed-form warped-product components
    # gives the round sphere negative R_{th ph ph th} and kappa
    assert s.R[0, 1, 1, 0] == pytest.approx(-math.sin(th) ** 2, rel=1e-12)
    assert s.kappa == pytest.approx(-2.0, rel=1e-12)
    assert np.allclose(s.S, s.g * s.kappa / 2, rtol=1e-12, atol=1e-14)
    assert np.allclose(s.R, s.kappa / 2 * s.G, rtol=1e-12, atol=1e-14)


def test_hyperbolic_plane_constant_curvature(charts):
    s = curvature_sample(charts["hyperbolic"], {"x1": 0.2, "x2": 1.3})
    assert s.kappa == pytest.approx(2.0, rel=1e-12)
    assert np.allclose(s.R, s.kappa / 2 * s.G, rtol=1e-12, atol=1e-14)


def test_three_sphere_is_constant_curvature(charts):
    s = curvature_sample(charts["sphere3"], {"a": 1.0, "b": 1.4, "c": 0.3})
    # radius 2: |kappa| = n(n-1)/r^2
    assert abs(s.kappa) == pytest.approx(1.5, rel=1e-12)
    assert np.abs(s.R - s.kappa / 6 * s.G).max() < 1e-13
    assert np.abs(s.C).max() < 1e-13


def test_fiber_component_against_closed_form():
    # generic fiber: R_{2323} = -(h')^2 / 4 in fiber-local indices (x3, x4 slots)
    from warpcurv.corpus import fiber_chart as fc, _e
    h, psi = _e("x2^2 + 2"), _e("x3^2 + 2")
    s = curvature_sample(fc(h, psi), {"x2": 0.6, "x3": 0.5, "x4": 0.7, "x5": 0.9})
    hp = 2 * 0.6
    assert s.R[1, 2, 1, 2] == pytest.approx(-hp ** 2 / 4, rel=1e-12)
    hval, hpp = 0.6 ** 2 + 2, 2.0
    assert s.S[0, 0] == pytest.approx(3 * (2 * hval * hpp - hp ** 2) / (4 * hval ** 2), rel=1e-12)


# ---------------------------------------------------------------- Ricci family


def test_ricci_levels_compose(charts):
    s = curvature_sample(charts["skew3"], SKEW3_POINT)
    op = s.ginv @ s.S
    assert np.allclose(s.S2, s.S @ op, rtol=1e-12)
    assert np.allclose(s.S3, s.S2 @ op, rtol=1e-12)
    assert np.allclose(s.S4, s.S3 @ op, rtol=1e-12)
    assert s.kappa2 == pytest.approx(np.trace(op @ op), rel=1e-12)
    for m in (s.S, s.S2, s.S3, s.S4):
        assert np.array_equal(m, m.T)


def test_ricci_family_of_flat():
    S, kappa, S2, S3, S4, kappa2 = ricci_family(np.zeros((3, 3, 3, 3)), np.eye(3))
    assert kappa == 0 and kappa2 == 0 and not S.any() and not S4.any()


# ---------------------------------------------------------------- Kulkarni-Nomizu


def test_identity_wedge_in_two_dimensions():
    assert kulkarni_nomizu(np.eye(2), np.eye(2))[0, 1, 0, 1] == -2.0


def test_wedge_local_expression(charts):
    s = curvature_sample(charts["skew3"], SKEW3_POINT)
    g, S = s.g, s.S
    W = kulkarni_nomizu(g, S)
    n = 3
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    want = g[i, l] * S[j, k] + S[i, l] * g[j, k] - g[i, k] * S[j, l] - S[i, k] * g[j, l]
                    assert W[i, j, k, l] == pytest.approx(want, rel=1e-14, abs=1e-15)


def test_gaussian_is_half_identity_wedge():
    g = np.diag([1.0, -2.0, 3.0])
    G = gaussian(g)
    assert G[0, 1, 1, 0] == g[0, 0] * g[1, 1]
    assert G[0, 1, 0, 1] == -g[0, 0] * g[1, 1]


@settings(max_examples=100)
@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_wedge_generalized_curvature_identities(n, seed):
    rng = np.random.default_rng(seed)
    A, B = random_symmetric(rng, n), random_symmetric(rng, n)
    W = kulkarni_nomizu(A, B)
    scale = np.abs(W).max()
    assert np.abs(W + W.transpose(1, 0, 2, 3)).max() <= 1e-13 * scale
    assert np.abs(W + W.transpose(0, 1, 3, 2)).max() <= 1e-13 * scale
    assert np.abs(W - W.transpose(2, 3, 0, 1)).max() <= 1e-13 * scale
    bianchi = W + np.einsum("jkil->ijkl", W) + np.einsum("kijl->ijkl", W)
    assert np.abs(bianchi).max() <= 1e-13 * scale
    assert np.abs(W - kulkarni_nomizu(B, A)).max() <= 1e-13 * scale


# ---------------------------------------------------------------- conformal tensor


def test_conformal_rejects_low_dimension():
    with pytest.raises(ValueError):
        conformal(np.zeros((2,) * 4), np.zeros((2, 2)), 0.0, np.eye(2))


def test_conformal_vanishes_for_conformally_flat_metric(charts):
    s = curvature_sample(charts["conformal4"], {"x1": 0.3, "x2": 0.8, "x3": 0.5, "x4": 0.5})
    assert np.abs(s.R).max() > 1e-2
    assert np.abs(s.C).max() <= 1e-12 * np.abs(s.R).max()


def test_conformal_nonzero_generic(charts):
    from warpcurv.corpus import case_by_name
    chart = case_by_name("M-general").chart
    s = curvature_sample(chart, {"x1": 0.9, "x2": 0.6, "x3": 0.7, "x4": 0.4, "x5": 0.5})
    assert not Tolerances().is_zero(s.C, s.scale)


# ---------------------------------------------------------------- vectorization


@pytest.mark.parametrize("n, count", [(2, 1), (3, 6), (4, 21), (5, 55)])
def test_sym4_class_count(n, count):
    # pairs (i<j) <= (k<l): N(N+1)/2 with N = n(n-1)/2
    assert len(sym4_index(n)) == count


def test_sym4_order_is_lexicographic():
    idx = sym4_index(4)
    assert idx == sorted(idx)
    assert idx[0] == (0, 1, 0, 1) and idx[-1] == (2, 3, 2, 3)


def test_vectorize_identity_wedge():
    v = sym4_vectorize(kulkarni_nomizu(np.eye(3), np.eye(3)))
    for (i, j, k, l), x in zip(sym4_index(3), v):
        assert x == (-2.0 if (i, j) == (k, l) else 0.0)


def test_vectorize_rejects_non_curvature_tensor(rng):
    T = rng.normal(size=(3, 3, 3, 3))
    with pytest.raises(ValueError):
        sym4_vectorize(T, Tolerances())


def test_sym2_vectorize():
    A = np.array([[1.0, 2.0], [2.0, 3.0]])
    assert sym2_vectorize(A).tolist() == [1.0, 2.0, 3.0]


# ---------------------------------------------------------------- sampling


def test_draw_points_is_seeded(charts):
    c = charts["skew3"]
    a = draw_points(c, 4, np.random.Generator(np.random.PCG64(3)))
    b = draw_points(c, 4, np.random.Generator(np.random.PCG64(3)))
    assert [p for p, _ in a] == [p for p, _ in b]
    assert all(c.contains(p) for p, _ in a)


def test_draw_points_exhaustion():
    c = parse_chart("dim 2\ncoords x y\ndomain x 0 1\ndomain y 0 1\ng 1 1 : log(0 - x - 1)\ng 2 2 : 1\n")
    with pytest.raises(SamplingError):
        draw_points(c, 1, np.random.default_rng(0), max_retries=3)


# ---------------------------------------------------------------- sample invariants

SAMPLE_CHARTS = ["skew3", "sphere", "hyperbolic", "sphere3", "conformal4"]


@pytest.mark.parametrize("name", SAMPLE_CHARTS)
def test_sample_invariants(charts, name):
    c = charts[name]
    for point, sample in draw_points(c, 10, np.random.Generator(np.random.PCG64(11))):
        res = symmetry_residuals(sample)
        assert max(res.values()) <= 1e-10, (point, res)
