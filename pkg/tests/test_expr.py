import math

import mpmath
import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings, strategies as st

from warpcurv.expr import (
    Binary, EvaluationError, ExprSyntaxError, FUNCTIONS, Number, Param, Unary, Var,
    compile_many, differentiate, evaluate, parse, simplify_basic,
)

COORDS = ("x1", "x2")
PARAMS = ("c1", "c2")


def p(src):
    return parse(src, COORDS, PARAMS)


# ---------------------------------------------------------------- parsing


def test_parse_power():
    assert p("x1^2") == Binary("pow", Var("x1"), Number(2.0))


def test_parse_warp_entry_structure():
    e = p("c2*cos(x2 - 2*c1)^2")
    want = Binary("mul", Param("c2"),
                  Binary("pow", Unary("cos", Binary("sub", Var("x2"), Binary("mul", Number(2.0), Param("c1")))),
                         Number(2.0)))
    assert e == want


def test_unbalanced_reports_offset():
    with pytest.raises(ExprSyntaxError) as info:
        p("sin(x1")
    assert info.value.position == 6
    assert "unbalanced" in info.value.reason


@pytest.mark.parametrize("src, reason", [
    ("", "empty input"),
    ("   ", "empty input"),
    ("x1 + q", "unknown identifier 'q'"),
    ("x1 )", "unbalanced parentheses"),
    ("x1 $ 2", "unexpected character"),
    ("sin x1", "requires an argument"),
    ("x1 +", "unexpected end"),
])
def test_parse_errors(src, reason):
    with pytest.raises(ExprSyntaxError) as info:
        p(src)
    assert reason in str(info.value)


def test_unknown_identifier_position():
    with pytest.raises(ExprSyntaxError) as info:
        p("x1 + q")
    assert info.value.position == 5


def test_precedence_and_associativity():
    env = {"x1": 2.0, "x2": 3.0, "c1": 0.0, "c2": 0.0}
    assert evaluate(p("2^3^2"), env) == 512.0
    assert evaluate(p("-x1^2"), env) == -4.0
    assert evaluate(p("x2 - x1 - 1"), env) == 0.0
    assert evaluate(p("x2 / x1 * 4"), env) == 6.0
    assert evaluate(p("2*-x1"), env) == -4.0
    assert evaluate(p("1.5e1 + 2E-1"), env) == pytest.approx(15.2)


def test_identifiers_resolve_coordinates_before_parameters():
    e = parse("a", ["a"], ["a"])
    assert isinstance(e, Var)


# ---------------------------------------------------------------- evaluation


def test_evaluate_square():
    assert evaluate(p("x1^2"), {"x1": 3.0}) == 9.0


def test_step_one_derivative_value():
    h = p("c1*exp(c2*x2)")
    assert evaluate(differentiate(h, "x2"), {"x2": 0.0, "c1": 1.0, "c2": 1.0}) == 1.0


@pytest.mark.parametrize("src, env", [
    ("1/x1", {"x1": 0.0}),
    ("log(x1)", {"x1": -1.0}),
    ("x1^(-2)", {"x1": 0.0}),
    ("sqrt(x1 - 1)", {"x1": 0.0}),
])
def test_domain_faults_name_subexpression(src, env):
    e = p(src)
    with pytest.raises(EvaluationError) as info:
        evaluate(e, env)
    assert info.value.expr is not None
    assert str(info.value.expr) in str(info.value)


def test_missing_binding():
    with pytest.raises(EvaluationError):
        evaluate(p("x1 + c1"), {"x1": 1.0})


def test_compiled_matches_tree():
    exprs = [p("sin(x1)*c1 + x2^3"), p("exp(-x1/c2)"), p("sqrt(x1^2 + x2^2)")]
    fn = compile_many(exprs, ["x1", "x2", "c1", "c2"])
    vals = fn([0.3, -1.2, 2.0, 0.5])
    env = {"x1": 0.3, "x2": -1.2, "c1": 2.0, "c2": 0.5}
    assert vals == [evaluate(e, env) for e in exprs]


def test_compiled_fault_carries_subexpression():
    fn = compile_many([p("log(x1 - 1)")], ["x1"])
    with pytest.raises(EvaluationError) as info:
        fn([0.5])
    assert "log" in str(info.value.expr)


# ---------------------------------------------------------------- differentiation


def test_power_rule():
    d = simplify_basic(differentiate(p("x1^2"), "x1"))
    assert evaluate(d, {"x1": 1.7}) == pytest.approx(3.4, rel=1e-15)
    assert d.free_names() == {"x1"}


def test_exponential_with_parameters():
    d = differentiate(p("c1*exp(c2*x2)"), "x2")
    env = {"x2": 0.4, "c1": 1.3, "c2": -0.7}
    assert evaluate(d, env) == pytest.approx(1.3 * -0.7 * math.exp(-0.7 * 0.4), rel=1e-14)


def test_cos_squared_against_central_difference():
    e = p("cos(x2)^2")
    d = differentiate(e, "x2")
    x, h = 0.7, 1e-5
    fd = (evaluate(e, {"x2": x + h}) - evaluate(e, {"x2": x - h})) / (2 * h)
    assert abs(evaluate(d, {"x2": x}) - fd) / abs(fd) < 1e-6


def test_variable_exponent_uses_exp_log():
    e = p("x1^x2")
    env = {"x1": 1.7, "x2": 0.6}
    d1 = evaluate(differentiate(e, "x1"), env)
    d2 = evaluate(differentiate(e, "x2"), env)
    assert d1 == pytest.approx(0.6 * 1.7 ** -0.4, rel=1e-14)
    assert d2 == pytest.approx(1.7 ** 0.6 * math.log(1.7), rel=1e-14)


def test_derivative_of_unrelated_variable_is_zero():
    d = simplify_basic(differentiate(p("sin(x1)*c1"), "x2"))
    assert d == Number(0.0)


# ---------------------------------------------------------------- simplification


def test_simplify_drops_zero_term():
    assert simplify_basic(p("0*sin(x1) + x2")) == Var("x2")


def test_simplify_folds_constants():
    assert simplify_basic(p("(2*3)*x1")) == Binary("mul", Number(6.0), Var("x1"))


@pytest.mark.parametrize("src, want", [
    ("x1^1", Var("x1")),
    ("x1*1", Var("x1")),
    ("-(-x1)", Var("x1")),
    ("x1 - 0", Var("x1")),
    ("x1 / 1", Var("x1")),
])
def test_simplify_identities(src, want):
    assert simplify_basic(p(src)) == want


def test_simplify_keeps_faulting_constants():
    e = simplify_basic(p("log(0 - 1) + x1"))
    with pytest.raises(EvaluationError):
        evaluate(e, {"x1": 1.0})


def test_simplified_step_one_derivative_agrees():
    h = p("c1*exp(c2*x2)")
    d = differentiate(h, "x2")
    s = simplify_basic(d)
    rng = np.random.default_rng(5)
    for _ in range(50):
        env = {"x2": rng.uniform(-2, 2), "c1": rng.uniform(0.1, 3), "c2": rng.uniform(-2, 2)}
        a, b = evaluate(d, env), evaluate(s, env)
        assert abs(a - b) <= 4 * np.finfo(float).eps * max(abs(a), 1e-300)


# ---------------------------------------------------------------- properties

NAMES = COORDS + PARAMS


def leaves():
    return st.one_of(
        st.sampled_from([Var("x1"), Var("x2"), Param("c1"), Param("c2")]),
        st.floats(min_value=0.25, max_value=3.0).map(lambda v: Number(round(v, 3))),
    )


def trees(depth):
    if depth <= 1:
        return leaves()
    sub = trees(depth - 1)
    return st.one_of(
        leaves(),
        st.builds(Unary, st.sampled_from(("neg",) + FUNCTIONS), sub),
        st.builds(Binary, st.sampled_from(("add", "sub", "mul", "div")), sub, sub),
        st.builds(lambda b, k: Binary("pow", b, Number(float(k))), sub, st.integers(-3, 4)),
        st.builds(lambda b, e: Binary("pow", b, e), sub, sub),
    )


envs = st.fixed_dictionaries({k: st.floats(min_value=0.2, max_value=1.8) for k in NAMES})

_MP = {
    "neg": lambda a: -a, "sin": mpmath.sin, "cos": mpmath.cos, "tan": mpmath.tan,
    "exp": mpmath.exp, "log": mpmath.log, "sqrt": mpmath.sqrt, "sinh": mpmath.sinh,
    "cosh": mpmath.cosh, "tanh": mpmath.tanh,
}


def mp_eval(e, env):
    """High-precision reference evaluator, independent of the package's evaluator."""
    if isinstance(e, Number):
        return mpmath.mpf(e.value)
    if isinstance(e, (Var, Param)):
        return env[e.name]
    if isinstance(e, Unary):
        return _MP[e.op](mp_eval(e.arg, env))
    a, b = mp_eval(e.left, env), mp_eval(e.right, env)
    if e.op == "add":
        return a + b
    if e.op == "sub":
        return a - b
    if e.op == "mul":
        return a * b
    if e.op == "div":
        return a / b
    return mpmath.power(a, b)


def _safe(value):
    return value is not None and math.isfinite(value) and abs(value) < 1e8


def _try(fn):
    try:
        return fn()
    except (EvaluationError, OverflowError):
        return None


@settings(max_examples=100, suppress_health_check=[HealthCheck.filter_too_much, HealthCheck.too_slow])
@given(trees(6), envs, st.sampled_from(COORDS))
def test_derivative_matches_central_difference(e, env, v):
    value = _try(lambda: evaluate(e, env))
    d = _try(lambda: evaluate(differentiate(e, v), env))
    assume(_safe(value) and _safe(d))
    with mpmath.workdps(40):
        menv = {k: mpmath.mpf(x) for k, x in env.items()}
        x0 = menv[v]
        h = mpmath.mpf(10) ** -12 * max(1, abs(x0))

        def shifted(dx):
            return mp_eval(e, {**menv, v: x0 + dx})

        try:
            # Richardson-extrapolated central difference
            d1 = (shifted(h) - shifted(-h)) / (2 * h)
            d2 = (shifted(2 * h) - shifted(-2 * h)) / (4 * h)
            fd = (4 * d1 - d2) / 3
        except (ZeroDivisionError, ValueError):
            assume(False)
        assume(mpmath.im(fd) == 0 if isinstance(fd, mpmath.mpc) else True)
        fd = float(mpmath.re(fd))
    assert abs(d - fd) <= 1e-6 * max(abs(fd), 1e-12)


@settings(max_examples=60, suppress_health_check=[HealthCheck.filter_too_much])
@given(trees(5), envs)
def test_source_round_trip(e, env):
    value = _try(lambda: evaluate(e, env))
    assume(value is not None and math.isfinite(value))
    again = parse(e.to_source(), COORDS, PARAMS)
    assert evaluate(again, env) == pytest.approx(value, rel=1e-12, abs=1e-300)


@settings(max_examples=60, suppress_health_check=[HealthCheck.filter_too_much])
@given(trees(5), envs)
def test_simplify_preserves_value(e, env):
    value = _try(lambda: evaluate(e, env))
    assume(value is not None and math.isfinite(value))
    s = simplify_basic(e)
    assert evaluate(s, env) == pytest.approx(value, rel=1e-12, abs=1e-300)


@settings(max_examples=60, suppress_health_check=[HealthCheck.filter_too_much])
@given(trees(4), trees(4), envs)
def test_derivative_is_linear(a, b, env):
    da = _try(lambda: evaluate(differentiate(a, "x1"), env))
    db = _try(lambda: evaluate(differentiate(b, "x1"), env))
    dsum = _try(lambda: evaluate(differentiate(a + b, "x1"), env))
    assume(_safe(da) and _safe(db) and _safe(dsum))
    assert dsum == da + db
