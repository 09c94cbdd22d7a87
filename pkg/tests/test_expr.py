import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resagc.expr import (
    Binary,
    Const,
    DivisionByZero,
    DomainError,
    Interval,
    ParseError,
    Pow,
    Unary,
    Var,
    compile_numpy,
    eval_interval,
    evaluate,
    parse,
    parameters,
    to_string,
    variables,
)
from resagc.geometry import Box


def test_parse_and_evaluate_basics():
    assert evaluate(parse("2*x0 + 1", 1), [3]) == 7
    assert evaluate(parse("x0^2 - x1/4", 2), [3, 2]) == 8.5
    assert evaluate(parse("-x0^2", 1), [3]) == -9
    assert evaluate(parse("2^3^2", 0), []) == 64  # left-associative
    assert evaluate(parse("a*x0 + b", 1, {"a": 2, "b": 1}), [1], {"a": 2, "b": 1}) == 3


def test_functions():
    e = parse("exp(x0) + sin(x1) + cos(x1) + sqrt(x0) + abs(-x1)", 2)
    x = [1.0, 0.5]
    expected = math.exp(1) + math.sin(0.5) + math.cos(0.5) + 1 + 0.5
    assert evaluate(e, x) == pytest.approx(expected)


@pytest.mark.parametrize(
    "text",
    ["", "x0 +", "(x0", "x2", "foo(x0)", "x0 ^ x0", "y + 1", "1 2", "x0 ^ 1.5"],
)
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse(text, 2)


def test_unknown_parameter_is_rejected():
    with pytest.raises(ParseError):
        parse("k*x0", 1, {"a": 1})


def test_division_by_zero_and_domain():
    with pytest.raises(DivisionByZero):
        evaluate(parse("1/x0", 1), [0])
    with pytest.raises(DomainError):
        evaluate(parse("sqrt(x0)", 1), [-1])
    f = compile_numpy(parse("1/x0", 1))
    with pytest.raises(DivisionByZero):
        f(np.array([[1.0], [0.0]]))


def test_variables_and_parameters():
    e = parse("a*x0 + x2 - b", 3, {"a": 1, "b": 2})
    assert variables(e) == {0, 2}
    assert parameters(e) == {"a", "b"}


def test_compile_numpy_matches_evaluate():
    e = parse("x0*x1 - exp(-x0) / (1 + x1^2)", 2)
    f = compile_numpy(e)
    X = np.random.default_rng(0).normal(size=(50, 2))
    got = f(X)
    want = [evaluate(e, x) for x in X]
    np.testing.assert_allclose(got, want, rtol=1e-14)


def test_interval_division_requires_zero_free_denominator():
    with pytest.raises(DivisionByZero):
        eval_interval(parse("1/x0", 1), Box([-1.0], [1.0]))


def test_interval_sqrt_domain():
    with pytest.raises(DomainError):
        eval_interval(parse("sqrt(x0)", 1), Box([-1.0], [1.0]))


def test_interval_known_ranges():
    iv = eval_interval(parse("x0^2", 1), Box([-2.0], [1.0]))
    assert iv.lo == 0.0 and iv.hi >= 4.0
    iv = eval_interval(parse("sin(x0)", 1), Box([0.0], [math.pi]))
    assert iv.hi == 1.0 and iv.lo <= 0.0
    iv = eval_interval(parse("cos(x0)", 1), Box([3.0], [3.5]))
    assert iv.lo == -1.0


# --- property tests --------------------------------------------------------

_leaf = st.one_of(
    st.builds(Var, st.integers(0, 1)),
    st.builds(Const, st.floats(-3, 3, allow_nan=False).map(lambda v: round(v, 3))),
)


def _extend(children):
    return st.one_of(
        st.builds(Binary, st.sampled_from(["+", "-", "*"]), children, children),
        st.builds(Unary, st.sampled_from(["neg", "sin", "cos", "abs"]), children),
        st.builds(Pow, children, st.integers(0, 3)),
    )


exprs = st.recursive(_leaf, _extend, max_leaves=8)


@settings(max_examples=300, deadline=None)
@given(exprs)
def test_round_trip(e):
    again = parse(to_string(e), 2)
    x = [0.37, -1.21]
    assert evaluate(again, x) == pytest.approx(evaluate(e, x), rel=1e-12, abs=1e-12)
    # parsing normalises negative literals, after which printing is a fixed point
    assert to_string(parse(to_string(again), 2)) == to_string(again)


@settings(max_examples=300, deadline=None)
@given(
    exprs,
    st.tuples(st.floats(-2, 2), st.floats(0, 1.5)),
    st.tuples(st.floats(-2, 2), st.floats(0, 1.5)),
    st.integers(0, 2**31 - 1),
)
def test_interval_soundness(e, b0, b1, seed):
    box = Box([b0[0], b1[0]], [b0[0] + b0[1], b1[0] + b1[1]])
    iv = eval_interval(e, box)
    rng = np.random.default_rng(seed)
    pts = np.vstack([box.vertices(), box.sample(rng, 40)])
    for x in pts:
        v = evaluate(e, x)
        assert iv.lo <= v <= iv.hi


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(0, 3), st.floats(-5, 5), st.floats(0, 3))
def test_interval_operations_are_outward(a, w1, b, w2):
    x, y = Interval(a, a + w1), Interval(b, b + w2)
    for op in (lambda p, q: p + q, lambda p, q: p - q, lambda p, q: p * q):
        r = op(x, y)
        for u in (x.lo, x.hi, 0.5 * (x.lo + x.hi)):
            for v in (y.lo, y.hi):
                assert r.lo <= op(u, v) <= r.hi
