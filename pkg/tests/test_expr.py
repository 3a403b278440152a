import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nma import expr as ex
from nma.errors import ParseError

VARS = ["x1", "y1", "s", "t"]

leaves = st.one_of(
    st.floats(0, 100, allow_nan=False).map(ex.Num),
    st.sampled_from(VARS).map(ex.Var),
)


def extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*/"), children, children).map(lambda a: ex.Bin(*a)),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "sqrt"]), children).map(lambda a: ex.Call(*a)),
        children.filter(lambda c: not isinstance(c, ex.Num)).map(ex.Neg),
        st.tuples(children, st.integers(-3, 4)).map(lambda a: ex.Pow(*a)),
    )


trees = st.recursive(leaves, extend, max_leaves=12)


def test_spec_example_depth_and_value():
    e = ex.parse("1 + 0.5*sin(x1)*sin(t)")
    assert ex.depth(e) == 4
    assert ex.evaluate(e, {"x1": 0.0, "t": 0.0}) == 1.0


def test_precedence_and_power():
    assert ex.evaluate(ex.parse("2 + 3*4^2"), {}) == 50.0
    assert ex.evaluate(ex.parse("-2**2"), {}) == -4.0
    assert ex.evaluate(ex.parse("s^-1"), {"s": 4.0}) == 0.25
    assert ex.evaluate(ex.parse("pi"), {}) == math.pi
    assert ex.parse("x_1") == ex.parse("x1")


@pytest.mark.parametrize("bad, col", [("1 +", 4), ("sin(x1", 7), ("foo(x1)", 1), ("2^1.5", 3), ("1 $ 2", 3)])
def test_parse_errors_carry_column(bad, col):
    with pytest.raises(ParseError) as info:
        ex.parse(bad)
    assert info.value.line == 1
    assert info.value.column == col


@settings(max_examples=300)
@given(trees)
def test_round_trip(e):
    assert ex.parse(ex.to_string(e)) == e


def test_matches_reference_evaluator():
    rng = np.random.default_rng(0)
    texts = [
        "1 + 0.5*sin(x1)*sin(t)",
        "exp(-s)*cos(2*y1) + sqrt(1 + x1^2)/(2 + sin(t))",
        "(x1 - y1)^3 - s*t/7 + 0.1*cos(x1*y1*s)",
        "1/(1 + s^2)^2 - exp(sin(t))",
    ]
    pts = rng.uniform(-2, 2, size=(1000, 4))
    for text in texts:
        e = ex.parse(text)
        vec = ex.evaluate_on(e, pts, 2)
        ref = np.array([ex.evaluate_reference(e, dict(zip(VARS, p))) for p in pts])
        np.testing.assert_allclose(vec, ref, rtol=1e-15, atol=1e-15)


def test_non_finite_rejected():
    pts = np.zeros((3, 4))
    with pytest.raises(ValueError):
        ex.evaluate_on(ex.parse("1/s"), pts, 2)
    with pytest.raises(ValueError):
        ex.evaluate_on(ex.parse("x2"), pts, 2)


def test_symbolic_derivatives_match_fd():
    e = ex.parse("sin(x1)*cos(y1)*s^2 + exp(t/3)*x1")
    x = np.array([[0.3, -0.2, 0.7, 1.1]])
    d = ex.complex_derivatives(e, x, 2)
    h = 1e-5

    def f(p):
        return ex.evaluate_on(e, p, 2)

    real = np.zeros(4)
    for a in range(4):
        dx = np.zeros(4)
        dx[a] = h
        real[a] = (f(x + dx) - f(x - dx))[0] / (2 * h)
    np.testing.assert_allclose(d.grad[0], [0.5 * (real[0] - 1j * real[1]), 0.5 * (real[2] - 1j * real[3])], atol=1e-8)
    assert d.hess.shape == (1, 2, 2)
    np.testing.assert_allclose(d.hess[0], d.hess[0].conj().T, atol=1e-15)
