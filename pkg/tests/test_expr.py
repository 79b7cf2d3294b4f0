import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infharm import expr as ex
from infharm.expr import DomainError, ParseError, parse

x, y = ex.variables(2)


def test_derivatives_of_known_expressions():
    e = ex.sin(x) * ex.exp(y) + x ** 3
    X = np.array([[0.3, -0.2]])
    env = X.T
    assert e.diff(0).evaluate(env)[0] == pytest.approx(np.cos(0.3) * np.exp(-0.2) + 3 * 0.09)
    assert e.diff(1).diff(0).evaluate(env)[0] == pytest.approx(np.cos(0.3) * np.exp(-0.2))


def test_smart_constructors_fold_constants():
    assert isinstance(x * 0, ex.Const)
    assert (x + 0) is x
    assert (x * 1) is x
    assert isinstance(ex.Const(2.0) * ex.Const(3.0), ex.Const)


def test_parse_roundtrip_and_grammar():
    e = parse("(+ (* 2 (^ x1 2)) (sin x2) (- x1))")
    env = np.array([[1.5], [0.4]])
    want = 2 * 1.5 ** 2 + np.sin(0.4) - 1.5
    assert e.evaluate(env)[0] == pytest.approx(want)
    again = parse(e.to_prefix())
    assert again.evaluate(env)[0] == pytest.approx(want)


@pytest.mark.parametrize("text", ["(+ x1", "(foo x1)", "(/ x1)", ")", "x0", ""])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse(text)


def test_domain_error_on_non_finite():
    with pytest.raises(DomainError):
        ex.log(x).evaluate(np.array([[-1.0]]))


ops = st.sampled_from(["+", "-", "*"])


@st.composite
def trees(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(st.sampled_from(["x1", "x2", "1.5", "-0.5", "(sin x1)", "(cos x2)"]))
    return f"({draw(ops)} {draw(trees(depth - 1))} {draw(trees(depth - 1))})"


@given(trees(), st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=80, deadline=None)
def test_symbolic_gradient_matches_central_difference(text, a, b):
    e = parse(text)
    env = np.array([[a], [b]])
    h = 1e-6
    for i in range(2):
        d = np.zeros((2, 1))
        d[i] = h
        fd = (e.evaluate(env + d)[0] - e.evaluate(env - d)[0]) / (2 * h)
        assert e.diff(i).evaluate(env)[0] == pytest.approx(fd, abs=1e-5)
    assert parse(e.to_prefix()).evaluate(env)[0] == pytest.approx(e.evaluate(env)[0])
