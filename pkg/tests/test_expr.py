import math

import numpy as np
import pytest
import sympy

from snlab.errors import ExpressionError
from snlab.expr import compile_expr, derivative, parse


def test_parse_and_evaluate():
    e = parse("2*x^2 - exp(-t) + sin(pi*x)/3", ["x", "t"])
    f = compile_expr(e, ["x", "t"])
    x, t = 0.3, 1.7
    assert f(x, t) == pytest.approx(2 * x**2 - math.exp(-t) + math.sin(math.pi * x) / 3, rel=1e-14)
    xs = np.linspace(0, 1, 5)
    assert f(xs, np.zeros(5)).shape == (5,)


def test_precedence():
    f = compile_expr(parse("-2^2 + 3*4/2 - (1-1)**3", ["x"]), ["x"])
    assert f(0.0) == pytest.approx(-4 + 6)


def test_symbolic_derivative():
    e = parse("x^3", ["x"])
    assert sympy.simplify(derivative(e, "x", 3) - 6) == 0


def test_constant_broadcasts():
    f = compile_expr(parse("1.5", ["x"]), ["x"])
    np.testing.assert_array_equal(f(np.zeros(3)), [1.5, 1.5, 1.5])


@pytest.mark.parametrize("text, pos", [("x + $", 4), ("sin(x", 5), ("foo(x)", 0), ("x +", 3),
                                       ("", 0), ("x y", 2)])
def test_errors_carry_position(text, pos):
    with pytest.raises(ExpressionError) as info:
        parse(text, ["x"])
    assert info.value.position == pos
