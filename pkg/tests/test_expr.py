import numpy as np
import pytest

from fkmerton.expr import (DomainError, ParseError, constant,
                           parse_expression)


def numeric_partial(expr, var, t, y, h=1e-6):
    """Central difference in one variable for derivative cross-checks."""
    y = np.asarray(y, dtype=float)
    if var == "t":
        return (expr.evaluate(t + h, y) - expr.evaluate(t - h, y)) / (2 * h)
    index = int(var[1:]) - 1
    up, dn = y.copy(), y.copy()
    up[index] += h
    dn[index] -= h
    return (expr.evaluate(t, up) - expr.evaluate(t, dn)) / (2 * h)


class TestParsingAndEvaluation:
    def test_arithmetic_matches_python(self):
        e = parse_expression("2 + 3*4 - 10/4", 1)
        assert e.evaluate(0.0, 0.0) == 2 + 3 * 4 - 10 / 4

    def test_power_is_right_associative_and_binds_tighter_than_neg(self):
        assert parse_expression("2^3^2", 1).evaluate(0, 0) == 2 ** 9
        assert parse_expression("-2^2", 1).evaluate(0, 0) == -4.0

    def test_unary_functions(self):
        e = parse_expression("sin(t) + cos(y) + exp(y/4) + tanh(t*y)", 1)
        t, y = 0.7, -1.3
        expected = np.sin(t) + np.cos(y) + np.exp(y / 4) + np.tanh(t * y)
        assert e.evaluate(t, y) == pytest.approx(expected, rel=1e-15)

    def test_min_max(self):
        e = parse_expression("min(t, y) + max(t, y)", 1)
        assert e.evaluate(0.3, 0.8) == pytest.approx(1.1)

    def test_y_alias_only_in_one_dimension(self):
        assert parse_expression("y", 1).evaluate(0.0, 2.5) == 2.5
        with pytest.raises(ParseError):
            parse_expression("y", 2)

    def test_named_factors(self):
        e = parse_expression("y1 - 2*y2", 2)
        assert e.evaluate(0.0, [1.0, 3.0]) == pytest.approx(-5.0)

    def test_vectorized_evaluation_shape(self):
        e = parse_expression("sin(y*t)", 1)
        t = np.linspace(0, 1, 5)
        y = np.linspace(-1, 1, 5)
        out = e.evaluate(t, y[None, :])
        assert out.shape == (5,)
        assert out == pytest.approx(np.sin(y * t))

    def test_constant_broadcasts_to_batch_shape(self):
        e = parse_expression("0.5", 1)
        out = e.evaluate(0.0, np.zeros((1, 7)))
        assert out.shape == (7,)
        assert np.all(out == 0.5)

    def test_parse_error_reports_position(self):
        with pytest.raises(ParseError) as err:
            parse_expression("1 + * 2", 1)
        assert err.value.position == 4

    def test_unknown_identifier_rejected(self):
        with pytest.raises(ParseError):
            parse_expression("1 + bogus", 1)
        with pytest.raises(ParseError):
            parse_expression("y3", 2)

    def test_unknown_function_rejected(self):
        with pytest.raises(ParseError):
            parse_expression("sinh(t)", 1)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            parse_expression("log(y)", 1).evaluate(0.0, -1.0)
        with pytest.raises(DomainError):
            parse_expression("1/y", 1).evaluate(0.0, 0.0)
        with pytest.raises(DomainError):
            parse_expression("sqrt(y)", 1).evaluate(0.0, -4.0)


class TestDifferentiation:
    CASES = [
        ("sin(y*t)", "y1"),
        ("sin(y*t)", "t"),
        ("0.5 + sin(y*t)^2", "y1"),
        ("exp(-y^2/2) * cos(t)", "y1"),
        ("tanh(y) / (1 + y^2)", "y1"),
        ("sqrt(1 + y^2)", "y1"),
        ("(1 + y^2)^t", "t"),
        ("log(2 + cos(y))", "y1"),
    ]

    @pytest.mark.parametrize("source,var", CASES)
    def test_matches_central_difference(self, source, var):
        expr = parse_expression(source, 1)
        deriv = expr.differentiate(var)
        for t, y in [(0.3, 0.9), (0.8, -1.7), (0.0, 2.2)]:
            assert deriv.evaluate(t, y) == pytest.approx(
                numeric_partial(expr, var, t, [y]), rel=1e-7, abs=1e-9)

    def test_partial_of_absent_variable_is_zero(self):
        e = parse_expression("y1^2", 2)
        assert e.differentiate("y2").evaluate(0.0, [3.0, 5.0]) == 0.0

    def test_y_shorthand_in_differentiate(self):
        e = parse_expression("y^3", 1)
        assert e.differentiate("y").evaluate(0.0, 2.0) == pytest.approx(12.0)

    def test_invalid_variable_rejected(self):
        with pytest.raises(ValueError):
            parse_expression("y1", 2).differentiate("y5")


class TestExprObjects:
    def test_string_round_trip(self):
        for source in ["0.5 + sin(y*t)^2", "-(y + 1)/(2 - t)", "max(t, y^2)"]:
            e = parse_expression(source, 1)
            again = parse_expression(str(e), 1)
            for t, y in [(0.25, -0.8), (0.9, 1.4)]:
                assert again.evaluate(t, y) == pytest.approx(
                    e.evaluate(t, y), rel=1e-15)

    def test_operator_algebra(self):
        a = parse_expression("sin(y)", 1)
        b = parse_expression("cos(y)", 1)
        combo = 2.0 * a + b / 3.0 - a * b + a ** 2.0
        t, y = 0.0, 0.6
        sa, sb = np.sin(y), np.cos(y)
        assert combo.evaluate(t, y) == pytest.approx(
            2 * sa + sb / 3 - sa * sb + sa ** 2, rel=1e-14)

    def test_neg_and_rsub(self):
        a = parse_expression("y", 1)
        assert (-a).evaluate(0, 3.0) == -3.0
        assert (1.0 - a).evaluate(0, 3.0) == -2.0
        assert (6.0 / a).evaluate(0, 3.0) == 2.0

    def test_renamed_moves_factor_index(self):
        e = parse_expression("sin(y1)", 1)
        wide = e.renamed({"y1": "y2"})
        assert wide.dims >= 2
        assert wide.evaluate(0.0, [99.0, 0.5]) == pytest.approx(np.sin(0.5))

    def test_constant_helper(self):
        c = constant(4.25, 2)
        assert c.evaluate(1.0, [0.0, 0.0]) == 4.25
        assert c.differentiate("y1").evaluate(0, [0, 0]) == 0.0
