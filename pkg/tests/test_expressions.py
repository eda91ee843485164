import numpy as np
import pytest

from abreulab.expressions import ExprError, parse_expression


def fd_grad(e, x1, x2, eps=1e-6):
    return ((e(x1 + eps, x2) - e(x1 - eps, x2)) / (2 * eps),
            (e(x1, x2 + eps) - e(x1, x2 - eps)) / (2 * eps))


def test_literal_and_vars():
    e = parse_expression("2.5")
    assert e(0.0, 0.0) == 2.5
    assert parse_expression("x1")(3.0, 7.0) == 3.0
    assert parse_expression("x2")(3.0, 7.0) == 7.0


def test_arithmetic_oracle():
    e = parse_expression("(x1 + 2*x2)^2 - x1/x2")
    # oracle evaluated by hand: (1 + 2*3)^2 - 1/3 = 49 - 1/3
    assert e(1.0, 3.0) == pytest.approx(49.0 - 1.0 / 3.0, rel=1e-15)


def test_precedence_and_unary_minus():
    assert parse_expression("-x1^2")(2.0, 0.0) == -4.0
    assert parse_expression("2 + 3 * 4")(0.0, 0.0) == 14.0
    assert parse_expression("2 * x1 ^ 3")(2.0, 0.0) == 16.0


def test_negative_exponent():
    e = parse_expression("x1^-2")
    assert e(2.0, 0.0) == pytest.approx(0.25, rel=1e-15)


def test_exp_and_derivatives():
    e = parse_expression("exp(x1) + exp(x2)")
    assert e(0.0, 0.0) == 2.0
    g1, g2 = e.grad(1.0, 2.0)
    assert g1 == pytest.approx(np.e, rel=1e-15)
    assert g2 == pytest.approx(np.e ** 2, rel=1e-15)
    h11, h12, h22 = e.hess(1.0, 2.0)
    assert h11 == pytest.approx(np.e, rel=1e-15)
    assert h12 == 0.0
    assert h22 == pytest.approx(np.e ** 2, rel=1e-15)


@pytest.mark.parametrize("text", [
    "x1^2 + x2^2",
    "exp(x1 + x2)",
    "(x1 - 0.5)^3 * x2",
    "x1 * x2 + exp(-x1)",
    "1 / (x1 + 3)",
])
def test_symbolic_gradient_matches_finite_differences(text):
    e = parse_expression(text)
    rng = np.random.default_rng(7)
    for _ in range(5):
        x1, x2 = rng.uniform(0.3, 1.2, size=2)
        g1, g2 = e.grad(x1, x2)
        n1, n2 = fd_grad(e, x1, x2)
        assert g1 == pytest.approx(n1, rel=2e-8, abs=2e-8)
        assert g2 == pytest.approx(n2, rel=2e-8, abs=2e-8)


def test_vectorized_evaluation():
    e = parse_expression("x1^2 - x2")
    x = np.array([1.0, 2.0])
    y = np.array([0.5, 1.0])
    np.testing.assert_allclose(e(x, y), [0.5, 3.0])


def test_error_unknown_identifier_has_position():
    with pytest.raises(ExprError, match="column 6"):
        parse_expression("x1 + sin(x2)")


def test_error_trailing_input():
    with pytest.raises(ExprError, match="trailing"):
        parse_expression("x1 x2")


def test_error_non_integer_exponent():
    with pytest.raises(ExprError, match="integer"):
        parse_expression("x1^0.5")


def test_error_unbalanced_paren():
    with pytest.raises(ExprError):
        parse_expression("(x1 + x2")
