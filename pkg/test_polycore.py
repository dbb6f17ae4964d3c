#!/usr/bin/env python3
"""
Tests for the exact polynomial core and the expression parser
Tests: arithmetic -> differential operators -> harmonic bases -> Laplacian inversion
"""

from fractions import Fraction

import pytest

from errors import InvalidInputError
from expression_parser import infer_dimension, parse_bipoly, parse_poly, parse_rational
from polycore import (ExactPoly, exact_rank, gradient_norm_sq, harmonic_basis, harmonic_dimension,
                      homogeneous_decomposition, invert_laplacian, is_homogeneous, laplacian)


def spatial(text, n):
    return parse_poly(text, n, with_t=False)


def test_laplacian_examples():
    """Laplacian of squares, a cubic harmonic and a quartic"""
    assert laplacian(spatial("x1^2 + x2^2", 2)) == 4
    assert laplacian(spatial("x1^3 - 3*x1*x2^2", 2)).is_zero
    assert laplacian(spatial("x1^4", 2)) == spatial("12*x1^2", 2)


def test_laplacian_skips_t():
    u = parse_poly("t^3 + t*x1^2", 1)
    assert laplacian(u) == parse_poly("2*t", 1)


def test_laplacian_rejects_unknown_variable():
    with pytest.raises(InvalidInputError):
        laplacian(spatial("x1^2", 2), [0, 5])


def test_gradient_norm_sq_examples():
    assert gradient_norm_sq(spatial("x1", 2)) == 1
    assert gradient_norm_sq(spatial("x1^2 - x2^2", 2)) == spatial("4*x1^2 + 4*x2^2", 2)
    assert gradient_norm_sq(ExactPoly.zero(2)).is_zero


def test_arithmetic_stays_exact():
    p = spatial("x1/3 + 1/7", 1)
    q = p * p - p / 3
    assert q.terms[(2,)] == Fraction(1, 9)
    assert q.terms[(0,)] == Fraction(1, 49) - Fraction(1, 21)
    assert all(isinstance(c, Fraction) for c in q.terms.values())


def test_float_coefficients_rejected():
    with pytest.raises(InvalidInputError):
        ExactPoly(1, {(1,): 0.5})


def test_zero_terms_are_pruned():
    p = spatial("x1 + x2", 2) - spatial("x2", 2)
    assert set(p.terms) == {(1, 0)}


def test_laplacian_is_linear():
    p = spatial("x1^3*x2 + 5*x2^2", 2)
    q = spatial("x1^4 - x2^3/2", 2)
    assert laplacian(p + q) == laplacian(p) + laplacian(q)


def test_homogeneous_decomposition_recombines():
    p = spatial("1 + x1 - x2^2 + x1*x2^3 + 3*x1^4", 2)
    decomposition = homogeneous_decomposition(p)
    assert decomposition.degrees == [0, 1, 2, 4]
    assert decomposition.recombine() == p
    for degree, part in decomposition.parts:
        assert is_homogeneous(part, degree)


@pytest.mark.parametrize("n,d,dim", [(2, 0, 1), (2, 1, 2), (2, 2, 2), (2, 4, 2), (3, 2, 5), (3, 3, 7), (1, 3, 0)])
def test_harmonic_basis_dimension(n, d, dim):
    basis = harmonic_basis(n, d)
    assert len(basis) == dim == harmonic_dimension(n, d)
    assert exact_rank(basis) == dim, "Basis elements must be linearly independent"
    for p in basis:
        assert laplacian(p).is_zero
        assert is_homogeneous(p, d)


def test_harmonic_basis_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        harmonic_basis(0, 2)
    with pytest.raises(InvalidInputError):
        harmonic_basis(2, -1)


def test_invert_laplacian_examples():
    assert invert_laplacian(ExactPoly.constant(1, 2)) == spatial("(x1^2 + x2^2)/4", 2)
    assert invert_laplacian(spatial("x1", 1)) == spatial("x1^3/6", 1)


def test_invert_laplacian_round_trip():
    h = spatial("4*x1^2 + 4*x2^2", 2)
    g = invert_laplacian(h)
    assert (laplacian(g) - h).is_zero

    h3 = spatial("1 + x1*x2*x3 - 7/2*x3^4 + x1^2", 3)
    assert laplacian(invert_laplacian(h3)) == h3


def test_invert_laplacian_is_deterministic():
    h = spatial("x1^3 - x2 + 2", 2)
    assert invert_laplacian(h) == invert_laplacian(h)
    assert invert_laplacian(ExactPoly.zero(2)).is_zero


def test_invert_laplacian_rejects_t_dependence():
    with pytest.raises(InvalidInputError):
        invert_laplacian(parse_poly("t*x1", 1))


def test_substitute_and_t_layout():
    u = parse_poly("t^2 + t*x1 + x1^2", 1)
    x = ExactPoly.variable(1, 2, has_t=True)
    t = ExactPoly.variable(0, 2, has_t=True)
    swapped = u.substitute([x, t])
    assert swapped == parse_poly("x1^2 + t*x1 + t^2", 1)
    assert u.coefficient_in_t(1) == spatial("x1", 1)
    assert spatial("x1^2", 1).lift_t().drop_t() == spatial("x1^2", 1)


def test_dict_serialization_uses_strings():
    p = spatial("x1^2/3 - 12345678901234567890*x2", 2)
    data = p.to_dict()
    assert all(isinstance(term["num"], str) and isinstance(term["den"], str) for term in data["terms"])
    assert ExactPoly.from_dict(data) == p


def test_to_callable_matches_exact_evaluation():
    p = parse_poly("t^2/2 + t*x1 - x1^3/3", 1)
    f = p.to_callable()
    assert f(0.5, 2.0) == pytest.approx(float(p.evaluate([Fraction(1, 2), Fraction(2)])), abs=1e-15)


def test_parser_helpers():
    assert parse_rational("3/4") == Fraction(3, 4)
    assert parse_rational("-2") == Fraction(-2)
    with pytest.raises(InvalidInputError):
        parse_rational("0.75")
    assert infer_dimension("x1 + x3", "x2") == 3
    with pytest.raises(InvalidInputError):
        parse_poly("y^2", 1)
    with pytest.raises(InvalidInputError):
        parse_poly("sin(x1)", 1)


def test_parser_rejects_decimal_literals():
    """Coefficients must be exact: 0.1 is refused rather than rounded to 1/10"""
    with pytest.raises(InvalidInputError, match="p/q"):
        parse_poly("0.1*x1", 1)
    with pytest.raises(InvalidInputError):
        parse_poly("t^2/2 + 1.5*x1^2", 1)
    with pytest.raises(InvalidInputError):
        parse_bipoly("0.5*w*wb")
    assert parse_poly("x1/10", 1) == ExactPoly(2, {(0, 1): Fraction(1, 10)}, has_t=True)


def test_parse_bipoly_imaginary_unit():
    v = parse_bipoly("I*z - I*zb")
    assert v.is_real
    assert not parse_bipoly("I*z").is_real
