#!/usr/bin/env python3
"""
Tests for the entire-solution builder
Tests: construction -> certification -> g = b^2/4a + f split -> catalog -> bundles
"""

from fractions import Fraction

import pytest

from builder import (build_entire_solution, classify_constant_utt, solution_catalog, solution_from_bundle,
                     solution_to_bundle, split_g)
from errors import ConstraintViolationError, InvalidInputError, UnsupportedError
from expression_parser import parse_poly
from polycore import ExactPoly, harmonic_basis, laplacian
from verifier import q_operator_symbolic


def spatial(text, n):
    return parse_poly(text, n, with_t=False)


def test_build_with_zero_b():
    sol = build_entire_solution(Fraction(1, 2), ExactPoly.zero(2), 2)
    assert sol.u == parse_poly("t^2/2 + (x1^2 + x2^2)/4", 2)
    assert q_operator_symbolic(sol.u) == 1


def test_build_with_linear_b():
    sol = build_entire_solution("1/2", spatial("x1", 2), 2)
    assert sol.u == parse_poly("t^2/2 + t*x1 + (x1^2 + x2^2)/2", 2)
    assert sol.u.derivative(0, 2) == 1
    assert laplacian(sol.u) == 2


def test_build_with_quadratic_b():
    sol = build_entire_solution(Fraction(1, 2), spatial("x1^2 - x2^2", 2), 2)
    assert laplacian(sol.g) == spatial("1 + 4*x1^2 + 4*x2^2", 2)
    assert sol.q_residual().is_zero


def test_one_dimensional_member():
    sol = build_entire_solution(Fraction(1, 2), spatial("x1", 1), 1)
    assert sol.u == parse_poly("t^2/2 + t*x1 + x1^2", 1)


@pytest.mark.parametrize("a", [0, -1, Fraction(-1, 3)])
def test_non_positive_a_rejected(a):
    with pytest.raises(InvalidInputError, match="invalid-parameter"):
        build_entire_solution(a, spatial("x1", 2), 2)


def test_non_harmonic_b_reports_residual():
    with pytest.raises(ConstraintViolationError) as info:
        build_entire_solution(1, spatial("x1^2 + x2^2", 2), 2)
    assert info.value.residual == 4
    assert info.value.to_dict()["residual"] == "4"


def test_non_harmonic_extra_rejected():
    with pytest.raises(ConstraintViolationError):
        build_entire_solution(1, spatial("x1", 2), 2, harmonic_extra=spatial("x1^2", 2))


def test_split_g_examples():
    f, lap_f = split_g(build_entire_solution(Fraction(1, 2), ExactPoly.zero(2), 2))
    assert lap_f == 1
    _, lap_f = split_g(build_entire_solution(1, ExactPoly.zero(2), 2))
    assert lap_f == Fraction(1, 2)
    f, lap_f = split_g(build_entire_solution(Fraction(1, 2), spatial("x1", 2), 2))
    assert f == spatial("x2^2/2", 2)
    assert lap_f == 1


def test_harmonic_extra_leaves_q_unchanged():
    b = spatial("x1*x2", 2)
    base = build_entire_solution(Fraction(3, 2), b, 2)
    for extra in harmonic_basis(2, 3) + harmonic_basis(2, 5):
        sol = build_entire_solution(Fraction(3, 2), b, 2, harmonic_extra=extra)
        assert sol.g == base.g + extra
        assert q_operator_symbolic(sol.u) == 1


def test_catalog_certifies_every_member():
    """Every catalog member satisfies Q(D^2u) = 1 exactly and laplacian(f) = 1/2a"""
    catalog = solution_catalog(4)
    assert len(catalog) >= 20
    assert {entry.n for entry in catalog} == {1, 2, 3}
    assert any(entry.harmonic_extra is not None for entry in catalog)
    assert max(entry.b.degree for entry in catalog) == 4
    for entry in catalog:
        sol = entry.build()
        assert q_operator_symbolic(sol.u) == 1, f"{entry.label} fails the identity"
        f, lap_f = split_g(sol)
        assert lap_f * 2 * sol.a == 1, f"{entry.label}: laplacian(f) = {lap_f}"
        assert sol.g == sol.b * sol.b / (4 * sol.a) + f


def test_classify_constant_utt():
    sol = build_entire_solution(2, spatial("x1^3 - 3*x1*x2^2", 2), 2)
    recovered = classify_constant_utt(sol.u)
    assert recovered.a == 2
    assert recovered.b == sol.b
    with pytest.raises(UnsupportedError):
        classify_constant_utt(parse_poly("t^4 + x1^2", 1))
    with pytest.raises(ConstraintViolationError):
        classify_constant_utt(parse_poly("t^2/2 + t*x1^2 + x1^2", 1))


def test_bundle_round_trip_and_tampering():
    sol = build_entire_solution(Fraction(1, 2), spatial("x1^2 - x2^2", 2), 2)
    data = solution_to_bundle(sol)
    assert data["a"] == "1/2"
    loaded = solution_from_bundle(data)
    assert loaded.u == sol.u and loaded.g == sol.g

    tampered = dict(data, u=(sol.u + parse_poly("x1^2", 2)).to_dict())
    with pytest.raises(ConstraintViolationError) as info:
        solution_from_bundle(tampered)
    assert info.value.residual is not None

    with pytest.raises(InvalidInputError):
        solution_from_bundle({"n": 2, "a": "1/2"})
