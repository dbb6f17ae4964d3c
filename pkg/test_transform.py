#!/usr/bin/env python3
"""
Tests for the Donaldson transform and its diagnostics
"""

from fractions import Fraction

import numpy as np
import pytest

from builder import build_entire_solution, solution_catalog
from errors import EllipticityViolationError, TransformDomainError, UnsupportedError
from expression_parser import parse_poly
from polycore import laplacian
from transform import (TransformResult, completeness_diagnostic, donaldson_transform_numeric,
                       donaldson_transform_symbolic, harmonicity_residual, invert_monotone, liouville_diagnostic)
from verifier import GridField


def member(a, b, n):
    return build_entire_solution(a, parse_poly(b, n, with_t=False), n)


def test_symbolic_transform_examples():
    result = donaldson_transform_symbolic(member("1/2", "0", 2))
    assert result.theta == parse_poly("t", 2)  # slot 0 holds z
    assert result.dtheta_dz == 1

    result = donaldson_transform_symbolic(member("1/2", "x1^2 - x2^2", 2))
    assert result.theta == parse_poly("t - x1^2 + x2^2", 2)
    assert laplacian(result.theta, range(3)).is_zero
    assert all(result.identities.values())


def test_symbolic_transform_over_catalog():
    for entry in solution_catalog(4):
        sol = entry.build()
        result = donaldson_transform_symbolic(sol)
        assert result.dtheta_dz == 1 / (2 * sol.a), entry.label
        assert harmonicity_residual(result).exact_residual.is_zero, entry.label
        assert result.dtheta_dz_stats["variance"] == 0.0


def test_symbolic_transform_rejects_non_constant_utt():
    with pytest.raises(UnsupportedError):
        donaldson_transform_symbolic(parse_poly("t^4 + x1^2", 1))


def test_invert_monotone_recovers_roots():
    t = np.linspace(0.0, 2.0, 201)
    values = np.exp(t)
    targets = np.linspace(1.1, 7.0, 25)
    roots = invert_monotone(t, values, targets, tol=1e-13)
    assert np.max(np.abs(roots - np.log(targets))) < 1e-4


def test_numeric_transform_matches_symbolic():
    """b = x1 member on [0,1]^2 at h = 1/64"""
    sol = member(2, "x1", 1)
    field = GridField.sample(sol.u, [(0, 1), (0, 1)], (65, 65))
    result = donaldson_transform_numeric(field, workers=2)
    z, x = result.theta.mesh()
    exact = (z - x) / 4
    assert np.max(np.abs(result.theta.values - exact)) <= 1e-3
    assert result.dtheta_dz_stats["min"] > 0
    assert result.z_range == pytest.approx((1.0, 4.0))
    assert result.identity_residual < 1e-8


def test_numeric_harmonicity_refines_at_second_order():
    sol = member(Fraction(1, 2), "x1^4 - 6*x1^2*x2^2 + x2^4", 2)
    box = [(0, 1), (0, 0.5), (0, 0.5)]
    residuals = []
    for shape in [(17, 17, 17), (33, 33, 33)]:
        result = donaldson_transform_numeric(GridField.sample(sol.u, box, shape), workers=2)
        residuals.append(harmonicity_residual(result).max_abs)
    assert 3.5 <= residuals[0] / residuals[1] <= 4.5


def test_numeric_transform_rejects_non_convex_columns():
    field = GridField.sample(parse_poly("-t^2 + x1^2", 1), [(0, 1), (0, 1)], (9, 9))
    with pytest.raises(EllipticityViolationError):
        donaldson_transform_numeric(field, workers=1)


def test_numeric_transform_empty_z_range():
    sol = member("1/2", "x1", 1)
    field = GridField.sample(sol.u, [(0, 1), (0, 10)], (9, 9))
    with pytest.raises(TransformDomainError):
        donaldson_transform_numeric(field, workers=1)


def test_liouville_constant_for_family():
    result = donaldson_transform_symbolic(member(3, "x1*x2", 2))
    verdict = liouville_diagnostic(result)
    assert verdict.verdict == "consistent-with-constant"
    assert verdict.relative_variation == 0.0
    assert "not a theorem" in verdict.note


def test_liouville_flags_synthetic_control():
    theta = GridField.sample(lambda z, x: z + 0.25 * z ** 2 + x, [(0, 1), (0, 1)], (17, 17))
    verdict = liouville_diagnostic(TransformResult.from_theta_field(theta))
    assert verdict.verdict == "non-constant on window"
    assert verdict.source == "synthetic"


def test_liouville_flags_positivity_violation():
    theta = GridField.sample(lambda z, x: -z + 0 * x, [(0, 1), (0, 1)], (9, 9))
    verdict = liouville_diagnostic(TransformResult.from_theta_field(theta))
    assert verdict.verdict == "positivity-violated"


def test_completeness_of_family_member():
    verdicts = completeness_diagnostic(member("1/2", "x1", 2))
    assert [v.direction for v in verdicts] == ["+t", "-t"]
    for v in verdicts:
        assert v.verdict == "diverging"
        assert v.exponent == pytest.approx(1.0, abs=1e-6)
        assert all(a <= b for a, b in zip(v.window_integrals, v.window_integrals[1:]))


def test_completeness_of_decaying_metric():
    verdicts = completeness_diagnostic(lambda t: np.exp(-t * t))
    assert all(v.verdict == "bounded-on-window" for v in verdicts)


def test_completeness_on_grid_drops_long_windows():
    u = member("1/2", "x1", 1).u
    field = GridField.sample(u, [(-4, 4), (0, 1)], (81, 5))
    verdicts = completeness_diagnostic(field, windows=[1, 2, 4, 8])
    for v in verdicts:
        assert v.windows == [1.0, 2.0, 4.0]
        assert v.window_integrals[-1] == pytest.approx(4.0, rel=1e-6)
