#!/usr/bin/env python3
"""
Tests for the complex Monge-Ampere side (n = 2)
Tests: family certification -> real bridge -> complex Hessian -> curvature spot checks
"""

import numpy as np
import pytest

from builder import solution_catalog
from complexify import (BiPoly, build_cma_solution, cma_catalog, complex_hessian, complex_hessian_determinant,
                        conjugation_residual, curvature_spot_check, curvature_tensor, invert_ddbar,
                        real_to_complex_bridge, s_independent_extension)
from errors import ConstraintViolationError, InvalidInputError, UnsupportedError
from expression_parser import parse_bipoly, parse_poly

CONSTANT_HESSIAN = ("flat-a1", "wb-a1", "w-a1", "w-plus-wb-a1", "gauss-wb-a1", "wb-f-linear-a1", "w-f-imaginary-a1/2")


def test_wirtinger_derivatives():
    v = parse_bipoly("z^2*zb + w*wb^3")
    assert v.wirtinger("z") == parse_bipoly("2*z*zb")
    assert v.wirtinger("wb", 2) == parse_bipoly("6*w*wb")
    assert parse_bipoly("z*zb").conjugate() == parse_bipoly("z*zb")
    assert parse_bipoly("I*w").conjugate() == parse_bipoly("-I*wb")


def test_catalog_determinant_is_one():
    catalog = cma_catalog()
    assert len(catalog) >= 10
    for entry in catalog:
        member = entry.build()
        assert complex_hessian_determinant(member.v) == BiPoly.constant(1), entry.label
        assert conjugation_residual(member.v).is_zero, entry.label
        assert member.v.is_real, entry.label
        assert member.b.degree <= 3


def test_invert_ddbar():
    h = parse_bipoly("1 + 4*w*wb")
    g = invert_ddbar(h)
    assert g == parse_bipoly("w*wb + (w*wb)^2")
    with pytest.raises(InvalidInputError):
        invert_ddbar(parse_bipoly("z"))


def test_build_cma_errors():
    with pytest.raises(InvalidInputError, match="invalid-parameter"):
        build_cma_solution(0, parse_bipoly("wb"))
    with pytest.raises(InvalidInputError):
        build_cma_solution(1, parse_bipoly("z*wb"))
    with pytest.raises(ConstraintViolationError):
        build_cma_solution(1, parse_bipoly("w*wb"))
    with pytest.raises(ConstraintViolationError):
        build_cma_solution(1, parse_bipoly("wb"), parse_bipoly("z*zb"))
    with pytest.raises(ConstraintViolationError):
        build_cma_solution(1, parse_bipoly("wb"), parse_bipoly("I*z"))


def test_bridge_identity_for_real_members():
    members = [entry.build() for entry in solution_catalog(4) if entry.n == 2]
    assert len(members) >= 5
    for sol in members[:6]:
        report = real_to_complex_bridge(sol.u, samples=40, seed=7, workers=2)
        assert report.symbolic_identity, report.symbolic_residual
        assert report.passed
        assert report.max_component_errors["v_zzbar"] <= 1e-12


def test_bridge_extension_is_s_independent():
    u = parse_poly("t^2/2 + t*x1 + (x1^2 + x2^2)/2", 2)
    v = s_independent_extension(u)
    assert v.is_real
    # v depends on z only through z + zb
    assert v.wirtinger("z") == v.wirtinger("zb")


def test_bridge_requires_two_spatial_variables():
    with pytest.raises(UnsupportedError):
        s_independent_extension(parse_poly("t^2/2 + t*x1 + x1^2", 1))


def test_complex_hessian_at_point():
    member = build_cma_solution(1, parse_bipoly("wb"))
    form = complex_hessian(member.v, (0.3 + 0.1j, -0.2 + 0.5j))
    assert form.positive_definite
    assert form.determinant == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(form.matrix(), form.matrix().conj().T)


def test_flat_members_have_vanishing_curvature():
    rng = np.random.default_rng(3)
    members = {entry.label: entry.build() for entry in cma_catalog() if entry.label in CONSTANT_HESSIAN}
    assert len(members) == len(CONSTANT_HESSIAN)
    points = rng.uniform(-1, 1, size=(20, 4))
    for label, member in members.items():
        for p in points:
            value = curvature_spot_check(member.v, (complex(p[0], p[1]), complex(p[2], p[3])), h=1e-2)
            assert value <= 1e-6, f"{label} at {p}: {value}"


def test_non_flat_control_is_detected():
    v = parse_bipoly("(z*zb)^2/2 + z*zb + w*wb")
    assert curvature_spot_check(v, (1 + 0j, 0j), h=1e-2) > 1e-2
    R = curvature_tensor(v, (1 + 0j, 0j), h=1e-2)
    assert R[0, 0, 0, 0].real == pytest.approx(-2 / 3, abs=1e-3)


def test_curvature_rejects_non_positive_point():
    with pytest.raises(InvalidInputError, match="invalid-point"):
        curvature_spot_check(parse_bipoly("-z*zb - w*wb"), (0j, 0j))
