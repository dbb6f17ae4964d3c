#!/usr/bin/env python3
"""
Tests for the Dirichlet solver and the nested-domain experiment
Tests: residual/Jacobian -> initial guess -> damped Newton -> manufactured solutions -> nested domains
"""

import numpy as np
import pytest

from builder import build_entire_solution
from dirichlet import (STATUSES, PerturbationSpec, SolveConfig, assemble_residual, boundary_from_function,
                       initial_guess, jacobian_consistency, linearized_operator, newton_solve, probe_problem31,
                       radial_monge_ampere)
from errors import InvalidInputError, UnsupportedError
from expression_parser import parse_poly
from settings import AnalysisConfig
from transform import donaldson_transform_numeric, liouville_diagnostic
from verifier import GridField, ellipticity_check


def member(a, b, n):
    return build_entire_solution(a, parse_poly(b, n, with_t=False), n)


def interior_error(solution, exact, factor, coarse_shape):
    """Max |u_h - u| on the interior points of the coarsest grid"""
    index = tuple(slice(factor, factor * (s - 1), factor) for s in coarse_shape)
    return float(np.max(np.abs(solution.values[index] - exact.values[index])))


def tangent_removed(u, t0, x0, C=1.0):
    """Radial solution minus its tangent plane at (t0, x0); Q is unchanged by affine terms"""
    r0 = np.hypot(t0, x0)
    slope = np.sqrt(r0 * r0 + C) / r0
    u0 = float(u(t0, x0))

    def shifted(t, x):
        return u(t, x) - u0 - slope * t0 * (t - t0) - slope * x0 * (x - x0)

    return shifted


def test_residual_vanishes_on_exact_quadratic():
    u = GridField.sample(member("1/2", "x1", 2).u, [(0, 1)] * 3, (7, 7, 7))
    residual = assemble_residual(u)
    assert residual.shape == (5, 5, 5)
    assert np.max(np.abs(residual.values)) < 1e-10


def test_solver_rejects_three_spatial_dimensions():
    u = GridField.sample(member(1, "x1", 3).u, [(0, 1)] * 4, (5, 5, 5, 5))
    with pytest.raises(UnsupportedError):
        assemble_residual(u)


@pytest.mark.parametrize("n,shape", [(1, (9, 11)), (2, (7, 6, 8))])
def test_jacobian_matches_difference_quotients(n, shape):
    rng = np.random.default_rng(11)
    base = member(1, "x1", n).u
    u = GridField.sample(base, [(0, 1)] * (n + 1), shape)
    u = u.with_values(u.values + 1e-2 * rng.standard_normal(shape))
    check = jacobian_consistency(u, seed=5)
    assert check["order"] == "exact", check


def test_linearized_operator_is_elliptic_on_family():
    u = GridField.sample(member("1/2", "x1^2 - x2^2", 2).u, [(0, 1)] * 3, (9, 9, 9))
    op = linearized_operator(u)
    assert op.elliptic
    assert op.matrix.shape == (7 ** 3, 7 ** 3)


def test_solve_config_validation():
    with pytest.raises(InvalidInputError):
        SolveConfig(grid_shape=(4, 9))
    with pytest.raises(InvalidInputError):
        SolveConfig(shrink=1.5)
    with pytest.raises(InvalidInputError):
        SolveConfig(initial_margin_fraction=1.0)
    config = SolveConfig.from_analysis_config(AnalysisConfig(), (9, 9))
    assert config.grid_shape == (9, 9)
    assert config.tolerance == 1e-10
    assert config.initial_margin_fraction == 0.25


def test_initial_guess_is_elliptic():
    boundary = boundary_from_function(member(1, "x1", 1).u, [(0, 1), (0, 1)], (17, 17))
    guess, shift = initial_guess(boundary)
    assert shift >= 0
    assert ellipticity_check(guess).conditions["u_tt"]["positive"]
    assert ellipticity_check(guess).conditions["laplacian"]["positive"]
    assert np.array_equal(guess.values[0], boundary.values[0])


def test_initial_guess_starts_inside_the_cone_at_the_exact_shift():
    """For quadratic data the residual-minimising shift reproduces the exact solution"""
    sol = member("1/2", "x1", 1)
    box = [(0.0, 2.0), (0.0, 2.0)]
    guess, shift = initial_guess(boundary_from_function(sol.u, box, (33, 33)))
    assert shift == pytest.approx(1.5, abs=1e-6)
    check = ellipticity_check(guess)
    assert check.conditions["u_tt"]["min"] > 0.5
    assert check.conditions["laplacian"]["min"] > 0.5
    assert np.max(np.abs(guess.values - GridField.sample(sol.u, box, (33, 33)).values)) < 1e-5


def test_radial_manufactured_solution_converges_at_second_order():
    """n = 1 with the radial Monge-Ampere solution on [1,2]^2, grids 33, 65, 129"""
    exact_u = tangent_removed(radial_monge_ampere(1.0), 1.5, 1.5)
    box = [(1.0, 2.0), (1.0, 2.0)]
    shapes = [(33, 33), (65, 65), (129, 129)]
    errors = []
    for k, shape in enumerate(shapes):
        boundary = boundary_from_function(exact_u, box, shape)
        solution, report = newton_solve(boundary)
        assert report.converged, report.to_dict()
        assert report.iterations <= 10
        assert report.final_residual <= 1e-10
        errors.append(interior_error(solution, GridField.sample(exact_u, box, shape), 2 ** k, shapes[0]))
    for coarse, fine in zip(errors, errors[1:]):
        assert 3.5 <= coarse / fine <= 4.5, errors


def test_family_member_in_three_dimensions():
    """n = 2, b = x1^2 - x2^2 on [0,1]^3, grids 17 and 33"""
    u = member("1/2", "x1^2 - x2^2", 2).u
    box = [(0.0, 1.0)] * 3
    shapes = [(17, 17, 17), (33, 33, 33)]
    errors = []
    for k, shape in enumerate(shapes):
        config = SolveConfig(grid_shape=shape, direct=True)
        solution, report = newton_solve(boundary_from_function(u, box, shape), config)
        assert report.converged, report.to_dict()
        assert report.iterations <= 10
        errors.append(interior_error(solution, GridField.sample(u, box, shape), 2 ** k, shapes[0]))
    assert 3.5 <= errors[0] / errors[1] <= 4.5, errors


def test_krylov_path_agrees_with_direct():
    u = member("1/2", "x1", 2).u
    box = [(0.0, 1.0)] * 3
    boundary = boundary_from_function(u, box, (9, 9, 9))
    direct, _ = newton_solve(boundary, SolveConfig(grid_shape=(9, 9, 9), direct=True))
    krylov, report = newton_solve(boundary, SolveConfig(grid_shape=(9, 9, 9), direct=False))
    assert report.converged
    assert np.max(np.abs(direct.values - krylov.values)) < 1e-8


def test_zero_data_never_reports_false_convergence():
    boundary = GridField([(0, 1), (0, 1)], (9, 9), np.zeros((9, 9)))
    solution, report = newton_solve(boundary, SolveConfig(grid_shape=(9, 9), max_iterations=5))
    assert report.status in STATUSES
    if report.converged:
        assert report.final_residual <= 1e-10
        assert report.ellipticity_margin >= 1e-8


def test_solver_sourced_theta_passes_liouville():
    sol = member(2, "x1", 1)
    box = [(0.0, 1.0), (0.0, 1.0)]
    solution, report = newton_solve(boundary_from_function(sol.u, box, (33, 33)))
    assert report.converged
    theta = donaldson_transform_numeric(solution, workers=2, source="solver")
    verdict = liouville_diagnostic(theta)
    assert verdict.verdict == "consistent-with-constant"
    assert verdict.relative_variation <= 10 * solution.h ** 2
    assert verdict.tolerance == pytest.approx(10 * theta.h ** 2)


def test_nested_domains_without_perturbation():
    config = AnalysisConfig(probe_points_per_unit=8)
    report = probe_problem31(member(2, "x1", 1), PerturbationSpec(), [1.0, 2.0], config)
    assert report.complete
    assert [row.domain_size for row in report.rows] == [1.0, 2.0]
    for row in report.rows:
        assert row.osc_u_tt <= 10 * row.h ** 2


def test_nested_domains_with_perturbation_report_every_domain():
    config = AnalysisConfig(probe_points_per_unit=8)
    spec = PerturbationSpec(amplitude=1e-3, frequency=2.0)
    report = probe_problem31(member(2, "x1", 1), spec, [2.0, 1.0], config)
    assert [row.domain_size for row in report.rows] == [1.0, 2.0]
    assert all(row.status in STATUSES for row in report.rows)
    assert report.complete == all(row.status == "converged" for row in report.rows)
    assert len(report.csv_rows()) == 2
    assert report.to_dict()["perturbation"]["amplitude"] == 1e-3


def test_nested_domains_reject_bad_domains():
    with pytest.raises(InvalidInputError):
        probe_problem31(member(2, "x1", 1), PerturbationSpec(), [0.0, 1.0], AnalysisConfig())
    with pytest.raises(UnsupportedError):
        probe_problem31(member(1, "x1", 3), PerturbationSpec(), [1.0], AnalysisConfig())


@pytest.mark.parametrize("L", [1, 2, 4])
def test_family_data_solves_on_growing_boxes(L):
    """a = 1/2, b = x1 at 16 points per unit: the start is interior and Newton converges"""
    sol = member("1/2", "x1", 1)
    box = [(0.0, float(L)), (0.0, float(L))]
    shape = (16 * L + 1, 16 * L + 1)
    config = SolveConfig(grid_shape=shape)
    solution, report = newton_solve(boundary_from_function(sol.u, box, shape), config)
    assert report.initial_margin > 100 * config.ellipticity_floor
    assert report.converged
    assert report.iterations <= 10
    assert report.final_residual <= 1e-10
    assert report.ellipticity_margin >= config.ellipticity_floor
    exact = GridField.sample(sol.u, box, shape)
    assert interior_error(solution, exact, 1, shape) <= 1e-8


def test_nested_domains_converge_for_family_data():
    config = AnalysisConfig(probe_points_per_unit=16)
    report = probe_problem31(member("1/2", "x1", 1), PerturbationSpec(), [1.0, 2.0, 4.0], config)
    assert report.complete
    assert [row.status for row in report.rows] == ["converged"] * 3
    for row in report.rows:
        assert row.osc_u_tt <= 10 * row.h ** 2
