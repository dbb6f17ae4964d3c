# ----------------------------------------------------------------------
#  Dirichlet Solver
#
#  Damped Newton for the discrete equation Q(D^2u) = 1 on boxes in
#  (t, x1) or (t, x1, x2) with full Dirichlet data:
#  1. Residual and sparse Jacobian assembly on interior unknowns
#  2. Elliptic initial guess (harmonic extension plus a t^2 correction)
#  3. Backtracking line search with a barrier on the elliptic cone
#  4. Nested-domain experiment on the u_tt oscillation
# ----------------------------------------------------------------------

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import LinearOperator, gmres, spsolve

from builder import EntireSolution
from errors import InvalidInputError, UnsupportedError
from polycore import ExactPoly
from settings import AnalysisConfig
from verifier import MIN_POINTS, GridField, mixed_difference, second_difference

logger = logging.getLogger(__name__)

PROBE_CSV_HEADER = ("domain_size", "h", "osc_u_tt", "status")
STATUSES = ("converged", "stalled", "ellipticity-breakdown", "max-iterations")
KRYLOV_RESTART = 100


@dataclass
class SolveConfig:
    grid_shape: Tuple[int, ...] = (33, 33)
    tolerance: float = 1e-10
    max_iterations: int = 30
    shrink: float = 0.5
    max_backtracks: int = 30
    linear_tolerance_factor: float = 1e-2
    linear_tolerance_floor: float = 1e-13
    krylov_max_iterations: int = 2000
    ellipticity_floor: float = 1e-8
    initial_margin_fraction: float = 0.25
    direct: Optional[bool] = None  # None: direct for n = 1, Krylov for n = 2

    def __post_init__(self):
        self.grid_shape = tuple(int(s) for s in self.grid_shape)
        if any(s < MIN_POINTS for s in self.grid_shape):
            raise InvalidInputError(f"Solver grids need >= {MIN_POINTS} points per axis, got {self.grid_shape}")
        positive = {
            "tolerance": self.tolerance,
            "linear_tolerance_factor": self.linear_tolerance_factor,
            "linear_tolerance_floor": self.linear_tolerance_floor,
            "ellipticity_floor": self.ellipticity_floor,
        }
        bad = [k for k, v in positive.items() if not v > 0]
        if bad:
            raise InvalidInputError(f"Solver tolerances must be positive: {bad}")
        if not 0 < self.shrink < 1:
            raise InvalidInputError(f"Line-search shrink must lie in (0, 1), got {self.shrink}")
        if not 0 < self.initial_margin_fraction < 1:
            raise InvalidInputError(f"Initial margin fraction must lie in (0, 1), got {self.initial_margin_fraction}")
        if self.max_iterations < 1 or self.max_backtracks < 1:
            raise InvalidInputError("Iteration caps must be >= 1")

    @classmethod
    def from_analysis_config(cls, config: AnalysisConfig, grid_shape: Optional[Sequence[int]] = None) -> "SolveConfig":
        return cls(
            grid_shape=tuple(grid_shape or config.grid_shape),
            tolerance=config.newton_tolerance,
            max_iterations=config.max_newton_iterations,
            shrink=config.line_search_shrink,
            max_backtracks=config.max_backtracks,
            linear_tolerance_factor=config.linear_tolerance_factor,
            linear_tolerance_floor=config.linear_tolerance_floor,
            krylov_max_iterations=config.krylov_max_iterations,
            ellipticity_floor=config.ellipticity_floor,
            initial_margin_fraction=config.initial_margin_fraction,
        )


@dataclass
class SolveReport:
    status: str = "max-iterations"
    residual_norms: List[float] = field(default_factory=list)
    step_sizes: List[float] = field(default_factory=list)
    krylov_iterations: List[int] = field(default_factory=list)
    fallbacks: int = 0
    final_residual: float = float("inf")
    ellipticity_margin: float = float("-inf")
    initial_shift: float = 0.0
    initial_margin: float = 0.0
    shape: Tuple[int, ...] = ()

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def iterations(self) -> int:
        return len(self.step_sizes)

    def to_dict(self) -> Dict:
        return {
            "status": self.status,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_norms": self.residual_norms,
            "step_sizes": self.step_sizes,
            "krylov_iterations": self.krylov_iterations,
            "fallbacks": self.fallbacks,
            "final_residual": self.final_residual,
            "ellipticity_margin": self.ellipticity_margin,
            "initial_shift": self.initial_shift,
            "initial_margin": self.initial_margin,
            "shape": list(self.shape),
        }


# ----------------------------------------------------------------------
# Discrete operators
# ----------------------------------------------------------------------

def _parts(values: np.ndarray, spacing: Sequence[float]):
    u_tt = second_difference(values, spacing, 0)
    lap = sum(second_difference(values, spacing, i) for i in range(1, values.ndim))
    mixed = [mixed_difference(values, spacing, 0, i) for i in range(1, values.ndim)]
    return u_tt, lap, mixed


def _residual(values: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    u_tt, lap, mixed = _parts(values, spacing)
    return u_tt * lap - sum(m * m for m in mixed) - 1.0


def _margin(values: np.ndarray, spacing: Sequence[float]) -> float:
    u_tt, lap, _ = _parts(values, spacing)
    return float(min(u_tt.min(), lap.min()))


def _interior_box(u: GridField) -> List[Tuple[float, float]]:
    return [(lo + h, hi - h) for (lo, hi), h in zip(u.box, u.spacing)]


def _check_grid(u: GridField) -> None:
    u.require_stencil()
    if u.ndim not in (2, 3):
        raise UnsupportedError(f"The Dirichlet solver covers n = 1 and n = 2, got n = {u.ndim - 1}")


def assemble_residual(u: GridField) -> GridField:
    """Discrete u_tt * lap(u) - |grad u_t|^2 - 1 on the interior points."""
    _check_grid(u)
    residual = _residual(u.values, u.spacing)
    return GridField(_interior_box(u), residual.shape, residual)


def _stencil_block(shape: Tuple[int, ...], offset: Sequence[int], coeff: np.ndarray):
    """COO triplets coupling each interior unknown to its neighbour at `offset`; boundary neighbours drop out."""
    idx = np.indices(shape).reshape(len(shape), -1)
    nb = idx + np.asarray(offset)[:, None]
    valid = np.all((nb >= 0) & (nb < np.asarray(shape)[:, None]), axis=0)
    rows = np.ravel_multi_index(tuple(idx[:, valid]), shape)
    cols = np.ravel_multi_index(tuple(nb[:, valid]), shape)
    data = np.broadcast_to(coeff, shape).reshape(-1)[valid]
    return rows, cols, data


def _assemble(shape: Tuple[int, ...], terms: List[Tuple[Sequence[int], np.ndarray]]) -> sp.csr_matrix:
    size = int(np.prod(shape))
    blocks = [_stencil_block(shape, off, coeff) for off, coeff in terms]
    rows = np.concatenate([b[0] for b in blocks])
    cols = np.concatenate([b[1] for b in blocks])
    data = np.concatenate([b[2] for b in blocks])
    return sp.coo_matrix((data, (rows, cols)), shape=(size, size)).tocsr()


def _second_difference_terms(ndim: int, axis: int, coeff, h: float):
    plus, minus = [0] * ndim, [0] * ndim
    plus[axis], minus[axis] = 1, -1
    return [(plus, coeff / h ** 2), ([0] * ndim, -2 * coeff / h ** 2), (minus, coeff / h ** 2)]


def laplace_matrix(shape: Tuple[int, ...], spacing: Sequence[float]) -> sp.csr_matrix:
    """Standard second-difference Laplacian in every axis on interior unknowns."""
    ones = np.ones(shape)
    terms = []
    for axis in range(len(shape)):
        terms.extend(_second_difference_terms(len(shape), axis, ones, spacing[axis]))
    return _assemble(shape, terms)


@dataclass
class LinearizedOperator:
    matrix: sp.csr_matrix
    interior_shape: Tuple[int, ...]
    min_u_tt: float
    min_laplacian: float

    @property
    def elliptic(self) -> bool:
        return self.min_u_tt > 0 and self.min_laplacian > 0

    def apply(self, phi: np.ndarray) -> np.ndarray:
        return (self.matrix @ np.asarray(phi).reshape(-1)).reshape(self.interior_shape)


def linearized_operator(u: GridField) -> LinearizedOperator:
    """
    L[phi] = lap(u) phi_tt + u_tt lap(phi) - 2 grad(u_t) . grad(phi_t)
    on interior unknowns with phi = 0 on the boundary.
    """
    _check_grid(u)
    values, spacing = u.values, u.spacing
    u_tt, lap, mixed = _parts(values, spacing)
    ndim = values.ndim
    shape = u_tt.shape

    terms = _second_difference_terms(ndim, 0, lap, spacing[0])
    for i in range(1, ndim):
        terms.extend(_second_difference_terms(ndim, i, u_tt, spacing[i]))
        weight = -2 * mixed[i - 1] / (4 * spacing[0] * spacing[i])
        for s0, si in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            off = [0] * ndim
            off[0], off[i] = s0, si
            terms.append((off, s0 * si * weight))
    op = LinearizedOperator(_assemble(shape, terms), shape, float(u_tt.min()), float(lap.min()))
    if not op.elliptic:
        logger.debug(f"Linearization assembled at a non-elliptic state (min u_tt {op.min_u_tt:.3e}, min lap {op.min_laplacian:.3e})")
    return op


def jacobian_consistency(u: GridField, phi: Optional[np.ndarray] = None,
                         steps: Sequence[float] = (1e-1, 5e-2, 2.5e-2), seed: int = 0,
                         tolerance: float = 1e-8) -> Dict:
    """
    Compare L[phi] with (R(u + s phi) - R(u - s phi)) / 2s for shrinking s.

    The discrete residual is quadratic in u, so the difference quotient is
    exact and the errors sit at roundoff ("exact"); otherwise the fitted
    order is reported.
    """
    op = linearized_operator(u)
    if phi is None:
        phi = np.random.default_rng(seed).standard_normal(op.interior_shape)
    phi = np.asarray(phi, dtype=float).reshape(op.interior_shape)
    padded = np.zeros(u.shape)
    padded[(slice(1, -1),) * u.ndim] = phi
    lin = op.apply(phi)
    scale = 1.0 + float(np.max(np.abs(lin)))
    errors = []
    for s in steps:
        quotient = (_residual(u.values + s * padded, u.spacing) - _residual(u.values - s * padded, u.spacing)) / (2 * s)
        errors.append(float(np.max(np.abs(quotient - lin))))
    if all(e <= tolerance * scale for e in errors):
        order: Union[float, str] = "exact"
    else:
        logs = np.log(np.maximum(errors, np.finfo(float).tiny))
        order = float(np.polyfit(np.log(steps), logs, 1)[0])
    return {"steps": list(steps), "errors": errors, "order": order, "scale": scale}


# ----------------------------------------------------------------------
# Linear solves
# ----------------------------------------------------------------------

def _solve_linear(A: sp.csr_matrix, rhs: np.ndarray, direct: bool, rtol: float,
                  max_iterations: int) -> Tuple[np.ndarray, int, bool]:
    """Returns (solution, Krylov iterations, fell back to direct)."""
    if direct:
        return spsolve(A.tocsc(), rhs), 0, False
    diag = A.diagonal().copy()
    diag[diag == 0] = 1.0
    preconditioner = LinearOperator(A.shape, matvec=lambda x: x / diag, dtype=float)
    count = [0]

    def callback(_):
        count[0] += 1

    x, info = gmres(A, rhs, rtol=rtol, atol=0.0, restart=KRYLOV_RESTART,
                    maxiter=max(1, math.ceil(max_iterations / KRYLOV_RESTART)),
                    M=preconditioner, callback=callback, callback_type="pr_norm")
    if info != 0:
        logger.warning(f"GMRES did not reach rtol={rtol:.1e} (info={info}); falling back to a direct solve")
        return spsolve(A.tocsc(), rhs), count[0], True
    return x, count[0], False


# ----------------------------------------------------------------------
# Initial guess
# ----------------------------------------------------------------------

def _harmonic_extension(boundary: np.ndarray, spacing: Sequence[float], direct: bool) -> np.ndarray:
    inner = (slice(1, -1),) * boundary.ndim
    frame = boundary.copy()
    frame[inner] = 0.0
    shape = frame[inner].shape
    rhs = -sum(second_difference(frame, spacing, axis) for axis in range(frame.ndim)).reshape(-1)
    solution, _, _ = _solve_linear(laplace_matrix(shape, spacing), rhs, direct, 1e-12, 10000)
    frame[inner] = solution.reshape(shape)
    return frame


def _level_interval(pairs, level: float) -> Tuple[float, float]:
    """Shifts c >= 0 with alpha + c beta >= level at every point, for each (alpha, beta) pair."""
    lower, upper = [0.0], [math.inf]
    for alpha, beta in pairs:
        need = level - alpha
        pos, neg, flat = beta > 0, beta < 0, beta == 0
        if pos.any():
            lower.append(float(np.max(need[pos] / beta[pos])))
        if neg.any():
            upper.append(float(np.min(need[neg] / beta[neg])))
        if flat.any() and np.any(need[flat] > 0):
            upper.append(-math.inf)
    return max(lower), min(upper)


def _best_shift(score: Callable[[float], float], lo: float, hi: float) -> float:
    """Minimiser of score on [lo, hi]: geometric scan from lo, then bounded refinement."""
    candidates = lo + (hi - lo) * np.concatenate(([0.0], np.geomspace(1e-6, 1.0, 64)))
    scores = [score(float(c)) for c in candidates]
    k = int(np.argmin(scores))
    left, right = candidates[max(k - 1, 0)], candidates[min(k + 1, len(candidates) - 1)]
    if right <= left:
        return float(candidates[k])
    refined = minimize_scalar(score, bounds=(float(left), float(right)), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, abs(float(right)))})
    return float(refined.x) if refined.fun <= scores[k] else float(candidates[k])


def initial_guess(boundary: GridField, config: Optional[SolveConfig] = None) -> Tuple[GridField, float]:
    """
    u0 = H + c (t^2 - T) with H, T the discrete harmonic extensions of the
    boundary data and of t^2.

    The correction vanishes on the boundary and the discrete residual is a
    quadratic in c at every point. c minimises its sup-norm, clipped so that
    min(u_tt, lap_x u) stays at least initial_margin_fraction of the best
    margin any shift reaches; the start is then strictly inside the elliptic
    cone whenever the cone is reachable at all.
    """
    config = config or SolveConfig(grid_shape=boundary.shape)
    _check_grid(boundary)
    direct = config.direct if config.direct is not None else boundary.ndim == 2
    spacing = boundary.spacing
    eps = config.ellipticity_floor

    H = _harmonic_extension(boundary.values, spacing, direct)
    t2 = boundary.mesh()[0] ** 2
    T = _harmonic_extension(t2, spacing, direct)
    correction = t2 - T

    h_tt, h_lap, h_mixed = _parts(H, spacing)
    c_tt, c_lap, c_mixed = _parts(correction, spacing)
    pairs = ((h_tt, c_tt), (h_lap, c_lap))

    lo, hi = _level_interval(pairs, eps)
    if lo > hi:
        logger.warning(f"No shift c puts the initial guess inside the elliptic cone; using c = {lo:.4g}")
        return boundary.with_values(H + lo * correction), lo

    quad = c_tt * c_lap - sum(m * m for m in c_mixed)
    lin = h_tt * c_lap + c_tt * h_lap - 2.0 * sum(hm * cm for hm, cm in zip(h_mixed, c_mixed))
    const = h_tt * h_lap - sum(m * m for m in h_mixed) - 1.0

    def residual_norm(c: float) -> float:
        return float(np.max(np.abs((quad * c + lin) * c + const)))

    def margin(c: float) -> float:
        return float(min(np.min(h_tt + c * c_tt), np.min(h_lap + c * c_lap)))

    top = hi if math.isfinite(hi) else lo + 1e3 * max(1.0, lo)
    c_res = _best_shift(residual_norm, lo, top)
    reach = min(top, max(2.0 * max(c_res, 1.0), lo))
    c_margin = _best_shift(lambda c: -margin(c), lo, reach) if reach > lo else lo
    target = max(eps, config.initial_margin_fraction * margin(c_margin))
    safe_lo, safe_hi = _level_interval(pairs, target)
    if safe_lo > safe_hi:
        safe_lo = safe_hi = c_margin
    c = min(max(c_res, safe_lo), safe_hi)
    logger.debug(f"Initial guess shift c = {c:.6g}: residual {residual_norm(c):.3e}, margin {margin(c):.3e} "
                 f"(target {target:.3e})")
    return boundary.with_values(H + c * correction), c


def boundary_from_function(source: Union[ExactPoly, Callable], box, shape: Sequence[int]) -> GridField:
    """Dirichlet data sampled on the faces of the box; interior values are zero."""
    sampled = GridField.sample(source, box, shape)
    values = sampled.values.copy()
    values[(slice(1, -1),) * values.ndim] = 0.0
    return sampled.with_values(values)


# ----------------------------------------------------------------------
# Newton iteration
# ----------------------------------------------------------------------

def newton_solve(boundary: GridField, config: Optional[SolveConfig] = None,
                 initial: Optional[GridField] = None) -> Tuple[GridField, SolveReport]:
    """
    Solve the discrete Dirichlet problem by damped Newton.

    Args:
        boundary: field whose face values are the Dirichlet data
        config: solver settings (defaults derived from the grid)
        initial: optional starting field; its face values are replaced

    Returns:
        (best iterate, SolveReport); non-convergence is a status, not an exception
    """
    _check_grid(boundary)
    config = config or SolveConfig(grid_shape=boundary.shape)
    direct = config.direct if config.direct is not None else boundary.ndim == 2
    spacing = boundary.spacing
    eps = config.ellipticity_floor
    inner = (slice(1, -1),) * boundary.ndim
    report = SolveReport(shape=boundary.shape)

    if initial is None:
        start, report.initial_shift = initial_guess(boundary, config)
        values = start.values.copy()
    else:
        values = boundary.values.copy()
        values[inner] = initial.values[inner]

    residual = _residual(values, spacing)
    norm = float(np.max(np.abs(residual)))
    margin = _margin(values, spacing)
    report.initial_margin = margin
    report.residual_norms.append(norm)
    logger.info(f"Newton start: grid {boundary.shape}, residual {norm:.3e}, margin {margin:.3e}")

    for iteration in range(1, config.max_iterations + 1):
        if norm <= config.tolerance:
            break
        op = linearized_operator(boundary.with_values(values))
        rtol = max(min(config.linear_tolerance_factor, config.linear_tolerance_factor * norm),
                   config.linear_tolerance_floor)
        step, krylov, fell_back = _solve_linear(op.matrix, -residual.reshape(-1), direct, rtol,
                                                config.krylov_max_iterations)
        report.krylov_iterations.append(krylov)
        report.fallbacks += int(fell_back)
        direction = np.zeros_like(values)
        direction[inner] = step.reshape(op.interior_shape)

        lam, accepted, barrier_only = 1.0, False, True
        for _ in range(config.max_backtracks):
            trial = values + lam * direction
            trial_residual = _residual(trial, spacing)
            trial_norm = float(np.max(np.abs(trial_residual)))
            trial_margin = _margin(trial, spacing)
            if trial_margin >= eps and trial_norm < norm:
                accepted = True
                break
            barrier_only = barrier_only and trial_margin < eps
            logger.debug(f"  backtrack: lambda={lam:.3e}, residual {trial_norm:.3e}, margin {trial_margin:.3e}")
            lam *= config.shrink

        if not accepted:
            report.status = "ellipticity-breakdown" if barrier_only else "stalled"
            logger.warning(f"Line search failed at iteration {iteration}: {report.status}")
            break

        values, residual, norm, margin = trial, trial_residual, trial_norm, trial_margin
        report.residual_norms.append(norm)
        report.step_sizes.append(lam)
        logger.debug(f"Newton {iteration}: lambda={lam:.3g}, residual {norm:.3e}, margin {margin:.3e}, krylov {krylov}")

    if norm <= config.tolerance:
        report.status = "converged" if margin >= eps else "ellipticity-breakdown"

    report.final_residual = norm
    report.ellipticity_margin = margin
    log = logger.info if report.converged else logger.warning
    log(f"Newton finished: {report.status} after {report.iterations} steps, residual {norm:.3e}")
    return boundary.with_values(values), report


# ----------------------------------------------------------------------
# Manufactured solutions
# ----------------------------------------------------------------------

def radial_monge_ampere(C: float = 1.0) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """
    Radial solution of u_tt u_xx - u_tx^2 = 1 in the plane:
    u = (r sqrt(r^2 + C) + C log(r + sqrt(r^2 + C))) / 2, so u'(r) = sqrt(r^2 + C).
    """
    if C <= 0:
        raise InvalidInputError(f"The radial solution needs C > 0, got {C}")

    def u(t, x):
        r = np.sqrt(np.asarray(t) ** 2 + np.asarray(x) ** 2)
        root = np.sqrt(r * r + C)
        return 0.5 * (r * root + C * np.log(r + root))

    return u


# ----------------------------------------------------------------------
# Nested-domain experiment
# ----------------------------------------------------------------------

@dataclass
class PerturbationSpec:
    """amplitude * prod cos(frequency * coord) plus an optional polynomial."""
    amplitude: float = 0.0
    frequency: float = 1.0
    polynomial: Optional[ExactPoly] = None

    @classmethod
    def from_config(cls, config: AnalysisConfig, polynomial: Optional[ExactPoly] = None) -> "PerturbationSpec":
        return cls(config.perturbation_amplitude, config.perturbation_frequency, polynomial)

    @property
    def is_zero(self) -> bool:
        return self.amplitude == 0 and (self.polynomial is None or self.polynomial.is_zero)

    def evaluate(self, *coords: np.ndarray) -> np.ndarray:
        wave = self.amplitude * np.prod([np.cos(self.frequency * np.asarray(c)) for c in coords], axis=0)
        if self.polynomial is not None:
            wave = wave + self.polynomial.to_callable()(*coords)
        return wave

    def to_dict(self) -> Dict:
        return {"amplitude": self.amplitude, "frequency": self.frequency,
                "polynomial": str(self.polynomial) if self.polynomial is not None else None}


@dataclass
class ProbeRow:
    domain_size: float
    h: float
    osc_u_tt: float
    status: str
    iterations: int
    final_residual: float


@dataclass
class ProbeReport:
    rows: List[ProbeRow]
    core_box: List[Tuple[float, float]]
    perturbation: PerturbationSpec

    @property
    def complete(self) -> bool:
        return all(r.status == "converged" for r in self.rows)

    def csv_rows(self) -> List[Tuple]:
        return [(r.domain_size, r.h, r.osc_u_tt, r.status) for r in self.rows]

    def to_dict(self) -> Dict:
        return {
            "complete": self.complete,
            "core_box": self.core_box,
            "perturbation": self.perturbation.to_dict(),
            "rows": [r.__dict__ for r in self.rows],
        }


def probe_problem31(base: EntireSolution, perturbation: PerturbationSpec,
                    domains: Sequence[float], config: AnalysisConfig) -> ProbeReport:
    """
    Solve on nested boxes [0, L]^(n+1) with data base.u + perturbation and
    record osc(u_tt) over a fixed core sub-box of the smallest domain.

    The grid spacing is 1 / probe_points_per_unit on every domain. A row
    whose solve did not converge keeps its status and the report is
    flagged incomplete.
    """
    if base.n not in (1, 2):
        raise UnsupportedError(f"nested-domain runs cover n = 1 and n = 2, got n = {base.n}")
    sizes = sorted(float(L) for L in domains)
    if not sizes or sizes[0] <= 0:
        raise InvalidInputError(f"Domain sizes must be positive, got {list(domains)}")
    ndim = base.n + 1
    centre = sizes[0] / 2
    half = config.probe_core_fraction * sizes[0] / 2
    core = [(centre - half, centre + half)] * ndim

    exact = base.u.to_callable()

    def data(*coords):
        return exact(*coords) + perturbation.evaluate(*coords)

    rows = []
    for L in sizes:
        points = int(round(L * config.probe_points_per_unit)) + 1
        shape = [points] * ndim
        boundary = boundary_from_function(data, [(0.0, L)] * ndim, shape)
        solve_config = SolveConfig.from_analysis_config(config, shape)
        solution, report = newton_solve(boundary, solve_config)

        u_tt = second_difference(solution.values, solution.spacing, 0)
        mask = np.ones(u_tt.shape, dtype=bool)
        for coords, (lo, hi) in zip(solution.interior_mesh(), core):
            mask &= (coords >= lo - 1e-12) & (coords <= hi + 1e-12)
        osc = float(u_tt[mask].max() - u_tt[mask].min()) if mask.any() else float("nan")
        rows.append(ProbeRow(L, solution.h, osc, report.status, report.iterations, report.final_residual))
        logger.info(f"nested domain L={L:g}: h={solution.h:.4g}, osc(u_tt)={osc:.3e}, {report.status}")

    result = ProbeReport(rows, core, perturbation)
    if not result.complete:
        logger.warning("nested-domain report is partial: at least one solve did not converge")
    return result
