# ----------------------------------------------------------------------
#  Verifier
#
#  Q(D^2u) = u_tt * lap(u) - |grad u_t|^2 checked two ways:
#  1. Exactly, as polynomial algebra on ExactPoly
#  2. Numerically, with second-order central differences on grids
# ----------------------------------------------------------------------

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import InvalidInputError
from polycore import ExactPoly, laplacian

logger = logging.getLogger(__name__)

MIN_POINTS = 5
ROUNDOFF_FACTOR = 1e-10

Box = Sequence[Sequence[float]]


@dataclass
class GridField:
    """Scalar samples on a uniform tensor grid; axis 0 is t (or z)."""
    box: List[Tuple[float, float]]
    shape: Tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        self.box = [(float(lo), float(hi)) for lo, hi in self.box]
        self.shape = tuple(int(s) for s in self.shape)
        if len(self.box) != len(self.shape) or len(self.shape) < 1:
            raise InvalidInputError(f"Box has {len(self.box)} axes but shape has {len(self.shape)}")
        for (lo, hi), s in zip(self.box, self.shape):
            if not hi > lo:
                raise InvalidInputError(f"Empty box axis ({lo}, {hi})")
            if s < 2:
                raise InvalidInputError(f"Grid axis needs at least 2 points, got {s}")
        values = np.asarray(self.values, dtype=float)
        if values.size != int(np.prod(self.shape)):
            raise InvalidInputError(f"{values.size} values do not fill a grid of shape {self.shape}")
        self.values = values.reshape(self.shape)

    @classmethod
    def sample(cls, source: Union[ExactPoly, Callable], box: Box, shape: Sequence[int]) -> "GridField":
        """Sample a polynomial or a vectorised callable f(*coords) on the grid."""
        template = cls(box, shape, np.zeros(tuple(shape)))
        evaluate = source.to_callable() if isinstance(source, ExactPoly) else source
        if isinstance(source, ExactPoly) and source.nvars != len(template.shape):
            raise InvalidInputError(f"Polynomial has {source.nvars} variables, grid has {len(template.shape)} axes")
        values = np.broadcast_to(evaluate(*template.mesh()), template.shape)
        return cls(template.box, template.shape, np.array(values, dtype=float))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple((hi - lo) / (s - 1) for (lo, hi), s in zip(self.box, self.shape))

    @property
    def h(self) -> float:
        return max(self.spacing)

    def axes(self) -> List[np.ndarray]:
        return [np.linspace(lo, hi, s) for (lo, hi), s in zip(self.box, self.shape)]

    def mesh(self) -> List[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def interior_mesh(self) -> List[np.ndarray]:
        return np.meshgrid(*[a[1:-1] for a in self.axes()], indexing="ij")

    def interior_region(self) -> List[List[int]]:
        return [[1, s - 1] for s in self.shape]

    def with_values(self, values: np.ndarray) -> "GridField":
        return GridField(self.box, self.shape, values)

    def require_stencil(self, minimum: int = MIN_POINTS) -> None:
        small = [s for s in self.shape if s < minimum]
        if small:
            raise InvalidInputError(f"Grid too small for second differences: shape {self.shape}, need >= {minimum} per axis")


@dataclass
class ResidualReport:
    max_abs: float
    rms: float
    eval_region: List[List[int]]
    order_estimate: Optional[Union[float, str]] = None
    exact_residual: Optional[ExactPoly] = None

    @classmethod
    def from_array(cls, residual: np.ndarray, eval_region: List[List[int]]) -> "ResidualReport":
        residual = np.asarray(residual, dtype=float)
        if residual.size == 0:
            return cls(0.0, 0.0, eval_region)
        # np.sum reduces pairwise, which keeps rms reproducible
        rms = float(np.sqrt(np.sum(residual * residual) / residual.size))
        return cls(float(np.max(np.abs(residual))), rms, eval_region)

    def to_dict(self) -> Dict:
        return {
            "max_abs": self.max_abs,
            "rms": self.rms,
            "eval_region": self.eval_region,
            "order_estimate": self.order_estimate,
            **({"exact_residual": str(self.exact_residual)} if self.exact_residual is not None else {}),
        }


# ----------------------------------------------------------------------
# Stencils (one-cell inset interior, shared with the dirichlet solver)
# ----------------------------------------------------------------------

def shifted(values: np.ndarray, offsets: Sequence[int]) -> np.ndarray:
    """Interior view of values moved by the given per-axis offsets."""
    return values[tuple(slice(1 + o, s - 1 + o) for o, s in zip(offsets, values.shape))]


def second_difference(values: np.ndarray, spacing: Sequence[float], axis: int) -> np.ndarray:
    ndim = values.ndim
    plus = [0] * ndim
    plus[axis] = 1
    minus = [0] * ndim
    minus[axis] = -1
    centre = [0] * ndim
    return (shifted(values, plus) - 2 * shifted(values, centre) + shifted(values, minus)) / spacing[axis] ** 2


def mixed_difference(values: np.ndarray, spacing: Sequence[float], a: int, b: int) -> np.ndarray:
    """Cross difference (u[+,+] - u[+,-] - u[-,+] + u[-,-]) / (4 h_a h_b)."""
    ndim = values.ndim
    total = 0
    for sa, sb in itertools.product((1, -1), repeat=2):
        offsets = [0] * ndim
        offsets[a] += sa
        offsets[b] += sb
        total = total + sa * sb * shifted(values, offsets)
    return total / (4 * spacing[a] * spacing[b])


def discrete_hessian_parts(u: GridField) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(u_tt, lap_x u, |grad_x u_t|^2) on the interior."""
    u.require_stencil()
    values, spacing = u.values, u.spacing
    u_tt = second_difference(values, spacing, 0)
    lap = sum(second_difference(values, spacing, i) for i in range(1, u.ndim))
    grad_sq = sum(mixed_difference(values, spacing, 0, i) ** 2 for i in range(1, u.ndim))
    if u.ndim == 1:
        lap = np.zeros_like(u_tt)
        grad_sq = np.zeros_like(u_tt)
    return u_tt, lap, grad_sq


def q_operator_values(u: GridField) -> np.ndarray:
    u_tt, lap, grad_sq = discrete_hessian_parts(u)
    return u_tt * lap - grad_sq


def roundoff_threshold(values: np.ndarray, factor: float = ROUNDOFF_FACTOR) -> float:
    magnitude = float(np.max(np.abs(values))) if np.size(values) else 0.0
    return factor * (1.0 + magnitude)


# ----------------------------------------------------------------------
# Operators
# ----------------------------------------------------------------------

def q_operator_symbolic(u: ExactPoly) -> ExactPoly:
    """u_tt * lap(u) - |grad u_t|^2, exactly."""
    if not u.has_t:
        raise InvalidInputError("Q(D^2u) needs a polynomial in (t, x1..xn)")
    u_t = u.derivative(0)
    result = u.derivative(0, 2) * laplacian(u)
    for i in u.spatial_indices:
        d = u_t.derivative(i)
        result = result - d * d
    return result


def q_operator_grid(u: GridField) -> ResidualReport:
    """Statistics of the discrete Q(D^2u) - 1 over the interior."""
    residual = q_operator_values(u) - 1.0
    return ResidualReport.from_array(residual, u.interior_region())


def monge_ampere_determinant(u: Union[ExactPoly, GridField]):
    """
    u_tt * u_xx - u_tx^2 for a function of (t, x) with one spatial variable.

    This is Q(D^2u) when n = 1; grids return interior values.
    """
    ndim = u.nvars if isinstance(u, ExactPoly) else u.ndim
    if ndim != 2:
        raise InvalidInputError(f"The real Monge-Ampere reading needs n = 1, got {ndim - 1} spatial variables")
    if isinstance(u, ExactPoly):
        return q_operator_symbolic(u)
    return q_operator_values(u)


def certify_solution(u: ExactPoly) -> Dict:
    """Exact verdict for Q(D^2u) = 1."""
    residual = q_operator_symbolic(u) - 1
    if residual.is_zero:
        return {"verdict": "exact-identity", "residual": "0"}
    return {"verdict": "residual", "residual": str(residual), "residual_poly": residual.to_dict()}


# ----------------------------------------------------------------------
# Ellipticity
# ----------------------------------------------------------------------

@dataclass
class EllipticityVerdict:
    conditions: Dict[str, Dict] = field(default_factory=dict)
    basis: str = "samples"

    @property
    def elliptic(self) -> bool:
        return all(c["positive"] for c in self.conditions.values())

    def to_dict(self) -> Dict:
        return {"elliptic": self.elliptic, "basis": self.basis, "conditions": self.conditions}


def _verdict(name: str, values: np.ndarray, basis: str) -> Dict:
    minimum = float(np.min(values)) if np.size(values) else float("nan")
    label = "positive on samples" if basis == "samples" else "positive at grid points"
    positive = bool(np.size(values)) and minimum > 0
    return {"positive": positive, "min": minimum, "label": label if positive else f"not {label}"}


def ellipticity_check(u: Union[ExactPoly, GridField], region: Optional[Box] = None,
                      samples: int = 11) -> EllipticityVerdict:
    """
    Sign verdicts for u_tt > 0, lap(u) > 0 and Q(D^2u) > 0 on a region.

    Polynomials are sampled on a lattice with `samples` points per axis;
    grids are checked at every interior point inside the region.
    """
    if isinstance(u, ExactPoly):
        if not u.has_t:
            raise InvalidInputError("ellipticity_check needs a polynomial in (t, x1..xn)")
        region = region if region is not None else [(-1.0, 1.0)] * u.nvars
        if len(region) != u.nvars:
            raise InvalidInputError(f"Region has {len(region)} axes, polynomial has {u.nvars} variables")
        lattice = GridField(region, [max(2, samples)] * u.nvars, np.zeros([max(2, samples)] * u.nvars)).mesh()
        parts = {
            "u_tt": u.derivative(0, 2),
            "laplacian": laplacian(u),
            "Q": q_operator_symbolic(u),
        }
        conditions = {name: _verdict(name, np.broadcast_to(p.to_callable()(*lattice), lattice[0].shape), "samples")
                      for name, p in parts.items()}
        return EllipticityVerdict(conditions, "samples")

    u_tt, lap, grad_sq = discrete_hessian_parts(u)
    mask = np.ones(u_tt.shape, dtype=bool)
    if region is not None:
        if len(region) != u.ndim:
            raise InvalidInputError(f"Region has {len(region)} axes, grid has {u.ndim}")
        for coords, (lo, hi) in zip(u.interior_mesh(), region):
            mask &= (coords >= lo - 1e-12) & (coords <= hi + 1e-12)
    parts = {"u_tt": u_tt, "laplacian": lap, "Q": u_tt * lap - grad_sq}
    conditions = {name: _verdict(name, values[mask], "grid") for name, values in parts.items()}
    return EllipticityVerdict(conditions, "grid")


# ----------------------------------------------------------------------
# Convergence order (manufactured solutions)
# ----------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    spacings: List[float]
    residuals: List[float]
    order: Union[float, str]

    def ratios(self) -> List[float]:
        return [a / b if b > 0 else float("inf") for a, b in zip(self.residuals, self.residuals[1:])]

    def to_dict(self) -> Dict:
        return {"spacings": self.spacings, "residuals": self.residuals,
                "ratios": self.ratios(), "order": self.order}


def nesting_factors(shapes: Sequence[Sequence[int]]) -> List[int]:
    """Refinement factor of each grid relative to the first; grids must nest by 2."""
    base = [s - 1 for s in shapes[0]]
    factors = []
    for k, shape in enumerate(shapes):
        if len(shape) != len(base):
            raise InvalidInputError(f"Shapes {shapes} mix dimensions")
        ratios = {(s - 1) / b for s, b in zip(shape, base)}
        if len(ratios) != 1 or ratios.pop() != 2 ** k:
            raise InvalidInputError(f"Shapes {list(shapes)} are not nested by factor 2")
        factors.append(2 ** k)
    return factors


def coarse_points(values: np.ndarray, factor: int, coarse_shape: Sequence[int]) -> np.ndarray:
    """Interior-array entries sitting on interior points of the coarsest grid."""
    return values[tuple(slice(factor - 1, factor - 1 + factor * (s - 2), factor) for s in coarse_shape)]


def fit_order(spacings: Sequence[float], errors: Sequence[float]) -> float:
    errors = np.maximum(np.asarray(errors, dtype=float), np.finfo(float).tiny)
    return float(np.polyfit(np.log(spacings), np.log(errors), 1)[0])


def convergence_order(u_exact: ExactPoly, box: Box, shapes: Sequence[Sequence[int]],
                      roundoff_factor: float = ROUNDOFF_FACTOR) -> ConvergenceReport:
    """
    Least-squares slope of log(max residual) against log(h).

    Residuals are compared on the interior points of the coarsest grid so
    every resolution is measured on the same point set.
    """
    if len(shapes) < 3:
        raise InvalidInputError(f"convergence_order needs at least 3 resolutions, got {len(shapes)}")
    factors = nesting_factors(shapes)
    spacings, residuals, exact = [], [], True
    for shape, factor in zip(shapes, factors):
        u = GridField.sample(u_exact, box, shape)
        residual = coarse_points(q_operator_values(u) - 1.0, factor, shapes[0])
        worst = float(np.max(np.abs(residual)))
        exact = exact and worst <= roundoff_threshold(u.values, roundoff_factor)
        spacings.append(u.h)
        residuals.append(worst)
        logger.debug(f"convergence_order: shape {tuple(shape)}, h={u.h:.4g}, max residual {worst:.3e}")
    order = "exact" if exact else fit_order(spacings, residuals)
    return ConvergenceReport(spacings, residuals, order)
