# ----------------------------------------------------------------------
#  Donaldson Transform
#
#  z = u_t(t, x) with inverse theta(z, x) = t. When u solves the equation
#  theta is harmonic in (z, x) and d(theta)/dz = 1 / u_tt > 0.
#  1. Exact transform of family members with identity certificates
#  2. Numeric transform of sampled fields (monotone column inversion)
#  3. Harmonicity residual, Liouville and completeness diagnostics
# ----------------------------------------------------------------------

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad, trapezoid
from scipy.interpolate import PchipInterpolator

from builder import EntireSolution, classify_constant_utt
from errors import EllipticityViolationError, InternalConsistencyError, InvalidInputError, TransformDomainError
from polycore import ExactPoly, laplacian
from settings import optimal_workers
from verifier import GridField, ResidualReport, second_difference

logger = logging.getLogger(__name__)

WINDOW_NOTE = "window observation on finite data, not a theorem"


def _stats(values) -> Dict[str, float]:
    values = np.asarray(values, dtype=float)
    return {
        "min": float(np.min(values)),
        "max": float(np.max(values)),
        "mean": float(np.mean(values)),
        "variance": float(np.var(values)),
    }


@dataclass
class TransformResult:
    """theta as an exact polynomial (slot 0 is z) or as a field over z_range x box."""
    theta: Union[ExactPoly, GridField]
    z_range: Optional[Tuple[float, float]]
    dtheta_dz_stats: Dict[str, float]
    source: str = "symbolic"
    dtheta_dz: Optional[Union[ExactPoly, np.ndarray]] = None
    identities: Dict[str, bool] = field(default_factory=dict)
    column_ranges: Optional[Tuple[np.ndarray, np.ndarray]] = None
    shrink: float = 0.0
    min_jacobian: Optional[float] = None
    identity_residual: Optional[float] = None

    @property
    def is_symbolic(self) -> bool:
        return isinstance(self.theta, ExactPoly)

    @property
    def h(self) -> Optional[float]:
        return None if self.is_symbolic else self.theta.h

    @classmethod
    def from_theta_field(cls, theta: GridField, source: str = "synthetic") -> "TransformResult":
        """Wrap any theta field, differentiating in z along axis 0."""
        dz = theta.spacing[0]
        dtheta = np.gradient(theta.values, dz, axis=0, edge_order=2)
        return cls(theta=theta, z_range=theta.box[0], dtheta_dz_stats=_stats(dtheta),
                   source=source, dtheta_dz=dtheta)

    def to_dict(self) -> Dict:
        data = {
            "source": self.source,
            "z_range": list(self.z_range) if self.z_range is not None else None,
            "dtheta_dz_stats": self.dtheta_dz_stats,
        }
        if self.is_symbolic:
            data["theta"] = self.theta.to_string(["z"] + self.theta.default_names()[1:])
            data["dtheta_dz"] = str(self.dtheta_dz)
            data["identities"] = self.identities
        else:
            data["shape"] = list(self.theta.shape)
            data["shrink"] = self.shrink
            data["min_jacobian"] = self.min_jacobian
            data["identity_residual"] = self.identity_residual
        return data


# ----------------------------------------------------------------------
# Exact transform
# ----------------------------------------------------------------------

def donaldson_transform_symbolic(sol: Union[EntireSolution, ExactPoly]) -> TransformResult:
    """
    theta(z, x) = (z - b(x)) / 2a for a family member.

    Also certifies, after substituting z = u_t, the identities
    theta(u_t, x) = t, u_tt * theta_z = 1 and theta_xi * u_tt + u_txi = 0.
    """
    if isinstance(sol, ExactPoly):
        sol = classify_constant_utt(sol)
    u, a = sol.u, sol.a
    nvars = u.nvars
    z = ExactPoly.variable(0, nvars, has_t=True)
    theta = (z - sol.b.lift_t()) / (2 * a)
    dtheta = theta.derivative(0)

    u_t = u.derivative(0)
    u_tt = u.derivative(0, 2)
    images = [u_t] + [ExactPoly.variable(i, nvars, has_t=True) for i in range(1, nvars)]
    identities = {
        "theta(u_t, x) = t": (theta.substitute(images) - z).is_zero,
        "u_tt * theta_z = 1": (u_tt * dtheta.substitute(images) - 1).is_zero,
    }
    identities["theta_x * u_tt + u_tx = 0"] = all(
        (theta.derivative(i).substitute(images) * u_tt + u_t.derivative(i)).is_zero
        for i in range(1, nvars)
    )
    failed = [name for name, ok in identities.items() if not ok]
    if failed:
        raise InternalConsistencyError(f"Transform identities failed: {failed}")

    value = float(dtheta.constant_value)
    stats = {"min": value, "max": value, "mean": value, "variance": 0.0}
    return TransformResult(theta=theta, z_range=None, dtheta_dz_stats=stats,
                           source="symbolic", dtheta_dz=dtheta, identities=identities)


# ----------------------------------------------------------------------
# Numeric transform
# ----------------------------------------------------------------------

def invert_monotone(t: np.ndarray, values: np.ndarray, targets: np.ndarray,
                    tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """
    Solve interp(t) = target for every target on a strictly increasing column.

    Monotone cubic (PCHIP) interpolation of the samples, then Newton steps
    kept inside a shrinking bracket; a step leaving the bracket bisects.
    """
    interp = PchipInterpolator(t, values)
    slope = interp.derivative()
    targets = np.asarray(targets, dtype=float)
    k = np.clip(np.searchsorted(values, targets, side="right") - 1, 0, len(t) - 2)
    lo, hi = t[k].copy(), t[k + 1].copy()
    frac = (targets - values[k]) / (values[k + 1] - values[k])
    x = lo + np.clip(frac, 0.0, 1.0) * (hi - lo)

    active = np.ones(targets.shape, dtype=bool)
    for _ in range(max_iter):
        f = interp(x[active]) - targets[active]
        done = np.abs(f) <= tol
        idx = np.flatnonzero(active)
        below = f < 0
        lo[idx[below]] = x[idx[below]]
        hi[idx[~below]] = x[idx[~below]]
        d = slope(x[active])
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x[active] - f / d
        outside = ~np.isfinite(step) | (step <= lo[idx]) | (step >= hi[idx])
        step[outside] = 0.5 * (lo[idx][outside] + hi[idx][outside])
        step[done] = x[idx[done]]
        x[idx] = step
        active[idx[done | (hi[idx] - lo[idx] <= tol)]] = False
        if not active.any():
            break
    return x


def donaldson_transform_numeric(u: GridField, root_tolerance: float = 1e-12,
                                workers: Optional[int] = None, source: str = "numeric") -> TransformResult:
    """
    Invert z = u_t(t, x) column by column on a sampled field.

    Args:
        u: field over (t, x1..xn) with u_tt > 0 and u_t increasing in t
        root_tolerance: tolerance on z for each inversion
        workers: thread count for column inversions (psutil-sized by default)
        source: provenance label carried to the Liouville diagnostic

    Returns:
        TransformResult with theta on the common z-range times the spatial box
    """
    u.require_stencil()
    if u.ndim < 2:
        raise InvalidInputError("The transform needs at least one spatial axis")
    dt = u.spacing[0]
    u_tt_interior = second_difference(u.values, u.spacing, 0)
    if not np.all(u_tt_interior > 0):
        raise EllipticityViolationError(f"u_tt is not positive on the grid (min {u_tt_interior.min():.3e})")
    u_t = np.gradient(u.values, dt, axis=0, edge_order=2)
    if not np.all(np.diff(u_t, axis=0) > 0):
        raise EllipticityViolationError("u_t is not strictly increasing in t on every column")
    u_tt = np.gradient(u_t, dt, axis=0, edge_order=2)

    col_lo, col_hi = u_t.min(axis=0), u_t.max(axis=0)
    z_lo, z_hi = float(col_lo.max()), float(col_hi.min())
    if not z_lo < z_hi:
        raise TransformDomainError(f"Empty common z-range: [{z_lo:.6g}, {z_hi:.6g}]")
    widest = float((col_hi - col_lo).max())
    shrink = 1.0 - (z_hi - z_lo) / widest
    if shrink > 1e-12:
        logger.warning(f"Common z-range [{z_lo:.6g}, {z_hi:.6g}] is {100 * shrink:.1f}% narrower than the widest column")

    t_axis = u.axes()[0]
    nz = u.shape[0]
    z_axis = np.linspace(z_lo, z_hi, nz)
    columns = list(itertools.product(*[range(s) for s in u.shape[1:]]))

    def invert(col):
        sel = (slice(None),) + col
        theta_col = invert_monotone(t_axis, u_t[sel], z_axis, root_tolerance)
        return theta_col, np.interp(theta_col, t_axis, u_tt[sel])

    with ThreadPoolExecutor(max_workers=workers or optimal_workers()) as executor:
        results = list(executor.map(invert, columns))
    logger.debug(f"Inverted {len(columns)} columns over {nz} z-levels")

    theta = np.empty((nz,) + u.shape[1:])
    u_tt_at_theta = np.empty_like(theta)
    for col, (theta_col, utt_col) in zip(columns, results):
        theta[(slice(None),) + col] = theta_col
        u_tt_at_theta[(slice(None),) + col] = utt_col

    theta_field = GridField([(z_lo, z_hi)] + list(u.box[1:]), theta.shape, theta)
    result = TransformResult.from_theta_field(theta_field, source=source)
    result.column_ranges = (col_lo, col_hi)
    result.shrink = shrink
    result.min_jacobian = float(u_tt_interior.min())
    result.identity_residual = float(np.max(np.abs(u_tt_at_theta * result.dtheta_dz - 1.0)))
    logger.info(f"Numeric transform: z in [{z_lo:.6g}, {z_hi:.6g}], "
                f"dtheta/dz in [{result.dtheta_dz_stats['min']:.6g}, {result.dtheta_dz_stats['max']:.6g}]")
    return result


# ----------------------------------------------------------------------
# Diagnostics
# ----------------------------------------------------------------------

def harmonicity_residual(theta: TransformResult) -> ResidualReport:
    """Laplacian of theta in all of (z, x): exact polynomial or interior FD statistics."""
    if theta.is_symbolic:
        poly = theta.theta
        residual = laplacian(poly, range(poly.nvars))
        coeffs = [abs(float(c)) for c in residual.terms.values()]
        worst = max(coeffs, default=0.0)
        return ResidualReport(worst, worst, [], exact_residual=residual)
    field_ = theta.theta
    field_.require_stencil()
    values = field_.values
    lap = sum(second_difference(values, field_.spacing, i) for i in range(field_.ndim))
    return ResidualReport.from_array(lap, field_.interior_region())


@dataclass
class LiouvilleVerdict:
    positive: bool
    min_dtheta_dz: float
    relative_variation: float
    tolerance: float
    verdict: str
    source: str
    note: str = WINDOW_NOTE

    def to_dict(self) -> Dict:
        return {
            "positive": self.positive,
            "min_dtheta_dz": self.min_dtheta_dz,
            "relative_variation": self.relative_variation,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
            "source": self.source,
            "note": self.note,
        }


def liouville_tolerance(theta: TransformResult, symbolic_tolerance: float = 1e-6,
                        solver_factor: float = 10.0) -> float:
    if theta.source == "solver" and theta.h is not None:
        return solver_factor * theta.h ** 2
    return symbolic_tolerance


def liouville_diagnostic(theta: TransformResult, tolerance: Optional[float] = None,
                         symbolic_tolerance: float = 1e-6, solver_factor: float = 10.0) -> LiouvilleVerdict:
    """
    Positivity and relative variation (max - min)/mean of d(theta)/dz.

    The verdict describes the sampled window only.
    """
    stats = theta.dtheta_dz_stats
    tol = tolerance if tolerance is not None else liouville_tolerance(theta, symbolic_tolerance, solver_factor)
    positive = stats["min"] > 0
    variation = (stats["max"] - stats["min"]) / stats["mean"] if stats["mean"] != 0 else float("inf")
    if not positive:
        verdict = "positivity-violated"
    elif variation <= tol:
        verdict = "consistent-with-constant"
    else:
        verdict = "non-constant on window"
    logger.info(f"Liouville diagnostic ({theta.source}): variation {variation:.3e}, tolerance {tol:.3e} -> {verdict}")
    return LiouvilleVerdict(positive, stats["min"], float(variation), tol, verdict, theta.source)


@dataclass
class CompletenessVerdict:
    direction: str
    windows: List[float]
    window_integrals: List[float]
    exponent: Optional[float]
    verdict: str
    note: str = WINDOW_NOTE

    def to_dict(self) -> Dict:
        return {
            "direction": self.direction,
            "windows": self.windows,
            "window_integrals": self.window_integrals,
            "exponent": self.exponent,
            "verdict": self.verdict,
            "note": self.note,
        }


CompletenessSource = Union[EntireSolution, ExactPoly, GridField, Callable[[float], float]]


def _line_integrals_callable(u_tt: Callable[[float], float], windows: Sequence[float], sign: int) -> List[float]:
    total, previous, out = 0.0, 0.0, []
    for T in windows:
        piece, _ = quad(lambda s: np.sqrt(max(float(u_tt(sign * s)), 0.0)), previous, T, limit=200)
        total += piece
        previous = T
        out.append(total)
    return out


def _line_integrals_grid(u: GridField, x: Sequence[float], windows: Sequence[float], sign: int) -> List[float]:
    axes = u.axes()
    col = tuple(int(np.argmin(np.abs(ax - xi))) for ax, xi in zip(axes[1:], x))
    t = axes[0]
    u_tt = np.gradient(np.gradient(u.values[(slice(None),) + col], t, edge_order=2), t, edge_order=2)
    root = np.sqrt(np.clip(u_tt, 0.0, None))
    origin = float(np.clip(0.0, t[0], t[-1]))
    out = []
    for T in windows:
        lo, hi = (origin, origin + T) if sign > 0 else (origin - T, origin)
        mask = (t >= lo - 1e-12) & (t <= hi + 1e-12)
        out.append(float(trapezoid(root[mask], t[mask])) if mask.sum() >= 2 else 0.0)
    return out


def completeness_diagnostic(source: CompletenessSource, x: Optional[Sequence[float]] = None,
                            windows: Sequence[float] = (1, 2, 4, 8, 16, 32),
                            diverging_exponent: float = 0.2,
                            bounded_exponent: float = 0.02) -> List[CompletenessVerdict]:
    """
    L(T) = integral of sqrt(u_tt) over [0, +-T] along the line through x.

    A power-law fit over the later windows labels each direction
    "diverging", "bounded-on-window" or "inconclusive".
    """
    windows = sorted(float(T) for T in windows)
    if not windows or windows[0] <= 0:
        raise InvalidInputError(f"Completeness windows must be positive, got {windows}")

    if isinstance(source, GridField):
        x = list(x) if x is not None else [0.5 * (lo + hi) for lo, hi in source.box[1:]]
        t_lo, t_hi = source.box[0]
        origin = min(max(0.0, t_lo), t_hi)
        reach = {1: t_hi - origin, -1: origin - t_lo}
        line = None
    else:
        if isinstance(source, EntireSolution):
            value = float(2 * source.a)

            def line(t):
                return value
        elif isinstance(source, ExactPoly):
            if not source.has_t:
                raise InvalidInputError("completeness_diagnostic needs u in (t, x1..xn)")
            point = list(x) if x is not None else [0.0] * source.n_spatial
            f = source.derivative(0, 2).to_callable()

            def line(t):
                return float(f(t, *point))
        elif callable(source):
            line = source
        else:
            raise InvalidInputError(f"Unsupported completeness source {type(source).__name__}")

    verdicts = []
    for sign, label in ((1, "+t"), (-1, "-t")):
        used = windows
        if line is None:
            used = [T for T in windows if T <= reach[sign] + 1e-12]
            if len(used) < len(windows):
                logger.warning(f"Completeness {label}: windows beyond the grid's t-extent dropped ({len(windows) - len(used)})")
            integrals = _line_integrals_grid(source, x, used, sign) if used else []
        else:
            integrals = _line_integrals_callable(line, used, sign)
        verdicts.append(_classify(label, used, integrals, diverging_exponent, bounded_exponent))
    return verdicts


def _classify(label: str, windows: List[float], integrals: List[float],
              diverging_exponent: float, bounded_exponent: float) -> CompletenessVerdict:
    if len(windows) < 2 or integrals[-1] <= 0:
        verdict = "bounded-on-window" if integrals and integrals[-1] <= 0 else "inconclusive"
        return CompletenessVerdict(label, windows, integrals, None, verdict)
    tail = max(2, (len(windows) + 1) // 2)
    T = np.asarray(windows[-tail:])
    L = np.maximum(np.asarray(integrals[-tail:]), np.finfo(float).tiny)
    exponent = float(np.polyfit(np.log(T), np.log(L), 1)[0])
    if exponent >= diverging_exponent:
        verdict = "diverging"
    elif exponent <= bounded_exponent:
        verdict = "bounded-on-window"
    else:
        verdict = "inconclusive"
    logger.info(f"Completeness {label}: exponent {exponent:.3f} -> {verdict}")
    return CompletenessVerdict(label, windows, integrals, exponent, verdict)
