# ----------------------------------------------------------------------
#  Entire Solution Builder
#
#  u(t, x) = a t^2 + t b(x) + g(x) with b harmonic and
#  laplacian(g) = (1 + |grad b|^2) / 2a, built and certified exactly.
# ----------------------------------------------------------------------

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple, Union

from errors import ConstraintViolationError, InternalConsistencyError, InvalidInputError, UnsupportedError
from polycore import ExactPoly, gradient_norm_sq, harmonic_basis, invert_laplacian, laplacian
from verifier import q_operator_symbolic

logger = logging.getLogger(__name__)

Rational = Union[int, Fraction, str]


@dataclass(frozen=True)
class EntireSolution:
    """One member of the polynomial solution family (u_tt = 2a)."""
    n: int
    a: Fraction
    b: ExactPoly  # harmonic part, spatial layout
    g: ExactPoly  # Poisson part, spatial layout
    u: ExactPoly  # (t, x) layout

    @property
    def h(self) -> ExactPoly:
        """Right-hand side (1 + |grad b|^2) / 2a of the Poisson equation for g."""
        return (gradient_norm_sq(self.b) + 1) / (2 * self.a)

    def q_residual(self) -> ExactPoly:
        return q_operator_symbolic(self.u) - 1


@dataclass(frozen=True)
class CatalogEntry:
    label: str
    n: int
    a: Fraction
    b: ExactPoly
    harmonic_extra: Optional[ExactPoly] = None

    def build(self) -> EntireSolution:
        return build_entire_solution(self.a, self.b, self.n, self.harmonic_extra)


def _as_spatial(p: ExactPoly, n: int, name: str) -> ExactPoly:
    if p.has_t:
        if p.depends_on(0):
            raise InvalidInputError(f"{name} must not depend on t, got {p}")
        p = p.drop_t()
    if p.nvars != n:
        raise InvalidInputError(f"{name} has {p.nvars} spatial variables, expected n={n}")
    return p


def _require_harmonic(p: ExactPoly, name: str) -> None:
    residual = laplacian(p)
    if not residual.is_zero:
        raise ConstraintViolationError(f"{name} is not harmonic: laplacian({name}) = {residual}", residual)


def assemble_u(a: Fraction, b: ExactPoly, g: ExactPoly) -> ExactPoly:
    """a t^2 + t b + g in the (t, x) layout."""
    nvars = b.nvars + 1
    t = ExactPoly.variable(0, nvars, has_t=True)
    return t * t * a + t * b.lift_t() + g.lift_t()


def build_entire_solution(a: Rational, b: ExactPoly, n: int,
                          harmonic_extra: Optional[ExactPoly] = None) -> EntireSolution:
    """
    Construct u = a t^2 + t b + g with g = invert_laplacian(h) + harmonic_extra.

    Args:
        a: positive rational (u_tt = 2a)
        b: harmonic polynomial in x1..xn (checked, never trusted)
        n: spatial dimension
        harmonic_extra: optional harmonic polynomial added to g

    Returns:
        EntireSolution whose u satisfies Q(D^2 u) = 1 identically
    """
    a = Fraction(a)
    if a <= 0:
        raise InvalidInputError(f"invalid-parameter: a must be positive, got {a}")
    if n < 1:
        raise InvalidInputError(f"Spatial dimension must be >= 1, got {n}")
    b = _as_spatial(b, n, "b")
    _require_harmonic(b, "b")

    h = (gradient_norm_sq(b) + 1) / (2 * a)
    g = invert_laplacian(h)
    if harmonic_extra is not None:
        extra = _as_spatial(harmonic_extra, n, "harmonic_extra")
        _require_harmonic(extra, "harmonic_extra")
        g = g + extra

    u = assemble_u(a, b, g)
    residual = q_operator_symbolic(u) - 1
    if not residual.is_zero:
        raise InternalConsistencyError(f"Built solution fails Q(D^2u) = 1, residual {residual}")
    logger.debug(f"Built entire solution n={n}, a={a}, b={b}, deg g={g.degree}")
    return EntireSolution(n=n, a=a, b=b, g=g, u=u)


def split_g(sol: EntireSolution) -> Tuple[ExactPoly, Fraction]:
    """
    Write g = b^2/4a + f and return (f, laplacian(f)).

    laplacian(f) is the constant 1/(2a); it equals 1 only when a = 1/2.
    """
    f = sol.g - sol.b * sol.b / (4 * sol.a)
    lap_f = laplacian(f)
    if not lap_f.is_constant:
        raise InternalConsistencyError(f"laplacian(f) is not constant ({lap_f}); the solution is corrupted")
    return f, lap_f.constant_value


def classify_constant_utt(u: ExactPoly) -> EntireSolution:
    """
    Recognize a polynomial solution with constant u_tt as a family member.

    Raises UnsupportedError when u_tt is not a positive constant and
    ConstraintViolationError when b is not harmonic or g fails its Poisson
    equation.
    """
    if not u.has_t:
        raise InvalidInputError("classify_constant_utt expects a polynomial in (t, x)")
    u_tt = u.derivative(0, 2)
    if not u_tt.is_constant or u_tt.constant_value <= 0:
        raise UnsupportedError(f"u_tt = {u_tt} is not a positive constant")
    a = u_tt.constant_value / 2
    b = u.coefficient_in_t(1)
    g = u.coefficient_in_t(0)
    _require_harmonic(b, "b")
    residual = laplacian(g) - (gradient_norm_sq(b) + 1) / (2 * a)
    if not residual.is_zero:
        raise ConstraintViolationError(f"g fails its Poisson equation, residual {residual}", residual)
    return EntireSolution(n=u.n_spatial, a=a, b=b, g=g, u=u)


# ----------------------------------------------------------------------
# Catalogs
# ----------------------------------------------------------------------

def harmonic_catalog(n: int, max_degree: int = 4) -> List[Tuple[str, ExactPoly]]:
    """Harmonic polynomials for b, enumerated over harmonic_basis(n, d), d <= max_degree."""
    catalog = []
    for d in range(max_degree + 1):
        for k, p in enumerate(harmonic_basis(n, d)):
            catalog.append((f"n{n}-d{d}-{k}", p))
    return catalog


def solution_catalog(max_degree: int = 4) -> List[CatalogEntry]:
    """(a, b, harmonic_extra) triples spanning n = 1, 2, 3 and degrees <= max_degree."""
    entries: List[CatalogEntry] = []
    amounts = [Fraction(1, 2), Fraction(1), Fraction(3, 2)]

    for label, b in harmonic_catalog(1, min(max_degree, 1)):
        for a in amounts:
            entries.append(CatalogEntry(f"{label}-a{a}", 1, a, b))

    for label, b in harmonic_catalog(2, max_degree):
        entries.append(CatalogEntry(f"{label}-a1/2", 2, Fraction(1, 2), b))
    basis2 = harmonic_basis(2, 2)
    mixed = basis2[0] + basis2[1] * 3 + ExactPoly.variable(0, 2)
    entries.append(CatalogEntry("n2-mixed-a2", 2, Fraction(2), mixed))

    extras = [p for d in (3, 6) if d <= max_degree + 2 for p in harmonic_basis(2, d)[:1]]
    for k, extra in enumerate(extras):
        entries.append(CatalogEntry(f"n2-extra{k}-a1", 2, Fraction(1), basis2[0], extra))

    for label, b in harmonic_catalog(3, min(max_degree, 3)):
        entries.append(CatalogEntry(f"{label}-a1", 3, Fraction(1), b))
    if max_degree >= 4:
        entries.append(CatalogEntry("n3-d4-0-a1/2", 3, Fraction(1, 2), harmonic_basis(3, 4)[0]))
        x1x2x3 = ExactPoly(3, {(1, 1, 1): 1})
        entries.append(CatalogEntry("n3-extra-a1", 3, Fraction(1), ExactPoly.variable(2, 3), x1x2x3))
    return entries


# ----------------------------------------------------------------------
# Solution bundles
# ----------------------------------------------------------------------

def solution_to_bundle(sol: EntireSolution) -> Dict[str, Any]:
    return {
        "n": sol.n,
        "a": f"{sol.a.numerator}/{sol.a.denominator}",
        "b": sol.b.to_dict(),
        "g": sol.g.to_dict(),
        "u": sol.u.to_dict(),
    }


def solution_from_bundle(data: Dict[str, Any], verify: bool = True) -> EntireSolution:
    """
    Load a bundle; with verify set, the identity Q(D^2u) = 1 and the family
    structure are re-certified and a tampered bundle raises
    ConstraintViolationError carrying Q(D^2u) - 1.
    """
    try:
        n = int(data["n"])
        a = Fraction(str(data["a"]))
        b = ExactPoly.from_dict(data["b"])
        g = ExactPoly.from_dict(data["g"])
        u = ExactPoly.from_dict(data["u"])
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as e:
        raise InvalidInputError(f"Malformed solution bundle: {e}") from e
    sol = EntireSolution(n=n, a=a, b=_as_spatial(b, n, "b"), g=_as_spatial(g, n, "g"), u=u)
    if verify:
        if not u.has_t or u.nvars != n + 1:
            raise InvalidInputError(f"u must be a polynomial in (t, x1..x{n})")
        residual = sol.q_residual()
        if not residual.is_zero:
            raise ConstraintViolationError(f"Bundle fails Q(D^2u) = 1: residual {residual}", residual)
        mismatch = u - assemble_u(a, sol.b, sol.g)
        if not mismatch.is_zero:
            raise ConstraintViolationError(f"u differs from a t^2 + t b + g by {mismatch}", mismatch)
        _require_harmonic(sol.b, "b")
    return sol
