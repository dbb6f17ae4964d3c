# ----------------------------------------------------------------------
#  Complex Side (n = 2)
#
#  1. BiPoly: exact polynomials in (z, zb, w, wb), Gaussian-rational coefficients
#  2. Complex Monge-Ampere family det(v_ij) = 1 built by inverting d^2/dw dwb
#  3. Bridge to the real operator through the s-independent extension
#  4. Finite-difference Kahler curvature spot checks
#
#  Wirtinger convention: d/dz = (d/dt - i d/ds) / 2 for z = t + i s.
# ----------------------------------------------------------------------

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ConstraintViolationError, InternalConsistencyError, InvalidInputError, UnsupportedError
from polycore import ExactPoly
from settings import optimal_workers
from verifier import q_operator_symbolic

logger = logging.getLogger(__name__)

BIPOLY_NAMES = ["z", "zb", "w", "wb"]
Z, ZB, W, WB = range(4)

Scalar = Union[int, Fraction]


def _reflect(exps: Tuple[int, ...]) -> Tuple[int, ...]:
    p, q, r, s = exps
    return (q, p, s, r)


@dataclass(frozen=True)
class BiPoly:
    """Polynomial in (z, zb, w, wb) stored as real and imaginary ExactPoly parts."""
    real: ExactPoly
    imag: ExactPoly

    def __post_init__(self):
        for part in (self.real, self.imag):
            if part.nvars != 4 or part.has_t:
                raise InvalidInputError(f"BiPoly parts must be polynomials in 4 variables, got {part.nvars}")

    @classmethod
    def zero(cls) -> "BiPoly":
        return cls(ExactPoly.zero(4), ExactPoly.zero(4))

    @classmethod
    def constant(cls, re: Scalar = 0, im: Scalar = 0) -> "BiPoly":
        return cls(ExactPoly.constant(re, 4), ExactPoly.constant(im, 4))

    @classmethod
    def monomial(cls, exps: Sequence[int], re: Scalar = 1, im: Scalar = 0) -> "BiPoly":
        key = tuple(exps)
        return cls(ExactPoly(4, {key: re}), ExactPoly(4, {key: im}))

    @classmethod
    def var(cls, name: str) -> "BiPoly":
        if name not in BIPOLY_NAMES:
            raise InvalidInputError(f"Unknown complex variable {name!r}; expected one of {BIPOLY_NAMES}")
        return cls(ExactPoly.variable(BIPOLY_NAMES.index(name), 4), ExactPoly.zero(4))

    @classmethod
    def from_dict(cls, data: Dict) -> "BiPoly":
        try:
            return cls(ExactPoly.from_dict(data["real"]), ExactPoly.from_dict(data["imag"]))
        except (KeyError, TypeError) as e:
            raise InvalidInputError(f"Malformed BiPoly JSON: {e}") from e

    # ------------------------------------------------------------------
    # Arithmetic
    # ------------------------------------------------------------------

    def _coerce(self, other) -> "BiPoly":
        if isinstance(other, BiPoly):
            return other
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return BiPoly.constant(other)
        return NotImplemented

    def __add__(self, other) -> "BiPoly":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return BiPoly(self.real + other.real, self.imag + other.imag)

    __radd__ = __add__

    def __neg__(self) -> "BiPoly":
        return BiPoly(-self.real, -self.imag)

    def __sub__(self, other) -> "BiPoly":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return BiPoly(self.real - other.real, self.imag - other.imag)

    def __rsub__(self, other) -> "BiPoly":
        return (-self) + other

    def __mul__(self, other) -> "BiPoly":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return BiPoly(self.real * other.real - self.imag * other.imag,
                      self.real * other.imag + self.imag * other.real)

    __rmul__ = __mul__

    def __truediv__(self, scalar: Scalar) -> "BiPoly":
        return BiPoly(self.real / scalar, self.imag / scalar)

    def __pow__(self, exponent: int) -> "BiPoly":
        if not isinstance(exponent, int) or exponent < 0:
            raise InvalidInputError(f"BiPoly powers must be non-negative integers, got {exponent!r}")
        result = BiPoly.constant(1)
        for _ in range(exponent):
            result = result * self
        return result

    def times_i(self) -> "BiPoly":
        return BiPoly(-self.imag, self.real)

    def __eq__(self, other) -> bool:
        other = self._coerce(other)
        if other is NotImplemented:
            return False
        return self.real == other.real and self.imag == other.imag

    def __hash__(self) -> int:
        return hash((self.real, self.imag))

    # ------------------------------------------------------------------
    # Structure
    # ------------------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return self.real.is_zero and self.imag.is_zero

    @property
    def degree(self) -> int:
        return max(self.real.degree, self.imag.degree)

    def depends_on(self, name: str) -> bool:
        index = BIPOLY_NAMES.index(name)
        return self.real.depends_on(index) or self.imag.depends_on(index)

    def conjugate(self) -> "BiPoly":
        """Complex conjugate: z <-> zb, w <-> wb, coefficients conjugated."""
        real = ExactPoly(4, {_reflect(m): c for m, c in self.real.terms.items()})
        imag = ExactPoly(4, {_reflect(m): -c for m, c in self.imag.terms.items()})
        return BiPoly(real, imag)

    @property
    def is_real(self) -> bool:
        return self == self.conjugate()

    def wirtinger(self, name: str, order: int = 1) -> "BiPoly":
        """d/dz, d/dzb, d/dw or d/dwb, treating z and zb as independent."""
        if name not in BIPOLY_NAMES:
            raise InvalidInputError(f"Unknown complex variable {name!r}")
        index = BIPOLY_NAMES.index(name)
        return BiPoly(self.real.derivative(index, order), self.imag.derivative(index, order))

    def to_callable(self) -> Callable[..., np.ndarray]:
        """Vectorised evaluator f(z, w) over complex arrays."""
        re_f = self.real.to_callable(complex)
        im_f = self.imag.to_callable(complex)

        def evaluate(z, w):
            z = np.asarray(z, dtype=complex)
            w = np.asarray(w, dtype=complex)
            args = (z, np.conj(z), w, np.conj(w))
            return re_f(*args) + 1j * im_f(*args)

        return evaluate

    def evaluate(self, z: complex, w: complex) -> complex:
        return complex(self.to_callable()(z, w))

    def to_dict(self) -> Dict:
        return {"real": self.real.to_dict(), "imag": self.imag.to_dict()}

    def to_string(self) -> str:
        re_text = self.real.to_string(BIPOLY_NAMES)
        if self.imag.is_zero:
            return re_text
        im_text = self.imag.to_string(BIPOLY_NAMES)
        if self.real.is_zero:
            return f"I*({im_text})"
        return f"{re_text} + I*({im_text})"

    def __str__(self) -> str:
        return self.to_string()

    def __repr__(self) -> str:
        return f"BiPoly({self.to_string()!r})"


def compose(poly: ExactPoly, images: Sequence[BiPoly]) -> BiPoly:
    """Substitute BiPoly images for the variables of a real polynomial."""
    if len(images) != poly.nvars:
        raise InvalidInputError(f"Need {poly.nvars} images, got {len(images)}")
    powers: Dict[Tuple[int, int], BiPoly] = {}
    result = BiPoly.zero()
    for exps, coeff in poly.terms.items():
        term = BiPoly.constant(coeff)
        for i, k in enumerate(exps):
            if k:
                if (i, k) not in powers:
                    powers[(i, k)] = images[i] ** k
                term = term * powers[(i, k)]
        result = result + term
    return result


# ----------------------------------------------------------------------
# Complex Hessian
# ----------------------------------------------------------------------

@dataclass
class HermitianForm2:
    h_zzbar: float
    h_wwbar: float
    h_zwbar: complex

    @property
    def determinant(self) -> float:
        return self.h_zzbar * self.h_wwbar - abs(self.h_zwbar) ** 2

    @property
    def positive_definite(self) -> bool:
        return self.h_zzbar > 0 and self.determinant > 0

    def matrix(self) -> np.ndarray:
        return np.array([[self.h_zzbar, self.h_zwbar],
                         [np.conj(self.h_zwbar), self.h_wwbar]], dtype=complex)

    def to_dict(self) -> Dict:
        return {
            "h_zzbar": self.h_zzbar,
            "h_wwbar": self.h_wwbar,
            "h_zwbar": {"re": self.h_zwbar.real, "im": self.h_zwbar.imag},
            "det": self.determinant,
        }


def hessian_entries(v: BiPoly) -> Dict[str, BiPoly]:
    """Mixed Wirtinger second derivatives v_zzb, v_wwb, v_zwb, v_wzb."""
    return {
        "zzbar": v.wirtinger("z").wirtinger("zb"),
        "wwbar": v.wirtinger("w").wirtinger("wb"),
        "zwbar": v.wirtinger("z").wirtinger("wb"),
        "wzbar": v.wirtinger("w").wirtinger("zb"),
    }


def complex_hessian_determinant(v: BiPoly) -> BiPoly:
    """v_zzb * v_wwb - v_zwb * v_wzb as an exact BiPoly."""
    e = hessian_entries(v)
    return e["zzbar"] * e["wwbar"] - e["zwbar"] * e["wzbar"]


def conjugation_residual(v: BiPoly) -> BiPoly:
    """v_wzb - conj(v_zwb); the zero BiPoly whenever v is real-valued."""
    e = hessian_entries(v)
    return e["wzbar"] - e["zwbar"].conjugate()


def complex_hessian(v: BiPoly, point: Tuple[complex, complex]) -> HermitianForm2:
    z, w = point
    e = hessian_entries(v)
    return HermitianForm2(
        h_zzbar=e["zzbar"].evaluate(z, w).real,
        h_wwbar=e["wwbar"].evaluate(z, w).real,
        h_zwbar=e["zwbar"].evaluate(z, w),
    )


# ----------------------------------------------------------------------
# Complex Monge-Ampere family
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CMASolution:
    """v = a z zb + f + z b + zb conj(b) + g with det(v_ij) = 1."""
    a: Fraction
    b: BiPoly
    f: BiPoly
    g: BiPoly
    v: BiPoly

    def to_dict(self) -> Dict:
        return {
            "a": f"{self.a.numerator}/{self.a.denominator}",
            "b": str(self.b),
            "f": str(self.f),
            "g": str(self.g),
            "v": str(self.v),
            "v_poly": self.v.to_dict(),
        }


def _require_only(p: BiPoly, allowed: Sequence[str], name: str) -> None:
    stray = [n for n in BIPOLY_NAMES if n not in allowed and p.depends_on(n)]
    if stray:
        raise InvalidInputError(f"{name} may only depend on {list(allowed)}, found {stray}")


def invert_ddbar(h: BiPoly) -> BiPoly:
    """
    Canonical g with d^2 g / dw dwb = h for h in (w, wb) only.

    w^p wb^q maps to w^(p+1) wb^(q+1) / ((p+1)(q+1)); the pluriharmonic
    kernel is fixed to zero.
    """
    _require_only(h, ("w", "wb"), "h")

    def lift(part: ExactPoly) -> ExactPoly:
        terms = {}
        for (p0, q0, p, q), c in part.terms.items():
            terms[(p0, q0, p + 1, q + 1)] = c / ((p + 1) * (q + 1))
        return ExactPoly(4, terms)

    g = BiPoly(lift(h.real), lift(h.imag))
    residual = g.wirtinger("w").wirtinger("wb") - h
    if not residual.is_zero:
        raise InternalConsistencyError(f"d^2/dw dwb inversion left residual {residual}")
    return g


def build_cma_solution(a, b: BiPoly, f: Optional[BiPoly] = None) -> CMASolution:
    """
    Construct a member of the complex Monge-Ampere family.

    Args:
        a: positive rational
        b: polynomial in (w, wb) with d^2 b / dw dwb = 0
        f: real polynomial in (z, zb) with d^2 f / dz dzb = 0 (default 0)

    Returns:
        CMASolution whose complex Hessian determinant is exactly 1
    """
    a = Fraction(a)
    if a <= 0:
        raise InvalidInputError(f"invalid-parameter: a must be positive, got {a}")
    f = f if f is not None else BiPoly.zero()

    _require_only(b, ("w", "wb"), "b")
    b_residual = b.wirtinger("w").wirtinger("wb")
    if not b_residual.is_zero:
        raise ConstraintViolationError(f"b violates d^2b/dw dwb = 0: {b_residual}", b_residual)

    _require_only(f, ("z", "zb"), "f")
    f_residual = f.wirtinger("z").wirtinger("zb")
    if not f_residual.is_zero:
        raise ConstraintViolationError(f"f violates d^2f/dz dzb = 0: {f_residual}", f_residual)
    if not f.is_real:
        f_imag = f - f.conjugate()
        raise ConstraintViolationError(f"f is not real-valued: f - conj(f) = {f_imag}", f_imag)

    db = b.wirtinger("wb")
    rhs = (db * db.conjugate() + 1) / a
    g = invert_ddbar(rhs)

    z, zb = BiPoly.var("z"), BiPoly.var("zb")
    v = z * zb * a + f + z * b + zb * b.conjugate() + g

    det = complex_hessian_determinant(v)
    if not (det - 1).is_zero:
        raise InternalConsistencyError(f"Built potential has det(v_ij) = {det}, expected 1")
    logger.debug(f"Built complex Monge-Ampere member a={a}, b={b}: v = {v}")
    return CMASolution(a=a, b=b, f=f, g=g, v=v)


@dataclass(frozen=True)
class CMAEntry:
    label: str
    a: Fraction
    b: BiPoly
    f: BiPoly = field(default_factory=BiPoly.zero)

    def build(self) -> CMASolution:
        return build_cma_solution(self.a, self.b, self.f)


def cma_catalog() -> List[CMAEntry]:
    """Members with b of degree <= 3, several a and f."""
    m = BiPoly.monomial
    wb, w = m((0, 0, 0, 1)), m((0, 0, 1, 0))
    z_plus_zb = m((1, 0, 0, 0)) + m((0, 1, 0, 0))
    z2_plus_zb2 = m((2, 0, 0, 0)) + m((0, 2, 0, 0))
    i_z_minus_zb = m((1, 0, 0, 0), 0, 1) + m((0, 1, 0, 0), 0, -1)
    return [
        CMAEntry("flat-a1", Fraction(1), BiPoly.zero()),
        CMAEntry("wb-a1", Fraction(1), wb),
        CMAEntry("w-a1", Fraction(1), w),
        CMAEntry("wb2-a2", Fraction(2), m((0, 0, 0, 2))),
        CMAEntry("w2-a1/2", Fraction(1, 2), m((0, 0, 2, 0))),
        CMAEntry("w-plus-wb-a1", Fraction(1), w + wb + 1),
        CMAEntry("wb3-a1", Fraction(1), m((0, 0, 0, 3))),
        CMAEntry("w3-plus-wb2-a3", Fraction(3), m((0, 0, 3, 0)) + m((0, 0, 0, 2))),
        CMAEntry("gauss-wb-a1", Fraction(1), m((0, 0, 0, 1), 1, 1)),
        CMAEntry("i-wb2-a2", Fraction(2), m((0, 0, 0, 2), 0, 1)),
        CMAEntry("wb-f-linear-a1", Fraction(1), wb, z_plus_zb),
        CMAEntry("wb2-f-quadratic-a2", Fraction(2), m((0, 0, 0, 2)), z2_plus_zb2),
        CMAEntry("w-f-imaginary-a1/2", Fraction(1, 2), w, i_z_minus_zb),
    ]


# ----------------------------------------------------------------------
# Real-to-complex bridge
# ----------------------------------------------------------------------

def extension_images() -> List[BiPoly]:
    """t = (z + zb)/2, x1 = (w + wb)/2, x2 = (w - wb)/(2i)."""
    z, zb, w, wb = (BiPoly.var(n) for n in BIPOLY_NAMES)
    return [(z + zb) / 2, (w + wb) / 2, (wb - w).times_i() / 2]


def s_independent_extension(u: ExactPoly) -> BiPoly:
    """The potential v(z, w) = u(Re z, Re w, Im w), constant in s = Im z."""
    if not u.has_t or u.n_spatial != 2:
        raise UnsupportedError(f"The complex bridge needs n = 2, got n = {u.n_spatial if u.has_t else u.nvars}")
    return compose(u, extension_images())


@dataclass
class BridgeReport:
    samples: int
    seed: int
    tolerance: float
    symbolic_identity: bool
    symbolic_residual: str
    max_identity_error: float
    max_component_errors: Dict[str, float]
    hessian_samples: List[Dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.symbolic_identity and self.max_identity_error <= self.tolerance

    def to_dict(self) -> Dict:
        return {
            "samples": self.samples,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "symbolic_identity": self.symbolic_identity,
            "symbolic_residual": self.symbolic_residual,
            "max_identity_error": self.max_identity_error,
            "max_component_errors": self.max_component_errors,
            "hessian_samples": self.hessian_samples,
            "passed": self.passed,
        }


def _bridge_chunk(entries: Dict[str, Callable], real: Dict[str, Callable], pts: np.ndarray) -> Dict[str, float]:
    t, s, x1, x2 = pts.T
    z, w = t + 1j * s, x1 + 1j * x2
    v_zz = entries["zzbar"](z, w)
    v_ww = entries["wwbar"](z, w)
    v_zw = entries["zwbar"](z, w)
    det = v_zz * v_ww - np.abs(v_zw) ** 2
    q = real["Q"](t, x1, x2)
    u_tt = real["u_tt"](t, x1, x2)
    lap = real["laplacian"](t, x1, x2)
    grad_sq = real["grad_ut_sq"](t, x1, x2)

    def rel(a, b):
        return float(np.max(np.abs(a - b) / (1.0 + np.abs(b)))) if len(pts) else 0.0

    return {
        "identity": rel(16 * det, q),
        "v_zzbar": rel(v_zz, u_tt / 4),
        "v_wwbar": rel(v_ww, lap / 4),
        "v_zwbar_sq": rel(np.abs(v_zw) ** 2, grad_sq / 16),
    }


def real_to_complex_bridge(u: ExactPoly, samples: int = 100, seed: int = 0,
                           tolerance: float = 1e-12, workers: Optional[int] = None) -> BridgeReport:
    """
    Check 16 (v_zzb v_wwb - |v_zwb|^2) = Q(D^2u) for the s-independent extension.

    The identity is certified as exact BiPoly algebra, then sampled at
    seeded random points (relative error against 1 + |Q|).
    """
    v = s_independent_extension(u)
    images = extension_images()
    q = q_operator_symbolic(u)
    residual = complex_hessian_determinant(v) * 16 - compose(q, images)

    u_t = u.derivative(0)
    grad_sq = u_t.derivative(1) ** 2 + u_t.derivative(2) ** 2
    real = {
        "Q": q.to_callable(),
        "u_tt": u.derivative(0, 2).to_callable(),
        "laplacian": (u.derivative(1, 2) + u.derivative(2, 2)).to_callable(),
        "grad_ut_sq": grad_sq.to_callable(),
    }
    entries = {name: p.to_callable() for name, p in hessian_entries(v).items()}

    rng = np.random.default_rng(seed)
    points = rng.uniform(-1.0, 1.0, size=(samples, 4))
    chunks = [c for c in np.array_split(points, max(1, workers or optimal_workers())) if len(c)]
    with ThreadPoolExecutor(max_workers=max(1, len(chunks))) as executor:
        results = list(executor.map(lambda c: _bridge_chunk(entries, real, c), chunks))

    keys = ("identity", "v_zzbar", "v_wwbar", "v_zwbar_sq")
    worst = {k: max((r[k] for r in results), default=0.0) for k in keys}
    head = [
        {"t": float(p[0]), "s": float(p[1]), "x1": float(p[2]), "x2": float(p[3]),
         **complex_hessian(v, (complex(p[0], p[1]), complex(p[2], p[3]))).to_dict()}
        for p in points[:3]
    ]
    report = BridgeReport(
        samples=samples,
        seed=seed,
        tolerance=tolerance,
        symbolic_identity=residual.is_zero,
        symbolic_residual=str(residual),
        max_identity_error=worst.pop("identity"),
        max_component_errors=worst,
        hessian_samples=head,
    )
    logger.info(f"Bridge identity: symbolic={report.symbolic_identity}, max sampled error {report.max_identity_error:.2e}")
    return report


# ----------------------------------------------------------------------
# Curvature spot check
# ----------------------------------------------------------------------

def _metric_function(v: BiPoly) -> Callable[[np.ndarray], np.ndarray]:
    e = {k: p.to_callable() for k, p in hessian_entries(v).items()}

    def metric(x: np.ndarray) -> np.ndarray:
        z, w = complex(x[0], x[1]), complex(x[2], x[3])
        return np.array([[e["zzbar"](z, w), e["zwbar"](z, w)],
                         [e["wzbar"](z, w), e["wwbar"](z, w)]], dtype=complex)

    return metric


def curvature_tensor(v: BiPoly, point: Tuple[complex, complex], h: float = 1e-2) -> np.ndarray:
    """
    R[i, j, k, l] = -d_k dbar_l g_ij + (d_k g Ginv dbar_l g)_ij by central differences.

    Real coordinates are (t, s, x1, x2) with z = t + i s, w = x1 + i x2.
    """
    if h <= 0:
        raise InvalidInputError(f"Curvature step must be positive, got {h}")
    metric = _metric_function(v)
    z, w = point
    x0 = np.array([z.real, z.imag, w.real, w.imag], dtype=float)
    g0 = metric(x0)
    if not np.all(np.linalg.eigvalsh((g0 + g0.conj().T) / 2) > 0):
        raise InvalidInputError(f"invalid-point: complex Hessian is not positive definite at {point}")

    basis = np.eye(4)
    d1 = [(metric(x0 + h * e) - metric(x0 - h * e)) / (2 * h) for e in basis]
    d2 = [[None] * 4 for _ in range(4)]
    for a in range(4):
        for b in range(4):
            if a == b:
                d2[a][b] = (metric(x0 + h * basis[a]) - 2 * g0 + metric(x0 - h * basis[a])) / h ** 2
            else:
                ea, eb = h * basis[a], h * basis[b]
                d2[a][b] = (metric(x0 + ea + eb) - metric(x0 + ea - eb)
                            - metric(x0 - ea + eb) + metric(x0 - ea - eb)) / (4 * h * h)

    ginv = np.linalg.inv(g0)
    R = np.zeros((2, 2, 2, 2), dtype=complex)
    for k in range(2):
        kr, ki = 2 * k, 2 * k + 1
        dk = (d1[kr] - 1j * d1[ki]) / 2
        for l in range(2):
            lr, li = 2 * l, 2 * l + 1
            dbar_l = (d1[lr] + 1j * d1[li]) / 2
            dk_dbar_l = (d2[kr][lr] + 1j * d2[kr][li] - 1j * d2[ki][lr] + d2[ki][li]) / 4
            R[:, :, k, l] = -dk_dbar_l + dk @ ginv @ dbar_l
    return R


def curvature_spot_check(v: BiPoly, point: Tuple[complex, complex], h: float = 1e-2) -> float:
    """Largest |R_ijkl| at the point; zero up to truncation for flat metrics."""
    value = float(np.max(np.abs(curvature_tensor(v, point, h))))
    logger.debug(f"Curvature at {point} with h={h}: {value:.3e}")
    return value
