# ----------------------------------------------------------------------
#  Exact Polynomial Core
#
#  Multivariate polynomials in (t, x1..xn) with rational coefficients:
#  1. Closed exact arithmetic (add, multiply, scale, substitute, differentiate)
#  2. Differential operators (Laplacian, squared gradient norm)
#  3. Harmonic polynomial bases per homogeneous degree
#  4. Canonical inversion of the Laplacian (Fischer decomposition)
# ----------------------------------------------------------------------

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import sympy

from errors import InternalConsistencyError, InvalidInputError

logger = logging.getLogger(__name__)

Exponent = Tuple[int, ...]
Scalar = Union[int, Fraction]


def _to_fraction(value) -> Fraction:
    # floats would smuggle binary rounding into an exact tier
    if isinstance(value, (bool, float, complex)):
        raise InvalidInputError(f"Exact coefficients must be int, Fraction or 'p/q' strings, got {value!r}")
    try:
        return Fraction(value)
    except (TypeError, ValueError, ZeroDivisionError) as e:
        raise InvalidInputError(f"Not an exact rational: {value!r}") from e


def monomial_key(exps: Exponent) -> Tuple[int, Exponent]:
    """Graded lexicographic sort key (total degree first, then exponents)."""
    return (sum(exps), exps)


class ExactPoly:
    """
    Polynomial with exact rational coefficients.

    Variables are indexed 0..nvars-1. When `has_t` is set, index 0 is the
    t variable and the spatial variables x1..xn are indices 1..nvars-1;
    otherwise every variable is spatial. Instances are immutable.
    """

    __slots__ = ("nvars", "has_t", "_terms")

    def __init__(self, nvars: int, terms: Optional[Mapping[Exponent, Scalar]] = None, has_t: bool = False):
        if nvars < 0 or (has_t and nvars < 1):
            raise InvalidInputError(f"Invalid variable count {nvars} (has_t={has_t})")
        cleaned: Dict[Exponent, Fraction] = {}
        for exps, coeff in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars or any(e < 0 for e in exps):
                raise InvalidInputError(f"Exponent vector {exps} does not fit {nvars} variables")
            c = _to_fraction(coeff)
            if c != 0:
                cleaned[exps] = cleaned.get(exps, Fraction(0)) + c
                if cleaned[exps] == 0:
                    del cleaned[exps]
        object.__setattr__(self, "nvars", nvars)
        object.__setattr__(self, "has_t", bool(has_t))
        object.__setattr__(self, "_terms", cleaned)

    def __setattr__(self, name, value):
        raise AttributeError("ExactPoly is immutable")

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------

    @classmethod
    def _raw(cls, nvars: int, terms: Dict[Exponent, Fraction], has_t: bool) -> "ExactPoly":
        """Build from an already-pruned term map without re-validation."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "nvars", nvars)
        object.__setattr__(obj, "has_t", has_t)
        object.__setattr__(obj, "_terms", {e: c for e, c in terms.items() if c != 0})
        return obj

    @classmethod
    def zero(cls, nvars: int, has_t: bool = False) -> "ExactPoly":
        return cls._raw(nvars, {}, has_t)

    @classmethod
    def constant(cls, value: Scalar, nvars: int, has_t: bool = False) -> "ExactPoly":
        return cls(nvars, {(0,) * nvars: value}, has_t)

    @classmethod
    def variable(cls, index: int, nvars: int, has_t: bool = False) -> "ExactPoly":
        if not 0 <= index < nvars:
            raise InvalidInputError(f"Variable index {index} out of range for {nvars} variables")
        exps = [0] * nvars
        exps[index] = 1
        return cls(nvars, {tuple(exps): 1}, has_t)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExactPoly":
        """Inverse of to_dict; coefficients arrive as decimal-string num/den pairs."""
        try:
            nvars = int(data["nvars"])
            has_t = bool(data.get("has_t", False))
            terms = {}
            for term in data["terms"]:
                exps = tuple(int(e) for e in term["exp"])
                terms[exps] = terms.get(exps, Fraction(0)) + Fraction(int(term["num"]), int(term["den"]))
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as e:
            raise InvalidInputError(f"Malformed polynomial JSON: {e}") from e
        return cls(nvars, terms, has_t)

    # ------------------------------------------------------------------
    # Structure
    # ------------------------------------------------------------------

    @property
    def terms(self) -> Dict[Exponent, Fraction]:
        return dict(self._terms)

    @property
    def spatial_indices(self) -> Tuple[int, ...]:
        start = 1 if self.has_t else 0
        return tuple(range(start, self.nvars))

    @property
    def n_spatial(self) -> int:
        return len(self.spatial_indices)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    @property
    def is_constant(self) -> bool:
        return all(not any(e) for e in self._terms)

    @property
    def constant_value(self) -> Fraction:
        if not self.is_constant:
            raise InvalidInputError(f"Polynomial {self} is not constant")
        return self._terms.get((0,) * self.nvars, Fraction(0))

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(e) for e in self._terms), default=-1)

    def degree_in(self, index: int) -> int:
        self._check_indices([index])
        return max((e[index] for e in self._terms), default=-1)

    def depends_on(self, index: int) -> bool:
        return self.degree_in(index) > 0

    def sorted_terms(self) -> List[Tuple[Exponent, Fraction]]:
        """Terms in descending graded lexicographic order."""
        return sorted(self._terms.items(), key=lambda item: monomial_key(item[0]), reverse=True)

    def same_layout(self, other: "ExactPoly") -> bool:
        return self.nvars == other.nvars and self.has_t == other.has_t

    def _check_indices(self, indices: Iterable[int]) -> Tuple[int, ...]:
        indices = tuple(indices)
        for i in indices:
            if not isinstance(i, (int, np.integer)) or not 0 <= i < self.nvars:
                raise InvalidInputError(f"Unknown variable index {i} for a polynomial in {self.nvars} variables")
        return indices

    def _coerce(self, other) -> "ExactPoly":
        if isinstance(other, ExactPoly):
            if not self.same_layout(other):
                raise InvalidInputError(
                    f"Variable layouts differ: ({self.nvars}, has_t={self.has_t}) vs ({other.nvars}, has_t={other.has_t})"
                )
            return other
        return ExactPoly.constant(_to_fraction(other), self.nvars, self.has_t)

    # ------------------------------------------------------------------
    # Arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other) -> "ExactPoly":
        try:
            other = self._coerce(other)
        except InvalidInputError:
            if isinstance(other, ExactPoly):
                raise
            return NotImplemented
        res = dict(self._terms)
        for m, c in other._terms.items():
            res[m] = res.get(m, Fraction(0)) + c
        return ExactPoly._raw(self.nvars, res, self.has_t)

    __radd__ = __add__

    def __neg__(self) -> "ExactPoly":
        return ExactPoly._raw(self.nvars, {m: -c for m, c in self._terms.items()}, self.has_t)

    def __sub__(self, other) -> "ExactPoly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "ExactPoly":
        return (-self) + other

    def __mul__(self, other) -> "ExactPoly":
        if not isinstance(other, ExactPoly):
            try:
                factor = _to_fraction(other)
            except InvalidInputError:
                return NotImplemented
            return self.scale(factor)
        other = self._coerce(other)
        res: Dict[Exponent, Fraction] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                res[m] = res.get(m, Fraction(0)) + c1 * c2
        return ExactPoly._raw(self.nvars, res, self.has_t)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "ExactPoly":
        divisor = _to_fraction(other)
        if divisor == 0:
            raise InvalidInputError("Division of a polynomial by zero")
        return self.scale(1 / divisor)

    def __pow__(self, exponent: int) -> "ExactPoly":
        if not isinstance(exponent, int) or exponent < 0:
            raise InvalidInputError(f"Polynomial powers must be non-negative integers, got {exponent!r}")
        result = ExactPoly.constant(1, self.nvars, self.has_t)
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            base = base * base
            exponent >>= 1
        return result

    def scale(self, factor: Scalar) -> "ExactPoly":
        factor = _to_fraction(factor)
        return ExactPoly._raw(self.nvars, {m: c * factor for m, c in self._terms.items()}, self.has_t)

    def __eq__(self, other) -> bool:
        if isinstance(other, ExactPoly):
            return self.same_layout(other) and self._terms == other._terms
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return self.is_constant and self.constant_value == other
        return NotImplemented

    def __hash__(self) -> int:
        if self.is_constant:
            return hash(self.constant_value)
        return hash((self.nvars, self.has_t, frozenset(self._terms.items())))

    def __bool__(self) -> bool:
        return bool(self._terms)

    # ------------------------------------------------------------------
    # Calculus and composition
    # ------------------------------------------------------------------

    def derivative(self, index: int, order: int = 1) -> "ExactPoly":
        """Exact partial derivative of the given order in one variable."""
        self._check_indices([index])
        res: Dict[Exponent, Fraction] = {}
        for m, c in self._terms.items():
            e = m[index]
            if e < order:
                continue
            factor = 1
            for k in range(order):
                factor *= e - k
            new = list(m)
            new[index] = e - order
            key = tuple(new)
            res[key] = res.get(key, Fraction(0)) + c * factor
        return ExactPoly._raw(self.nvars, res, self.has_t)

    def substitute(self, images: Sequence["ExactPoly"]) -> "ExactPoly":
        """
        Compose: replace variable i by images[i].

        All images must share one layout; the result lives in that layout.
        """
        if len(images) != self.nvars:
            raise InvalidInputError(f"Need {self.nvars} images for substitution, got {len(images)}")
        if not images:
            return self
        target = images[0]
        for img in images[1:]:
            target._coerce(img)
        powers: Dict[Tuple[int, int], ExactPoly] = {}

        def power(i: int, k: int) -> ExactPoly:
            if (i, k) not in powers:
                powers[(i, k)] = images[i] ** k
            return powers[(i, k)]

        result = ExactPoly.zero(target.nvars, target.has_t)
        for m, c in self._terms.items():
            term = ExactPoly.constant(c, target.nvars, target.has_t)
            for i, k in enumerate(m):
                if k:
                    term = term * power(i, k)
            result = result + term
        return result

    def lift_t(self) -> "ExactPoly":
        """Embed a spatial-only polynomial into the (t, x) layout."""
        if self.has_t:
            return self
        return ExactPoly._raw(self.nvars + 1, {(0,) + m: c for m, c in self._terms.items()}, True)

    def drop_t(self) -> "ExactPoly":
        """Restrict a t-free polynomial in the (t, x) layout to spatial variables."""
        if not self.has_t:
            return self
        if self.depends_on(0):
            raise InvalidInputError(f"Polynomial depends on t: {self}")
        return ExactPoly._raw(self.nvars - 1, {m[1:]: c for m, c in self._terms.items()}, False)

    def coefficient_in_t(self, power: int) -> "ExactPoly":
        """Spatial polynomial multiplying t**power."""
        if not self.has_t:
            raise InvalidInputError("Polynomial has no t variable")
        return ExactPoly._raw(
            self.nvars - 1, {m[1:]: c for m, c in self._terms.items() if m[0] == power}, False
        )

    # ------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------

    def evaluate(self, point: Sequence):
        """Evaluate at a point; exact for rational input, float/complex otherwise."""
        if len(point) != self.nvars:
            raise InvalidInputError(f"Point has {len(point)} coordinates, polynomial has {self.nvars} variables")
        total = Fraction(0)
        for m, c in self._terms.items():
            term = c
            for value, k in zip(point, m):
                if k:
                    term = term * value ** k
            total = total + term
        return total

    def to_callable(self, dtype=float) -> Callable[..., np.ndarray]:
        """Vectorised numpy evaluator f(*coords) over broadcastable arrays."""
        items = self.sorted_terms()
        coeffs = [dtype(c) for _, c in items]
        exps = [m for m, _ in items]
        nvars = self.nvars

        def evaluate(*coords):
            if len(coords) != nvars:
                raise InvalidInputError(f"Expected {nvars} coordinate arrays, got {len(coords)}")
            arrays = [np.asarray(c, dtype=dtype) for c in coords]
            shape = np.broadcast(*arrays).shape if arrays else ()
            result = np.zeros(shape, dtype=dtype)
            cache: Dict[Tuple[int, int], np.ndarray] = {}
            for c, m in zip(coeffs, exps):
                term = np.full(shape, c, dtype=dtype)
                for i, k in enumerate(m):
                    if k:
                        if (i, k) not in cache:
                            cache[(i, k)] = arrays[i] ** k
                        term = term * cache[(i, k)]
                result = result + term
            return result

        return evaluate

    # ------------------------------------------------------------------
    # Serialization and display
    # ------------------------------------------------------------------

    def to_dict(self) -> Dict:
        return {
            "nvars": self.nvars,
            "has_t": self.has_t,
            "terms": [
                {"exp": list(m), "num": str(c.numerator), "den": str(c.denominator)}
                for m, c in self.sorted_terms()
            ],
        }

    def default_names(self) -> List[str]:
        if self.has_t:
            return ["t"] + [f"x{i}" for i in range(1, self.nvars)]
        return [f"x{i}" for i in range(1, self.nvars + 1)]

    def to_string(self, names: Optional[Sequence[str]] = None) -> str:
        if not self._terms:
            return "0"
        names = list(names) if names is not None else self.default_names()
        parts = []
        for m, c in self.sorted_terms():
            factors = [n if k == 1 else f"{n}^{k}" for n, k in zip(names, m) if k]
            mag = abs(c)
            if not factors:
                body = str(mag)
            elif mag == 1:
                body = "*".join(factors)
            elif mag.denominator == 1:
                body = f"{mag.numerator}*" + "*".join(factors)
            else:
                body = f"{mag.numerator}/{mag.denominator}*" + "*".join(factors)
            sign = "-" if c < 0 else "+"
            parts.append((sign, body))
        first_sign, first = parts[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text

    def __str__(self) -> str:
        return self.to_string()

    def __repr__(self) -> str:
        return f"ExactPoly({self.to_string()!r}, nvars={self.nvars}, has_t={self.has_t})"


@dataclass(frozen=True)
class HomogeneousDecomposition:
    """Homogeneous parts of a polynomial with strictly increasing degrees."""
    nvars: int
    has_t: bool
    parts: Tuple[Tuple[int, ExactPoly], ...]

    def recombine(self) -> ExactPoly:
        return reduce(lambda acc, part: acc + part[1], self.parts, ExactPoly.zero(self.nvars, self.has_t))

    @property
    def degrees(self) -> List[int]:
        return [d for d, _ in self.parts]


# ----------------------------------------------------------------------
# Differential operators
# ----------------------------------------------------------------------

def _spatial(p: ExactPoly, spatial_vars: Optional[Iterable[int]]) -> Tuple[int, ...]:
    if spatial_vars is None:
        return p.spatial_indices
    return p._check_indices(spatial_vars)


def laplacian(p: ExactPoly, spatial_vars: Optional[Iterable[int]] = None) -> ExactPoly:
    """Sum of pure second derivatives over the spatial variables."""
    result = ExactPoly.zero(p.nvars, p.has_t)
    for i in _spatial(p, spatial_vars):
        result = result + p.derivative(i, 2)
    return result


def gradient(p: ExactPoly, spatial_vars: Optional[Iterable[int]] = None) -> List[ExactPoly]:
    return [p.derivative(i) for i in _spatial(p, spatial_vars)]


def gradient_norm_sq(p: ExactPoly, spatial_vars: Optional[Iterable[int]] = None) -> ExactPoly:
    """Sum of squared first derivatives over the spatial variables."""
    result = ExactPoly.zero(p.nvars, p.has_t)
    for d in gradient(p, spatial_vars):
        result = result + d * d
    return result


def homogeneous_decomposition(p: ExactPoly, spatial_vars: Optional[Iterable[int]] = None) -> HomogeneousDecomposition:
    """Split p by total degree in the given variables."""
    indices = _spatial(p, spatial_vars)
    buckets: Dict[int, Dict[Exponent, Fraction]] = {}
    for m, c in p.terms.items():
        d = sum(m[i] for i in indices)
        buckets.setdefault(d, {})[m] = c
    parts = tuple((d, ExactPoly._raw(p.nvars, buckets[d], p.has_t)) for d in sorted(buckets))
    return HomogeneousDecomposition(p.nvars, p.has_t, parts)


def is_homogeneous(p: ExactPoly, degree: int, spatial_vars: Optional[Iterable[int]] = None) -> bool:
    indices = _spatial(p, spatial_vars)
    return all(sum(m[i] for i in indices) == degree for m in p.terms)


# ----------------------------------------------------------------------
# Exact linear algebra helpers (sympy rationals)
# ----------------------------------------------------------------------

def _to_sympy(c: Fraction) -> sympy.Rational:
    return sympy.Rational(c.numerator, c.denominator)


def _from_sympy(r) -> Fraction:
    r = sympy.nsimplify(r) if not isinstance(r, sympy.Rational) else r
    if not isinstance(r, sympy.Rational):
        raise InternalConsistencyError(f"Expected an exact rational, got {r!r}")
    return Fraction(int(r.p), int(r.q))


def monomials(nvars: int, degree: int, indices: Sequence[int]) -> List[Exponent]:
    """Exponent vectors of the given degree in the chosen variables, graded-lex descending."""
    result = set()
    for combo in itertools.combinations_with_replacement(indices, degree):
        exps = [0] * nvars
        for i in combo:
            exps[i] += 1
        result.add(tuple(exps))
    return sorted(result, reverse=True)


def _coefficient_matrix(polys: Sequence[ExactPoly], rows: Sequence[Exponent]) -> sympy.Matrix:
    index = {m: r for r, m in enumerate(rows)}
    data = [[sympy.Integer(0)] * len(polys) for _ in rows]
    for col, p in enumerate(polys):
        for m, c in p.terms.items():
            data[index[m]][col] = _to_sympy(c)
    return sympy.Matrix(data) if rows else sympy.zeros(0, len(polys))


def exact_rank(polys: Sequence[ExactPoly]) -> int:
    """Exact rank of a list of polynomials seen as coefficient vectors."""
    if not polys:
        return 0
    rows = sorted({m for p in polys for m in p.terms}, key=monomial_key, reverse=True)
    if not rows:
        return 0
    return _coefficient_matrix(polys, rows).rank()


def harmonic_basis(n: int, d: int) -> List[ExactPoly]:
    """
    Basis of homogeneous harmonic polynomials of degree d in n variables.

    Computed as the exact nullspace of the Laplacian matrix from degree-d
    monomials onto degree-(d-2) monomials.
    """
    if not isinstance(n, int) or not isinstance(d, int) or n < 1 or d < 0:
        raise InvalidInputError(f"harmonic_basis needs n >= 1 and d >= 0, got n={n}, d={d}")
    indices = tuple(range(n))
    source = monomials(n, d, indices)
    source_polys = [ExactPoly._raw(n, {m: Fraction(1)}, False) for m in source]
    if d < 2:
        return source_polys

    images = [laplacian(p) for p in source_polys]
    matrix = _coefficient_matrix(images, monomials(n, d - 2, indices))
    basis = []
    for vec in matrix.nullspace():
        terms = {m: _from_sympy(v) for m, v in zip(source, vec) if v != 0}
        basis.append(ExactPoly(n, terms))
    logger.debug(f"harmonic_basis(n={n}, d={d}): {len(basis)} elements from {len(source)} monomials")
    return basis


def harmonic_dimension(n: int, d: int) -> int:
    """Dimension of degree-d homogeneous harmonics in n variables (rank-nullity)."""
    def count(k: int) -> int:
        if k < 0:
            return 0
        return len(monomials(n, k, tuple(range(n))))
    return count(d) - count(d - 2)


def invert_laplacian(h: ExactPoly, spatial_vars: Optional[Iterable[int]] = None) -> ExactPoly:
    """
    Canonical g with laplacian(g) == h.

    Per homogeneous degree m of h, g_m = |x|^2 * q_m with q_m homogeneous of
    degree m; the Fischer decomposition makes q_m unique, so the output is
    deterministic. h = 0 gives g = 0.
    """
    indices = _spatial(h, spatial_vars)
    outside = [i for i in range(h.nvars) if i not in indices]
    if any(h.depends_on(i) for i in outside):
        raise InvalidInputError(f"invert_laplacian expects a polynomial in spatial variables only, got {h}")

    r2 = ExactPoly.zero(h.nvars, h.has_t)
    for i in indices:
        r2 = r2 + ExactPoly.variable(i, h.nvars, h.has_t) ** 2

    g = ExactPoly.zero(h.nvars, h.has_t)
    for degree, part in homogeneous_decomposition(h, indices).parts:
        basis = monomials(h.nvars, degree, indices)
        columns = [laplacian(r2 * ExactPoly._raw(h.nvars, {m: Fraction(1)}, h.has_t), indices) for m in basis]
        matrix = _coefficient_matrix(columns, basis)
        rhs = _coefficient_matrix([part], basis)
        solution = matrix.LUsolve(rhs)
        q = ExactPoly._raw(
            h.nvars, {m: _from_sympy(v) for m, v in zip(basis, solution) if v != 0}, h.has_t
        )
        g = g + r2 * q

    residual = laplacian(g, indices) - h
    if not residual.is_zero:
        raise InternalConsistencyError(f"Laplacian inversion left residual {residual}")
    return g
