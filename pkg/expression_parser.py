"""
Expression grammar for command-line and bundle inputs.

Polynomials are written with the variables t, x1..xn (or z, zb, w, wb for
the complex side), +, -, *, ^ and rational literals such as 1/2. Parsing
goes through sympy and the result is converted to exact polynomials.
"""

import logging
import re
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import sympy
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from complexify import BIPOLY_NAMES, BiPoly
from errors import InvalidInputError
from polycore import ExactPoly

logger = logging.getLogger(__name__)

_TRANSFORMATIONS = standard_transformations + (convert_xor,)
_GLOBALS = {
    "Integer": sympy.Integer,
    "Rational": sympy.Rational,
    "Float": sympy.Float,
    "Symbol": sympy.Symbol,
    "Function": sympy.Function,
}
_RATIONAL = re.compile(r"^\s*([+-]?\d+)\s*(?:/\s*(\d+))?\s*$")
_SPATIAL = re.compile(r"\bx(\d+)\b")


def parse_rational(text) -> Fraction:
    """Parse a 'p/q' or integer literal exactly."""
    if isinstance(text, (int, Fraction)) and not isinstance(text, bool):
        return Fraction(text)
    match = _RATIONAL.match(str(text))
    if not match:
        raise InvalidInputError(f"Not a rational literal: {text!r} (use p/q)")
    num, den = match.groups()
    if den is not None and int(den) == 0:
        raise InvalidInputError(f"Zero denominator in {text!r}")
    return Fraction(int(num), int(den) if den else 1)


def infer_dimension(*texts: str) -> int:
    """Largest spatial index x<k> mentioned across the given expressions (at least 1)."""
    indices = [int(m) for text in texts if text for m in _SPATIAL.findall(text)]
    return max(indices, default=1)


def _parse(text: str, names: Sequence[str], allow_imaginary: bool) -> sympy.Poly:
    symbols = {name: sympy.Symbol(name) for name in names}
    local_dict: Dict[str, object] = dict(symbols)
    if allow_imaginary:
        local_dict["I"] = sympy.I
    try:
        expr = parse_expr(str(text), local_dict=local_dict, global_dict=dict(_GLOBALS),
                          transformations=_TRANSFORMATIONS)
    except (SyntaxError, NameError, TypeError, ValueError, sympy.SympifyError) as e:
        raise InvalidInputError(f"Cannot parse expression {text!r}: {e}") from e
    expr = sympy.expand(sympy.sympify(expr))
    decimals = sorted(str(f) for f in expr.atoms(sympy.Float))
    if decimals:
        raise InvalidInputError(f"Decimal literals {decimals} in {text!r}; write coefficients as p/q")

    unknown = sorted(str(s) for s in expr.free_symbols if str(s) not in symbols)
    if unknown:
        raise InvalidInputError(f"Unknown variables {unknown} in {text!r}; allowed: {list(names)}")
    try:
        return sympy.Poly(expr, *[symbols[n] for n in names])
    except sympy.PolynomialError as e:
        raise InvalidInputError(f"Expression {text!r} is not a polynomial: {e}") from e


def _exact(value, text: str) -> Fraction:
    if not isinstance(value, sympy.Rational):
        raise InvalidInputError(f"Coefficient {value} in {text!r} is not an exact rational")
    return Fraction(int(value.p), int(value.q))


def parse_poly(text: str, n: int, with_t: bool = True) -> ExactPoly:
    """Parse into an ExactPoly in (t, x1..xn), or (x1..xn) when with_t is False."""
    if n < 1:
        raise InvalidInputError(f"Spatial dimension must be >= 1, got {n}")
    names: List[str] = (["t"] if with_t else []) + [f"x{i}" for i in range(1, n + 1)]
    poly = _parse(text, names, allow_imaginary=False)
    terms = {tuple(int(e) for e in monom): _exact(coeff, text) for monom, coeff in poly.terms()}
    return ExactPoly(len(names), terms, has_t=with_t)


def parse_bipoly(text: str) -> BiPoly:
    """Parse into a BiPoly in (z, zb, w, wb); I is the imaginary unit."""
    poly = _parse(text, BIPOLY_NAMES, allow_imaginary=True)
    real_terms, imag_terms = {}, {}
    for monom, coeff in poly.terms():
        re_part, im_part = sympy.expand(coeff).as_real_imag()
        key = tuple(int(e) for e in monom)
        real_terms[key] = _exact(re_part, text)
        imag_terms[key] = _exact(im_part, text)
    return BiPoly(ExactPoly(4, real_terms), ExactPoly(4, imag_terms))


def parse_optional_poly(text: Optional[str], n: int, with_t: bool = False) -> Optional[ExactPoly]:
    if text is None or str(text).strip() == "":
        return None
    return parse_poly(text, n, with_t=with_t)
