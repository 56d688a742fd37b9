"""Exact sparse multivariate polynomials over the rationals.

A :class:`Poly` lives on a chart of fixed dimension ``nvars``; its terms map
exponent tuples to ``int`` or :class:`fractions.Fraction` coefficients.  Zero
coefficients are never stored, so two polynomials are equal exactly when
their term maps are.  Coordinates are 0-based in the Python API and print as
``x1 .. xn``.
"""

from __future__ import annotations

import re
from fractions import Fraction
from numbers import Rational

from .errors import DimensionMismatch, IndexOutOfRange, PolySyntaxError

__all__ = ["Poly", "as_rational", "format_rational"]


def as_rational(c):
    """Return ``c`` as an int when integral, else as a reduced Fraction."""
    if isinstance(c, bool):
        raise TypeError("booleans are not coefficients")
    if isinstance(c, int):
        return c
    if isinstance(c, Fraction):
        return c.numerator if c.denominator == 1 else c
    if isinstance(c, Rational):
        return as_rational(Fraction(c.numerator, c.denominator))
    if isinstance(c, str):
        return as_rational(Fraction(c))
    raise TypeError(f"not an exact rational: {c!r}")


def format_rational(c):
    return str(c)


def _sort_key(exps):
    return (-sum(exps), tuple(-e for e in exps))


class Poly:
    """Immutable polynomial in ``nvars`` variables with rational coefficients."""

    __slots__ = ("nvars", "terms", "_hash")

    def __init__(self, nvars, terms=None):
        if nvars < 0:
            raise ValueError("nvars must be non-negative")
        self.nvars = nvars
        clean = {}
        if terms:
            for exps, c in terms.items():
                exps = tuple(exps)
                if len(exps) != nvars:
                    raise DimensionMismatch(len(exps), nvars, "monomial length")
                if any(e < 0 for e in exps):
                    raise ValueError(f"negative exponent in {exps}")
                c = as_rational(c)
                if c:
                    clean[exps] = clean.get(exps, 0) + c
            clean = {e: as_rational(c) for e, c in clean.items() if c}
        self.terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, nvars, terms):
        # terms already canonical: tuple keys, nonzero normalized coefficients
        p = object.__new__(cls)
        p.nvars = nvars
        p.terms = terms
        p._hash = None
        return p

    @classmethod
    def zero(cls, nvars):
        return cls._raw(nvars, {})

    @classmethod
    def const(cls, nvars, c):
        c = as_rational(c)
        return cls._raw(nvars, {(0,) * nvars: c} if c else {})

    @classmethod
    def var(cls, nvars, i, power=1):
        if not 0 <= i < nvars:
            raise IndexOutOfRange(f"variable index {i} outside 0..{nvars - 1}")
        exps = [0] * nvars
        exps[i] = power
        return cls._raw(nvars, {tuple(exps): 1})

    @classmethod
    def monomial(cls, exps, c=1):
        return cls(len(exps), {tuple(exps): c})

    # -- inspection -------------------------------------------------------

    def is_zero(self):
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def degree(self):
        """Total degree; -1 for the zero polynomial."""
        return max((sum(e) for e in self.terms), default=-1)

    def is_constant(self):
        return all(not any(e) for e in self.terms)

    def constant_value(self):
        return self.terms.get((0,) * self.nvars, 0)

    def __eq__(self, other):
        if isinstance(other, Poly):
            return self.nvars == other.nvars and self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self.is_constant() and self.constant_value() == other
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self.terms.items())))
        return self._hash

    # -- arithmetic -------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Poly):
            if other.nvars != self.nvars:
                raise DimensionMismatch(self.nvars, other.nvars)
            return other
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return Poly.const(self.nvars, other)
        return None

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        if not other.terms:
            return self
        out = dict(self.terms)
        for e, c in other.terms.items():
            s = out.get(e, 0) + c
            if s:
                out[e] = as_rational(s)
            else:
                out.pop(e, None)
        return Poly._raw(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly._raw(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other - self

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return self.scale(other)
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        if not self.terms or not other.terms:
            return Poly.zero(self.nvars)
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return Poly._raw(self.nvars, {e: as_rational(c) for e, c in out.items() if c})

    __rmul__ = __mul__

    def scale(self, c):
        c = as_rational(c)
        if not c:
            return Poly.zero(self.nvars)
        return Poly._raw(self.nvars, {e: as_rational(v * c) for e, v in self.terms.items()})

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("exponent must be a non-negative int")
        out = Poly.const(self.nvars, 1)
        for _ in range(k):
            out = out * self
        return out

    def partial(self, i):
        """Exact partial derivative with respect to coordinate ``i`` (0-based)."""
        if not 0 <= i < self.nvars:
            raise IndexOutOfRange(f"coordinate index {i} outside 0..{self.nvars - 1}")
        out = {}
        for e, c in self.terms.items():
            k = e[i]
            if k:
                lowered = e[:i] + (k - 1,) + e[i + 1:]
                out[lowered] = as_rational(c * k)
        return Poly._raw(self.nvars, out)

    def eval(self, point):
        """Substitute a rational point; returns an int or Fraction."""
        if len(point) != self.nvars:
            raise DimensionMismatch(len(point), self.nvars, "point length")
        pt = [as_rational(p) for p in point]
        total = 0
        for e, c in self.terms.items():
            v = c
            for p, k in zip(pt, e):
                if k:
                    v *= p ** k
            total += v
        return as_rational(total)

    def shift(self, exps):
        """Multiply by the monomial with exponent vector ``exps``."""
        return Poly._raw(
            self.nvars,
            {tuple(a + b for a, b in zip(e, exps)): c for e, c in self.terms.items()},
        )

    def embed(self, nvars):
        """The same polynomial viewed on a chart with more coordinates."""
        if nvars < self.nvars:
            raise DimensionMismatch(self.nvars, nvars)
        pad = (0,) * (nvars - self.nvars)
        return Poly._raw(nvars, {e + pad: c for e, c in self.terms.items()})

    # -- text -------------------------------------------------------------

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda t: _sort_key(t[0]))

    def __str__(self):
        if not self.terms:
            return "0"
        pieces = []
        for k, (e, c) in enumerate(self.sorted_terms()):
            neg = c < 0
            mag = -c if neg else c
            factors = []
            for i, p in enumerate(e):
                if p == 1:
                    factors.append(f"x{i + 1}")
                elif p > 1:
                    factors.append(f"x{i + 1}^{p}")
            if mag != 1 or not factors:
                factors.insert(0, str(mag))
            body = "*".join(factors)
            if k == 0:
                pieces.append(f"-{body}" if neg else body)
            else:
                pieces.append(f" - {body}" if neg else f" + {body}")
        return "".join(pieces)

    def __repr__(self):
        return f"Poly({self.nvars}, {str(self)!r})"

    @classmethod
    def parse(cls, text, nvars):
        return _PolyParser(text, nvars).parse_all()


_TOKEN = re.compile(
    r"\s*(?:(?P<int>\d+)|(?P<var>x\d+)|(?P<op>[-+*/^()]))"
)


class _PolyParser:
    """Recursive-descent reader for the polynomial literal grammar.

    ``poly := term (('+'|'-') term)*`` with an optional leading sign, where
    ``term := rational? ('*'? var ('^' uint)?)*``.  Parenthesized
    sub-polynomials are accepted as factors.
    """

    def __init__(self, text, nvars, tokens=None, start=0):
        self.text = text
        self.nvars = nvars
        self.i = start
        if tokens is not None:
            self.toks = tokens
            return
        self.toks = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                col = pos + len(text[pos:]) - len(text[pos:].lstrip())
                raise PolySyntaxError(f"unexpected character {text[col]!r}", text, col)
            kind = m.lastgroup
            start = m.start(kind)
            self.toks.append((kind, m.group(kind), start))
            pos = m.end()

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None, len(self.text))

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, pos = self.take()
        if kind != "op" or val != op:
            raise PolySyntaxError(f"expected {op!r}, found {val or 'end of input'!r}", self.text, pos)

    def parse_all(self):
        p = self.parse_sum()
        kind, val, pos = self.peek()
        if kind is not None:
            raise PolySyntaxError(f"unexpected token {val!r}", self.text, pos)
        return p

    def parse_sum(self):
        total = Poly.zero(self.nvars)
        sign = 1
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            sign = -1 if val == "-" else 1
        total = total + self.parse_term().scale(sign)
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                t = self.parse_term()
                total = total - t if val == "-" else total + t
            else:
                return total

    def parse_term(self):
        kind, val, pos = self.peek()
        coef = None
        if kind == "int":
            self.take()
            coef = Fraction(int(val))
            k2, v2, p2 = self.peek()
            if k2 == "op" and v2 == "/":
                self.take()
                k3, v3, p3 = self.take()
                if k3 != "int":
                    raise PolySyntaxError("expected denominator", self.text, p3)
                if int(v3) == 0:
                    raise PolySyntaxError("zero denominator", self.text, p3)
                coef /= int(v3)
        result = Poly.const(self.nvars, coef if coef is not None else 1)
        factors = 0
        while True:
            kind, val, fpos = self.peek()
            star = False
            if kind == "op" and val == "*":
                # a '*' here must introduce a factor
                nxt = self.toks[self.i + 1] if self.i + 1 < len(self.toks) else (None, None, len(self.text))
                if nxt[0] == "var" or (nxt[0] == "op" and nxt[1] == "("):
                    self.take()
                    star = True
                    kind, val, fpos = self.peek()
                else:
                    # leave the '*' for an enclosing grammar (form literals)
                    break
            if kind == "var":
                self.take()
                idx = int(val[1:])
                if not 1 <= idx <= self.nvars:
                    raise PolySyntaxError(
                        f"variable {val} outside chart x1..x{self.nvars}", self.text, fpos
                    )
                power = 1
                k2, v2, _ = self.peek()
                if k2 == "op" and v2 == "^":
                    self.take()
                    k3, v3, p3 = self.take()
                    if k3 != "int":
                        raise PolySyntaxError("expected exponent", self.text, p3)
                    power = int(v3)
                result = result * Poly.var(self.nvars, idx - 1, power)
                factors += 1
            elif kind == "op" and val == "(":
                self.take()
                inner = self.parse_sum()
                self.expect_op(")")
                power = 1
                k2, v2, _ = self.peek()
                if k2 == "op" and v2 == "^":
                    self.take()
                    k3, v3, p3 = self.take()
                    if k3 != "int":
                        raise PolySyntaxError("expected exponent", self.text, p3)
                    power = int(v3)
                result = result * inner ** power
                factors += 1
            else:
                if star:
                    raise PolySyntaxError("expected variable after '*'", self.text, fpos)
                break
        if coef is None and factors == 0:
            raise PolySyntaxError(
                f"expected a term, found {val or 'end of input'!r}", self.text, pos
            )
        return result
