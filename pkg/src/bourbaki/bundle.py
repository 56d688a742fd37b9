"""Trivial vector bundles over a chart and the operators between their sections.

Every bracket, metric and Lie-type derivative in the package is stored as
explicit polynomial coefficient tensors, so Leibniz-type rules become exact
tensor identities.  Index conventions (all 0-based):

* ``BundleMap``     entries ``(row, col)``, acting as ``(M s)^row = M[row, col] s^col``.
* ``MetricTensor``  entries ``(r, a, b)``.
* ``FirstOrderOp``  ``D0[(z, r)]`` and ``D1[(z, r, i)]``:
  ``(D s)^z = D0^z_r s^r + D1^{z,r,i} d_i s^r``.
* ``BidiffOp``      ``C[(a, b, c)]``, ``P[(a, b, c, i)]``, ``Q[(a, b, c, i)]``:
  ``B(u, v)^a = C u^b v^c + P u^b d_i v^c + Q (d_i u^b) v^c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .errors import BundleMismatch, DimensionMismatch, IndexOutOfRange, ShapeMismatch
from .poly import Poly, as_rational

__all__ = [
    "Bundle",
    "Section",
    "BundleMap",
    "MetricTensor",
    "MetricReport",
    "FirstOrderOp",
    "BidiffOp",
    "LocalityOperator",
    "SplitPresentation",
    "SplitReport",
    "apply_first_order",
    "apply_bidiff",
    "bidiff_equal",
    "check_metric",
    "check_split",
    "exact_rank",
]


@dataclass(frozen=True)
class Bundle:
    """A trivial bundle of the given rank over a chart with ``nvars`` coordinates."""

    name: str
    rank: int
    nvars: int
    labels: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.rank < 0:
            raise ValueError("rank must be non-negative")
        if self.nvars < 1:
            raise ValueError("a chart needs at least one coordinate")
        if self.labels and len(self.labels) != self.rank:
            raise ShapeMismatch(f"{len(self.labels)} labels for a rank-{self.rank} bundle")

    def label(self, b):
        return self.labels[b] if self.labels else f"e{b + 1}"

    def zero(self):
        return Section(self, [Poly.zero(self.nvars)] * self.rank)

    def basis(self, b):
        return Section.monomial(self, b, (0,) * self.nvars)

    def direct_sum(self, other, name=None):
        _same_chart(self, other)
        labels = ()
        if self.labels or other.labels:
            labels = tuple(self.label(b) for b in range(self.rank)) + tuple(
                other.label(b) for b in range(other.rank)
            )
        return Bundle(name or f"{self.name}+{other.name}", self.rank + other.rank, self.nvars, labels)

    def tensor_product(self, other, name=None):
        _same_chart(self, other)
        labels = tuple(
            f"{self.label(a)}*{other.label(b)}" for a in range(self.rank) for b in range(other.rank)
        )
        return Bundle(name or f"{self.name}x{other.name}", self.rank * other.rank, self.nvars, labels)


def _same_chart(a, b):
    if a.nvars != b.nvars:
        raise DimensionMismatch(a.nvars, b.nvars)


def _check_bundle(section, bundle, role="argument"):
    if section.bundle.rank != bundle.rank or section.bundle.nvars != bundle.nvars:
        raise BundleMismatch(
            f"{role} lives in {section.bundle.name} (rank {section.bundle.rank}), "
            f"expected {bundle.name} (rank {bundle.rank})"
        )


def _poly(nvars, value):
    if isinstance(value, Poly):
        if value.nvars != nvars:
            raise DimensionMismatch(value.nvars, nvars)
        return value
    if isinstance(value, str):
        return Poly.parse(value, nvars)
    return Poly.const(nvars, value)


def _clean(entries, nvars):
    out = {}
    for k, v in entries.items():
        p = _poly(nvars, v)
        if p:
            out[tuple(k)] = p
    return out


def _add_into(acc, key, p):
    if not p:
        return
    q = acc.get(key)
    q = p if q is None else q + p
    if q:
        acc[key] = q
    else:
        acc.pop(key, None)


class Section:
    """A section of a trivial bundle: one polynomial per fiber coordinate."""

    __slots__ = ("bundle", "components")

    def __init__(self, bundle, components):
        comps = tuple(_poly(bundle.nvars, c) for c in components)
        if len(comps) != bundle.rank:
            raise ShapeMismatch(f"{len(comps)} components for rank-{bundle.rank} bundle {bundle.name}")
        self.bundle = bundle
        self.components = comps

    @classmethod
    def monomial(cls, bundle, b, exps, coef=1):
        if not 0 <= b < bundle.rank:
            raise IndexOutOfRange(f"fiber index {b} outside 0..{bundle.rank - 1}")
        comps = [Poly.zero(bundle.nvars)] * bundle.rank
        comps[b] = Poly(bundle.nvars, {tuple(exps): coef})
        return cls(bundle, comps)

    @property
    def nvars(self):
        return self.bundle.nvars

    def __getitem__(self, b):
        return self.components[b]

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def is_zero(self):
        return not any(self.components)

    def __eq__(self, other):
        if not isinstance(other, Section):
            return NotImplemented
        return self.bundle.rank == other.bundle.rank and self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def _other(self, other):
        _check_bundle(other, self.bundle)
        return other

    def __add__(self, other):
        other = self._other(other)
        return Section(self.bundle, [a + b for a, b in zip(self, other)])

    def __sub__(self, other):
        other = self._other(other)
        return Section(self.bundle, [a - b for a, b in zip(self, other)])

    def __neg__(self):
        return Section(self.bundle, [-a for a in self])

    def scale(self, f):
        """Multiply every component by a function (Poly) or a rational."""
        if not isinstance(f, Poly):
            f = Poly.const(self.nvars, f)
        return Section(self.bundle, [f * a for a in self])

    def partial(self, i):
        return Section(self.bundle, [a.partial(i) for a in self])

    def degree(self):
        return max((c.degree() for c in self.components), default=-1)

    def to_strings(self):
        return [str(c) for c in self.components]

    @classmethod
    def from_strings(cls, bundle, texts):
        return cls(bundle, [Poly.parse(t, bundle.nvars) for t in texts])

    def __str__(self):
        parts = []
        for b, c in enumerate(self.components):
            if not c:
                continue
            label = self.bundle.label(b)
            if c == 1:
                parts.append(label)
            elif c == -1:
                parts.append(f"-{label}")
            elif len(c.terms) == 1:
                parts.append(f"{c}*{label}")
            else:
                parts.append(f"({c})*{label}")
        return " + ".join(parts).replace("+ -", "- ") if parts else "0"

    def __repr__(self):
        return f"Section({self.bundle.name}, {self.to_strings()})"


class BundleMap:
    """A bundle morphism given by a polynomial matrix."""

    __slots__ = ("domain", "codomain", "entries")

    def __init__(self, domain, codomain, entries=None):
        _same_chart(domain, codomain)
        self.domain = domain
        self.codomain = codomain
        self.entries = _clean(entries or {}, domain.nvars)
        for (r, c) in self.entries:
            if not (0 <= r < codomain.rank and 0 <= c < domain.rank):
                raise ShapeMismatch(
                    f"entry ({r}, {c}) outside {codomain.rank}x{domain.rank} matrix"
                )

    @classmethod
    def identity(cls, bundle):
        return cls(bundle, bundle, {(b, b): 1 for b in range(bundle.rank)})

    @classmethod
    def zero(cls, domain, codomain):
        return cls(domain, codomain)

    @classmethod
    def inclusion(cls, part, total, offset):
        return cls(part, total, {(offset + b, b): 1 for b in range(part.rank)})

    @classmethod
    def projection(cls, total, part, offset):
        return cls(total, part, {(b, offset + b): 1 for b in range(part.rank)})

    @classmethod
    def from_rows(cls, domain, codomain, rows):
        if len(rows) != codomain.rank or any(len(r) != domain.rank for r in rows):
            raise ShapeMismatch(f"matrix must be {codomain.rank}x{domain.rank}")
        return cls(domain, codomain, {(i, j): v for i, row in enumerate(rows) for j, v in enumerate(row)})

    @property
    def nvars(self):
        return self.domain.nvars

    def __getitem__(self, key):
        return self.entries.get(key) or Poly.zero(self.nvars)

    def rows(self):
        return [[self[(i, j)] for j in range(self.domain.rank)] for i in range(self.codomain.rank)]

    def apply(self, s):
        _check_bundle(s, self.domain)
        out = [Poly.zero(self.nvars)] * self.codomain.rank
        for (r, c), p in self.entries.items():
            out[r] = out[r] + p * s[c]
        return Section(self.codomain, out)

    __call__ = apply

    def compose(self, inner):
        """``self o inner``."""
        if inner.codomain.rank != self.domain.rank:
            raise ShapeMismatch(
                f"cannot compose {self.domain.name}->{self.codomain.name} after "
                f"{inner.domain.name}->{inner.codomain.name}"
            )
        acc = {}
        by_row = {}
        for (k, c), p in inner.entries.items():
            by_row.setdefault(k, []).append((c, p))
        for (r, k), p in self.entries.items():
            for c, q in by_row.get(k, ()):
                _add_into(acc, (r, c), p * q)
        return BundleMap(inner.domain, self.codomain, acc)

    __matmul__ = compose

    def __add__(self, other):
        self._same_shape(other)
        acc = dict(self.entries)
        for k, p in other.entries.items():
            _add_into(acc, k, p)
        return BundleMap(self.domain, self.codomain, acc)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, f):
        if not isinstance(f, Poly):
            f = Poly.const(self.nvars, f)
        return BundleMap(self.domain, self.codomain, {k: f * p for k, p in self.entries.items()})

    def partial(self, i):
        return BundleMap(self.domain, self.codomain, {k: p.partial(i) for k, p in self.entries.items()})

    def _same_shape(self, other):
        if (self.domain.rank, self.codomain.rank) != (other.domain.rank, other.codomain.rank):
            raise ShapeMismatch("bundle maps of different shapes")

    def is_zero(self):
        return not self.entries

    def __eq__(self, other):
        if not isinstance(other, BundleMap):
            return NotImplemented
        return (
            self.domain.rank == other.domain.rank
            and self.codomain.rank == other.codomain.rank
            and self.entries == other.entries
        )

    def __hash__(self):
        return hash(frozenset(self.entries.items()))

    def eval_at(self, point):
        return [[self[(i, j)].eval(point) for j in range(self.domain.rank)] for i in range(self.codomain.rank)]

    def __repr__(self):
        return f"BundleMap({self.domain.name}->{self.codomain.name}, {len(self.entries)} nonzero)"


def exact_rank(rows):
    """Rank of a matrix of rationals by fraction-exact Gaussian elimination."""
    m = [[Fraction(x) for x in row] for row in rows]
    rank = 0
    ncols = len(m[0]) if m else 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        pv = m[rank][col]
        for r in range(len(m)):
            if r != rank and m[r][col] != 0:
                factor = m[r][col] / pv
                m[r] = [a - factor * b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


class MetricTensor:
    """An ``R``-valued symmetric bilinear form on ``E``; entries ``(r, a, b)``."""

    __slots__ = ("E", "R", "entries", "_bidiff")

    def __init__(self, E, R, entries=None):
        _same_chart(E, R)
        self.E = E
        self.R = R
        self.entries = _clean(entries or {}, E.nvars)
        for (r, a, b) in self.entries:
            if not (0 <= r < R.rank and 0 <= a < E.rank and 0 <= b < E.rank):
                raise ShapeMismatch(f"metric entry ({r}, {a}, {b}) out of range")
        self._bidiff = None

    @property
    def nvars(self):
        return self.E.nvars

    def __getitem__(self, key):
        return self.entries.get(key) or Poly.zero(self.nvars)

    def as_bidiff(self):
        if self._bidiff is None:
            self._bidiff = BidiffOp(self.E, self.E, self.R, C=self.entries)
        return self._bidiff

    def apply(self, u, v):
        return apply_bidiff(self.as_bidiff(), u, v)

    __call__ = apply

    def is_symmetric(self):
        return all(self[(r, b, a)] == p for (r, a, b), p in self.entries.items())

    def asymmetry(self):
        """First entry with g[r][a][b] != g[r][b][a], or None."""
        for (r, a, b), p in sorted(self.entries.items()):
            if self[(r, b, a)] != p:
                return (r, a, b)
        return None

    def pullback(self, left):
        """The metric ``(x, y) -> g(left x, left y)``."""
        return MetricTensor(left.domain, self.R, self.pairing(left, left))

    def pairing(self, left, right):
        """Entries ``(r, x, y)`` of ``g(left e_x, right e_y)``; the domains may differ."""
        acc = {}
        for (r, a, b), p in self.entries.items():
            for (a2, x), q in left.entries.items():
                if a2 != a:
                    continue
                pq = p * q
                for (b2, y), s in right.entries.items():
                    if b2 == b:
                        _add_into(acc, (r, x, y), pq * s)
        return acc

    def flattened_at(self, point):
        """The ``m_E x (m_E m_R)`` matrix ``a -> g[.][a][.]`` at a point."""
        return [
            [self[(r, a, b)].eval(point) for r in range(self.R.rank) for b in range(self.E.rank)]
            for a in range(self.E.rank)
        ]

    def __eq__(self, other):
        if not isinstance(other, MetricTensor):
            return NotImplemented
        return self.entries == other.entries and self.E.rank == other.E.rank and self.R.rank == other.R.rank

    def __hash__(self):
        return hash(frozenset(self.entries.items()))

    def __repr__(self):
        return f"MetricTensor({self.E.name} -> {self.R.name}, {len(self.entries)} nonzero)"


@dataclass(frozen=True)
class MetricReport:
    status: str  # "nondegenerate" | "degenerate" | "asymmetric"
    symmetric: bool
    ranks: tuple
    points: tuple
    offending: object = None

    @property
    def ok(self):
        return self.status == "nondegenerate"

    def describe(self):
        if self.status == "asymmetric":
            r, a, b = self.offending
            return f"asymmetric: g[{r + 1}][{a + 1}][{b + 1}] != g[{r + 1}][{b + 1}][{a + 1}]"
        if self.status == "degenerate":
            return f"symmetric but degenerate at witness point {self.offending}"
        return f"symmetric, generically non-degenerate (full rank at {len(self.points)} point(s))"


def check_metric(g, witness_points):
    """Exact symmetry plus full flattened rank at each witness point.

    Non-degeneracy is certified generically: a polynomial matrix with full
    rank at one point has full rank on a dense open set.
    """
    points = tuple(tuple(as_rational(x) for x in p) for p in witness_points)
    if not points:
        raise ValueError("check_metric needs at least one witness point")
    bad = g.asymmetry()
    if bad is not None:
        return MetricReport("asymmetric", False, (), points, bad)
    ranks = []
    for p in points:
        rank = exact_rank(g.flattened_at(p)) if g.E.rank else 0
        ranks.append(rank)
        if rank < g.E.rank:
            return MetricReport("degenerate", True, tuple(ranks), points, p)
    return MetricReport("nondegenerate", True, tuple(ranks), points)


class FirstOrderOp:
    """A first-order differential operator ``R -> Z``.

    When ``a_symbol`` is given it is a pair ``(l, anchor)`` with ``l`` keyed
    ``(z, r, alpha)`` and ``anchor`` a BundleMap ``A -> T``; the operator's
    symbol then factors through the anchor.
    """

    __slots__ = ("domain", "codomain", "D0", "D1", "a_symbol")

    def __init__(self, domain, codomain, D0=None, D1=None, a_symbol=None):
        _same_chart(domain, codomain)
        self.domain = domain
        self.codomain = codomain
        n = domain.nvars
        self.D0 = _clean(D0 or {}, n)
        self.D1 = _clean(D1 or {}, n)
        for (z, r) in self.D0:
            if not (0 <= z < codomain.rank and 0 <= r < domain.rank):
                raise ShapeMismatch(f"D0 entry ({z}, {r}) out of range")
        for (z, r, i) in self.D1:
            if not (0 <= z < codomain.rank and 0 <= r < domain.rank and 0 <= i < n):
                raise ShapeMismatch(f"D1 entry ({z}, {r}, {i}) out of range")
        if a_symbol is not None:
            l, anchor = a_symbol
            a_symbol = (_clean(l, n), anchor)
        self.a_symbol = a_symbol

    @classmethod
    def from_a_symbol(cls, domain, codomain, D0, l, anchor):
        """Build ``D0 + (l . anchor) d`` so that the A-symbol holds by construction."""
        l = _clean(l, domain.nvars)
        D1 = {}
        for (z, r, al), p in l.items():
            for (i, al2), q in anchor.entries.items():
                if al2 == al:
                    _add_into(D1, (z, r, i), p * q)
        return cls(domain, codomain, D0, D1, a_symbol=(l, anchor))

    @classmethod
    def zeroth_order(cls, M):
        return cls(M.domain, M.codomain, D0=M.entries)

    @classmethod
    def zero(cls, domain, codomain):
        return cls(domain, codomain)

    @classmethod
    def from_callable(cls, fn, domain, codomain):
        """Recover ``D0``/``D1`` by probing ``fn`` on ``e_r`` and ``x_i e_r``.

        Exact for any first-order operator with polynomial coefficients.
        """
        n = domain.nvars
        zero = (0,) * n
        D0, D1 = {}, {}
        for r in range(domain.rank):
            base = fn(Section.monomial(domain, r, zero))
            _check_bundle(base, codomain, "result")
            for z, p in enumerate(base):
                if p:
                    D0[(z, r)] = p
            for i in range(n):
                xi = Poly.var(n, i)
                e = [0] * n
                e[i] = 1
                probe = fn(Section.monomial(domain, r, e))
                for z in range(codomain.rank):
                    p = probe[z] - xi * base[z]
                    if p:
                        D1[(z, r, i)] = p
        return cls(domain, codomain, D0, D1)

    @property
    def nvars(self):
        return self.domain.nvars

    def apply(self, s):
        return apply_first_order(self, s)

    __call__ = apply

    def symbol_map(self):
        """The symbol as a tensorial map: ``(omega, r) -> D1^{z,r,i} omega_i r^r``."""
        return dict(self.D1)

    def symbol_residual(self):
        """Entries of ``D1 - l . anchor`` when an A-symbol is attached."""
        if self.a_symbol is None:
            return {}
        l, anchor = self.a_symbol
        expected = {}
        for (z, r, al), p in l.items():
            for (i, al2), q in anchor.entries.items():
                if al2 == al:
                    _add_into(expected, (z, r, i), p * q)
        return _difference(self.D1, expected)

    def is_zeroth_order(self):
        return not self.D1

    def compose_map(self, M):
        """``self o M`` for a bundle map ``M`` into the domain."""
        if M.codomain.rank != self.domain.rank:
            raise ShapeMismatch("bundle map does not land in the operator's domain")
        D0, D1 = {}, {}
        for (z, r), p in self.D0.items():
            for (r2, s), q in M.entries.items():
                if r2 == r:
                    _add_into(D0, (z, s), p * q)
        for (z, r, i), p in self.D1.items():
            for (r2, s), q in M.entries.items():
                if r2 == r:
                    _add_into(D1, (z, s, i), p * q)
                    _add_into(D0, (z, s), p * q.partial(i))
        return FirstOrderOp(M.domain, self.codomain, D0, D1)

    def after(self, M):
        """``M o self`` for a bundle map ``M`` out of the codomain."""
        if M.domain.rank != self.codomain.rank:
            raise ShapeMismatch("bundle map does not start at the operator's codomain")
        D0, D1 = {}, {}
        for (w, z), q in M.entries.items():
            for (z2, r), p in self.D0.items():
                if z2 == z:
                    _add_into(D0, (w, r), q * p)
            for (z2, r, i), p in self.D1.items():
                if z2 == z:
                    _add_into(D1, (w, r, i), q * p)
        return FirstOrderOp(self.domain, M.codomain, D0, D1)

    def __add__(self, other):
        D0 = dict(self.D0)
        for k, p in other.D0.items():
            _add_into(D0, k, p)
        D1 = dict(self.D1)
        for k, p in other.D1.items():
            _add_into(D1, k, p)
        return FirstOrderOp(self.domain, self.codomain, D0, D1)

    def scale(self, c):
        return FirstOrderOp(
            self.domain,
            self.codomain,
            {k: p.scale(c) for k, p in self.D0.items()},
            {k: p.scale(c) for k, p in self.D1.items()},
        )

    def __eq__(self, other):
        if not isinstance(other, FirstOrderOp):
            return NotImplemented
        return self.D0 == other.D0 and self.D1 == other.D1

    def __hash__(self):
        return hash((frozenset(self.D0.items()), frozenset(self.D1.items())))

    def __repr__(self):
        return f"FirstOrderOp({self.domain.name}->{self.codomain.name})"


def _difference(a, b):
    out = dict(a)
    for k, p in b.items():
        _add_into(out, k, -p)
    return out


def apply_first_order(D, s):
    """Evaluate ``D0 s + D1 ds`` exactly."""
    _check_bundle(s, D.domain)
    n = D.nvars
    out = [Poly.zero(n)] * D.codomain.rank
    for (z, r), p in D.D0.items():
        out[z] = out[z] + p * s[r]
    for (z, r, i), p in D.D1.items():
        out[z] = out[z] + p * s[r].partial(i)
    return Section(D.codomain, out)


class BidiffOp:
    """An order-(1,1) bidifferential operator ``left x right -> out``."""

    __slots__ = ("left", "right", "out", "C", "P", "Q")

    def __init__(self, left, right, out, C=None, P=None, Q=None):
        _same_chart(left, right)
        _same_chart(left, out)
        self.left = left
        self.right = right
        self.out = out
        n = left.nvars
        self.C = _clean(C or {}, n)
        self.P = _clean(P or {}, n)
        self.Q = _clean(Q or {}, n)
        for (a, b, c) in self.C:
            self._check_index(a, b, c)
        for (a, b, c, i) in list(self.P) + list(self.Q):
            self._check_index(a, b, c)
            if not 0 <= i < n:
                raise ShapeMismatch(f"derivative index {i} outside chart")

    def _check_index(self, a, b, c):
        if not (0 <= a < self.out.rank and 0 <= b < self.left.rank and 0 <= c < self.right.rank):
            raise ShapeMismatch(
                f"entry ({a}, {b}, {c}) outside {self.out.rank}x{self.left.rank}x{self.right.rank}"
            )

    @property
    def nvars(self):
        return self.left.nvars

    @property
    def shape(self):
        return (self.out.rank, self.left.rank, self.right.rank, self.nvars)

    @classmethod
    def zero(cls, left, right, out):
        return cls(left, right, out)

    @classmethod
    def from_callable(cls, fn, left, right, out):
        """Recover ``(C, P, Q)`` by probing ``fn`` with ``e_b`` and ``x_i e_b``."""
        n = left.nvars
        zero = (0,) * n
        units = []
        for i in range(n):
            e = [0] * n
            e[i] = 1
            units.append(tuple(e))
        C, P, Q = {}, {}, {}
        for b in range(left.rank):
            ub = Section.monomial(left, b, zero)
            for c in range(right.rank):
                vc = Section.monomial(right, c, zero)
                base = fn(ub, vc)
                _check_bundle(base, out, "result")
                for a, p in enumerate(base):
                    if p:
                        C[(a, b, c)] = p
                for i in range(n):
                    xi = Poly.var(n, i)
                    right_probe = fn(ub, Section.monomial(right, c, units[i]))
                    left_probe = fn(Section.monomial(left, b, units[i]), vc)
                    for a in range(out.rank):
                        p = right_probe[a] - xi * base[a]
                        if p:
                            P[(a, b, c, i)] = p
                        q = left_probe[a] - xi * base[a]
                        if q:
                            Q[(a, b, c, i)] = q
        return cls(left, right, out, C, P, Q)

    def apply(self, u, v):
        return apply_bidiff(self, u, v)

    __call__ = apply

    def is_tensorial(self):
        return not self.P and not self.Q

    def swap(self):
        """The operator ``(v, u) -> B(u, v)``."""
        return BidiffOp(
            self.right,
            self.left,
            self.out,
            {(a, c, b): p for (a, b, c), p in self.C.items()},
            {(a, c, b, i): p for (a, b, c, i), p in self.Q.items()},
            {(a, c, b, i): p for (a, b, c, i), p in self.P.items()},
        )

    def __add__(self, other):
        if self.shape != other.shape:
            raise ShapeMismatch(f"cannot add operators of shapes {self.shape} and {other.shape}")
        C, P, Q = dict(self.C), dict(self.P), dict(self.Q)
        for k, p in other.C.items():
            _add_into(C, k, p)
        for k, p in other.P.items():
            _add_into(P, k, p)
        for k, p in other.Q.items():
            _add_into(Q, k, p)
        return BidiffOp(self.left, self.right, self.out, C, P, Q)

    def scale(self, c):
        return BidiffOp(
            self.left,
            self.right,
            self.out,
            {k: p.scale(c) for k, p in self.C.items()},
            {k: p.scale(c) for k, p in self.P.items()},
            {k: p.scale(c) for k, p in self.Q.items()},
        )

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def compose(self, M=None, L=None, R=None):
        """``(u, v) -> M B(L u, R v)`` for polynomial bundle maps ``M, L, R``."""
        n = self.nvars
        if L is not None and L.codomain.rank != self.left.rank:
            raise ShapeMismatch("left map does not land in the left argument bundle")
        if R is not None and R.codomain.rank != self.right.rank:
            raise ShapeMismatch("right map does not land in the right argument bundle")
        if M is not None and M.domain.rank != self.out.rank:
            raise ShapeMismatch("output map does not start at the output bundle")

        def cols(mapping, rank):
            if mapping is None:
                one = Poly.const(n, 1)
                return {b: [(b, one)] for b in range(rank)}
            d = {}
            for (row, col), p in mapping.entries.items():
                d.setdefault(row, []).append((col, p))
            return d

        Lc = cols(L, self.left.rank)
        Rc = cols(R, self.right.rank)
        C, P, Q = {}, {}, {}
        for (a, b, c), p in self.C.items():
            for beta, lp in Lc.get(b, ()):
                for gam, rp in Rc.get(c, ()):
                    _add_into(C, (a, beta, gam), p * lp * rp)
        for (a, b, c, i), p in self.P.items():
            for beta, lp in Lc.get(b, ()):
                for gam, rp in Rc.get(c, ()):
                    _add_into(P, (a, beta, gam, i), p * lp * rp)
                    _add_into(C, (a, beta, gam), p * lp * rp.partial(i))
        for (a, b, c, i), p in self.Q.items():
            for beta, lp in Lc.get(b, ()):
                for gam, rp in Rc.get(c, ()):
                    _add_into(Q, (a, beta, gam, i), p * lp * rp)
                    _add_into(C, (a, beta, gam), p * lp.partial(i) * rp)
        left = L.domain if L is not None else self.left
        right = R.domain if R is not None else self.right
        out = M.codomain if M is not None else self.out
        if M is not None:
            rows = {}
            for (w, a), p in M.entries.items():
                rows.setdefault(a, []).append((w, p))

            def push(tensor):
                res = {}
                for key, p in tensor.items():
                    for w, m in rows.get(key[0], ()):
                        _add_into(res, (w,) + key[1:], m * p)
                return res

            C, P, Q = push(C), push(P), push(Q)
        return BidiffOp(left, right, out, C, P, Q)

    def then_first_order(self, D):
        """``(u, v) -> D(B(u, v))``; only defined when ``B`` is tensorial."""
        if not self.is_tensorial():
            raise ShapeMismatch("composing a first-order operator after a differential bracket raises its order")
        if D.domain.rank != self.out.rank:
            raise ShapeMismatch("operator domain does not match bracket output")
        C, P, Q = {}, {}, {}
        for (a, b, c), p in self.C.items():
            for (z, r), d0 in D.D0.items():
                if r == a:
                    _add_into(C, (z, b, c), d0 * p)
        for (z, r, i), d1 in D.D1.items():
            for (a, b, c), p in self.C.items():
                if a == r:
                    _add_into(C, (z, b, c), d1 * p.partial(i))
                    _add_into(P, (z, b, c, i), d1 * p)
                    _add_into(Q, (z, b, c, i), d1 * p)
        return BidiffOp(self.left, self.right, D.codomain, C, P, Q)

    def __eq__(self, other):
        if not isinstance(other, BidiffOp):
            return NotImplemented
        return bidiff_equal(self, other)

    def __hash__(self):
        return hash((frozenset(self.C.items()), frozenset(self.P.items()), frozenset(self.Q.items())))

    def max_coefficient_degree(self):
        return max((p.degree() for t in (self.C, self.P, self.Q) for p in t.values()), default=-1)

    def __repr__(self):
        return (
            f"BidiffOp({self.left.name} x {self.right.name} -> {self.out.name}; "
            f"{len(self.C)}/{len(self.P)}/{len(self.Q)} nonzero)"
        )


def apply_bidiff(B, u, v):
    """Evaluate ``C u v + P u dv + Q du v`` exactly."""
    _check_bundle(u, B.left, "left argument")
    _check_bundle(v, B.right, "right argument")
    n = B.nvars
    out = [Poly.zero(n)] * B.out.rank
    du, dv = {}, {}

    def d(cache, s, b, i):
        key = (b, i)
        if key not in cache:
            cache[key] = s[b].partial(i)
        return cache[key]

    for (a, b, c), p in B.C.items():
        if u[b] and v[c]:
            out[a] = out[a] + p * u[b] * v[c]
    for (a, b, c, i), p in B.P.items():
        if u[b]:
            dvc = d(dv, v, c, i)
            if dvc:
                out[a] = out[a] + p * u[b] * dvc
    for (a, b, c, i), p in B.Q.items():
        if v[c]:
            dub = d(du, u, b, i)
            if dub:
                out[a] = out[a] + p * dub * v[c]
    return Section(B.out, out)


def bidiff_equal(B1, B2):
    """Entrywise equality of the three coefficient tensors."""
    if B1.shape != B2.shape:
        raise ShapeMismatch(f"operators of shapes {B1.shape} and {B2.shape} are not comparable")
    return B1.C == B2.C and B1.P == B2.P and B1.Q == B2.Q


class LocalityOperator:
    """A tensorial map ``(omega, u, v) -> L(omega, u, v)``; entries ``(a, i, b, c)``."""

    __slots__ = ("E", "entries")

    def __init__(self, E, entries=None):
        self.E = E
        self.entries = _clean(entries or {}, E.nvars)
        for (a, i, b, c) in self.entries:
            if not (0 <= a < E.rank and 0 <= b < E.rank and 0 <= c < E.rank and 0 <= i < E.nvars):
                raise ShapeMismatch(f"locality entry ({a}, {i}, {b}, {c}) out of range")

    @classmethod
    def from_symbol(cls, D, g):
        """``L(omega, u, v) = (symbol of D)_omega g(u, v)``."""
        acc = {}
        by_r = {}
        for (r, b, c), p in g.entries.items():
            by_r.setdefault(r, []).append((b, c, p))
        for (a, r, i), d1 in D.D1.items():
            for b, c, p in by_r.get(r, ()):
                _add_into(acc, (a, i, b, c), d1 * p)
        return cls(D.codomain, acc)

    def apply(self, omega, u, v):
        """``omega`` is a list of ``nvars`` polynomials (a chart 1-form)."""
        n = self.E.nvars
        if len(omega) != n:
            raise DimensionMismatch(len(omega), n, "covector length")
        out = [Poly.zero(n)] * self.E.rank
        for (a, i, b, c), p in self.entries.items():
            out[a] = out[a] + p * omega[i] * u[b] * v[c]
        return Section(self.E, out)

    def __eq__(self, other):
        if not isinstance(other, LocalityOperator):
            return NotImplemented
        return self.entries == other.entries

    def __hash__(self):
        return hash(frozenset(self.entries.items()))


@dataclass(frozen=True)
class SplitPresentation:
    """A split short exact sequence ``0 -> Z -chi-> E -Q-> A -> 0``.

    ``phi`` splits ``Q`` and ``retraction`` is a left inverse of ``chi``.
    """

    chi: BundleMap
    Q: BundleMap
    phi: BundleMap
    retraction: BundleMap

    @property
    def E(self):
        return self.chi.codomain

    @property
    def Z(self):
        return self.chi.domain

    @property
    def A(self):
        return self.Q.codomain

    @classmethod
    def canonical(cls, A, Z, E=None):
        E = E or A.direct_sum(Z)
        return cls(
            chi=BundleMap.inclusion(Z, E, A.rank),
            Q=BundleMap.projection(E, A, 0),
            phi=BundleMap.inclusion(A, E, 0),
            retraction=BundleMap.projection(E, Z, A.rank),
        )

    def with_phi(self, phi):
        """Same sequence with another splitting; the retraction is adjusted to match."""
        # chi^- = retraction o (1 - phi Q) keeps phi Q + chi chi^- = 1
        one = BundleMap.identity(self.E)
        ret = self.retraction.compose(one - phi.compose(self.Q))
        return SplitPresentation(self.chi, self.Q, phi, ret)

    def iso(self):
        """``phi + chi : A + Z -> E`` and its inverse ``Q + chi^-``."""
        AZ = self.A.direct_sum(self.Z)
        pA = BundleMap.projection(AZ, self.A, 0)
        pZ = BundleMap.projection(AZ, self.Z, self.A.rank)
        forward = self.phi.compose(pA) + self.chi.compose(pZ)
        iA = BundleMap.inclusion(self.A, AZ, 0)
        iZ = BundleMap.inclusion(self.Z, AZ, self.A.rank)
        backward = iA.compose(self.Q) + iZ.compose(self.retraction)
        return forward, backward


@dataclass(frozen=True)
class SplitReport:
    failures: tuple  # (identity name, (row, col), residual Poly)
    chi_isotropic: object = None
    phi_isotropic: object = None

    @property
    def exact(self):
        return not self.failures

    @property
    def ok(self):
        return self.exact

    def describe(self):
        lines = []
        if self.exact:
            lines.append("exact and split")
        for name, (r, c), p in self.failures:
            lines.append(f"{name} fails at entry ({r + 1}, {c + 1}): {p}")
        if self.chi_isotropic is not None:
            lines.append(f"chi isotropic: {self.chi_isotropic}")
        if self.phi_isotropic is not None:
            lines.append(f"phi isotropic: {self.phi_isotropic}")
        return "; ".join(lines)


def _identity_failures(name, lhs, rhs):
    diff = lhs - rhs
    return [(name, k, p) for k, p in sorted(diff.entries.items())]


def check_split(S, metric=None):
    """Exactness identities of a split presentation, plus isotropy when a metric is given."""
    fails = []
    for M, label in ((S.chi, "chi"), (S.phi, "phi")):
        if M.codomain.rank != S.E.rank:
            raise ShapeMismatch(f"{label} does not land in E")
    if S.Q.domain.rank != S.E.rank or S.retraction.domain.rank != S.E.rank:
        raise ShapeMismatch("Q and the retraction must start at E")
    fails += _identity_failures("Q chi = 0", S.Q.compose(S.chi), BundleMap.zero(S.Z, S.A))
    fails += _identity_failures("Q phi = id", S.Q.compose(S.phi), BundleMap.identity(S.A))
    fails += _identity_failures("chi^- chi = id", S.retraction.compose(S.chi), BundleMap.identity(S.Z))
    fails += _identity_failures(
        "phi Q + chi chi^- = id",
        S.phi.compose(S.Q) + S.chi.compose(S.retraction),
        BundleMap.identity(S.E),
    )
    chi_iso = phi_iso = None
    if metric is not None:
        chi_iso = not metric.pullback(S.chi).entries
        phi_iso = not metric.pullback(S.phi).entries
    return SplitReport(tuple(fails), chi_iso, phi_iso)
