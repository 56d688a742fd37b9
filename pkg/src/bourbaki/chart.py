"""Vector fields, differential forms and Cartan calculus on a coordinate chart.

Forms store coefficients under strictly increasing 0-based index tuples.  The
same :class:`Form` type holds A-forms for a base algebroid ``A``: ``dim`` is
then the rank of ``A`` rather than the chart dimension.  Forms of degree -1
and ``dim + 1`` exist only as zero objects so boundary degrees need no special
cases.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

from .bundle import BidiffOp, Bundle, BundleMap, FirstOrderOp, Section, _add_into
from .errors import DimensionMismatch, IndexOutOfRange, ShapeMismatch
from .poly import Poly

__all__ = [
    "Chart",
    "VectorField",
    "Form",
    "wedge",
    "exterior_d",
    "interior",
    "lie_derivative",
    "lie_bracket",
    "tangent_bundle",
    "form_bundle",
    "form_index",
    "form_to_section",
    "section_to_form",
    "BaseAlgebroid",
    "CartanTriple",
    "base_cartan",
    "a_exterior_d",
    "a_interior",
    "a_lie_derivative",
    "cartan_operators",
]


@dataclass(frozen=True)
class Chart:
    n: int
    names: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a chart needs at least one coordinate")

    def coordinate(self, i):
        return Poly.var(self.n, i)

    def name(self, i):
        return self.names[i] if self.names else f"x{i + 1}"


def _nvars(obj):
    return obj.n if isinstance(obj, Chart) else int(obj)


class VectorField:
    """A vector field: ``n`` polynomial components on an ``n``-dimensional chart."""

    __slots__ = ("components",)

    def __init__(self, components):
        comps = tuple(components)
        if not comps:
            raise ValueError("a vector field needs at least one component")
        n = comps[0].nvars if isinstance(comps[0], Poly) else None
        if n is None:
            n = next((c.nvars for c in comps if isinstance(c, Poly)), len(comps))
        comps = tuple(c if isinstance(c, Poly) else Poly.const(n, c) for c in comps)
        if any(c.nvars != n for c in comps):
            raise DimensionMismatch(len(comps), n, "vector field component chart")
        if len(comps) != n:
            raise DimensionMismatch(len(comps), n, "component count")
        self.components = comps

    @classmethod
    def coordinate(cls, n, i, coef=None):
        comps = [Poly.zero(n)] * n
        comps[i] = coef if coef is not None else Poly.const(n, 1)
        return cls(comps)

    @classmethod
    def parse(cls, texts, n):
        return cls([Poly.parse(t, n) for t in texts])

    @property
    def nvars(self):
        return len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __eq__(self, other):
        if not isinstance(other, VectorField):
            return NotImplemented
        return self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def __add__(self, other):
        return VectorField([a + b for a, b in zip(self, other)])

    def __sub__(self, other):
        return VectorField([a - b for a, b in zip(self, other)])

    def scale(self, f):
        if not isinstance(f, Poly):
            f = Poly.const(self.nvars, f)
        return VectorField([f * a for a in self])

    def apply(self, f):
        """The directional derivative ``V(f)``."""
        out = Poly.zero(self.nvars)
        for i, c in enumerate(self.components):
            if c:
                out = out + c * f.partial(i)
        return out

    def is_zero(self):
        return not any(self.components)

    def __repr__(self):
        return f"VectorField({[str(c) for c in self.components]})"


def _sort_sign(indices):
    """Sign of the permutation sorting ``indices``; 0 if any index repeats."""
    idx = list(indices)
    if len(set(idx)) != len(idx):
        return 0, None
    sign = 1
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return sign, tuple(idx)


class Form:
    """A ``p``-form with polynomial coefficients over ``dim`` index values."""

    __slots__ = ("nvars", "degree", "dim", "coeffs")

    def __init__(self, nvars, degree, coeffs=None, dim=None):
        dim = nvars if dim is None else dim
        if not -1 <= degree <= dim + 1:
            raise ShapeMismatch(f"degree {degree} outside -1..{dim + 1}")
        clean = {}
        for key, p in (coeffs or {}).items():
            key = tuple(key)
            if not isinstance(p, Poly):
                p = Poly.const(nvars, p)
            if p.nvars != nvars:
                raise DimensionMismatch(p.nvars, nvars)
            if not p:
                continue
            if degree < 0 or degree > dim:
                raise ShapeMismatch(f"degree-{degree} forms are always zero")
            if len(key) != degree:
                raise ShapeMismatch(f"key {key} has the wrong length for a {degree}-form")
            if any(not 0 <= k < dim for k in key):
                raise IndexOutOfRange(f"form index {key} outside 0..{dim - 1}")
            sign, skey = _sort_sign(key)
            if sign == 0:
                continue
            _add_into(clean, skey, p.scale(sign))
        self.nvars = nvars
        self.degree = degree
        self.dim = dim
        self.coeffs = clean

    @classmethod
    def zero(cls, nvars, degree, dim=None):
        return cls(nvars, degree, {}, dim)

    @classmethod
    def function(cls, f, dim=None):
        return cls(f.nvars, 0, {(): f}, dim)

    @classmethod
    def basis(cls, nvars, indices, coef=None, dim=None):
        coef = coef if coef is not None else Poly.const(nvars, 1)
        return cls(nvars, len(indices), {tuple(indices): coef}, dim)

    def __getitem__(self, indices):
        """Coefficient at an arbitrary index tuple, with antisymmetry applied."""
        sign, key = _sort_sign(indices)
        if sign == 0:
            return Poly.zero(self.nvars)
        p = self.coeffs.get(key)
        if p is None:
            return Poly.zero(self.nvars)
        return p if sign > 0 else -p

    def is_zero(self):
        return not self.coeffs

    def _compatible(self, other):
        if self.nvars != other.nvars:
            raise DimensionMismatch(self.nvars, other.nvars)
        if self.dim != other.dim:
            raise DimensionMismatch(self.dim, other.dim, "form index range")

    def __eq__(self, other):
        if not isinstance(other, Form):
            return NotImplemented
        if self.is_zero() and other.is_zero():
            return self.nvars == other.nvars
        return (self.nvars, self.degree, self.dim, self.coeffs) == (
            other.nvars,
            other.degree,
            other.dim,
            other.coeffs,
        )

    def __hash__(self):
        return hash((self.degree, frozenset(self.coeffs.items())))

    def __add__(self, other):
        self._compatible(other)
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        if self.degree != other.degree:
            raise ShapeMismatch("cannot add forms of different degree")
        acc = dict(self.coeffs)
        for k, p in other.coeffs.items():
            _add_into(acc, k, p)
        return Form(self.nvars, self.degree, acc, self.dim)

    def __neg__(self):
        return Form(self.nvars, self.degree, {k: -p for k, p in self.coeffs.items()}, self.dim)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, f):
        if not isinstance(f, Poly):
            f = Poly.const(self.nvars, f)
        return Form(self.nvars, self.degree, {k: f * p for k, p in self.coeffs.items()}, self.dim)

    def __str__(self):
        if self.is_zero():
            return "0"
        parts = []
        for key in sorted(self.coeffs):
            p = self.coeffs[key]
            if not key:
                parts.append(f"({p})")
            else:
                idx = ",".join(str(k + 1) for k in key)
                parts.append(f"({p})*d{idx}")
        return " + ".join(parts)

    def __repr__(self):
        return f"Form(deg={self.degree}, {self})"


def wedge(a, b):
    """Exterior product; the result is the zero form when degrees overflow."""
    a._compatible(b)
    deg = a.degree + b.degree
    if a.degree < 0 or b.degree < 0:
        return Form.zero(a.nvars, max(deg, -1), a.dim)
    if deg > a.dim:
        return Form.zero(a.nvars, a.dim + 1, a.dim)
    acc = {}
    for I, p in a.coeffs.items():
        for J, q in b.coeffs.items():
            sign, key = _sort_sign(I + J)
            if sign:
                _add_into(acc, key, (p * q).scale(sign))
    return Form(a.nvars, deg, acc, a.dim)


def exterior_d(a):
    """``d(f dx^I) = sum_j d_j f dx^j ^ dx^I`` on a chart."""
    if a.dim != a.nvars:
        raise DimensionMismatch(a.dim, a.nvars, "chart form index range")
    deg = a.degree + 1
    if deg > a.dim:
        return Form.zero(a.nvars, a.dim + 1)
    if a.degree < 0:
        return Form.zero(a.nvars, 0)
    acc = {}
    for I, p in a.coeffs.items():
        for j in range(a.nvars):
            if j in I:
                continue
            dp = p.partial(j)
            if dp:
                sign, key = _sort_sign((j,) + I)
                _add_into(acc, key, dp.scale(sign))
    return Form(a.nvars, deg, acc)


def _contract(components, a):
    """``(iota_V a)_J = V^j a_{jJ}`` for a section-like list of components."""
    if a.degree <= 0:
        return Form.zero(a.nvars, -1 if a.degree <= 0 else a.degree - 1, a.dim)
    acc = {}
    for I, p in a.coeffs.items():
        for s, j in enumerate(I):
            vj = components[j]
            if vj:
                rest = I[:s] + I[s + 1:]
                _add_into(acc, rest, (vj * p).scale(-1 if s % 2 else 1))
    return Form(a.nvars, a.degree - 1, acc, a.dim)


def interior(V, a):
    """Interior product; degree-0 (or lower) input gives the zero (-1)-form."""
    if V.nvars != a.nvars:
        raise DimensionMismatch(V.nvars, a.nvars)
    if a.dim != a.nvars:
        raise DimensionMismatch(a.dim, a.nvars, "chart form index range")
    return _contract(V.components, a)


def lie_derivative(V, a):
    """``L_V = d i_V + i_V d``."""
    if V.nvars != a.nvars:
        raise DimensionMismatch(V.nvars, a.nvars)
    if a.degree < 0 or a.degree > a.dim:
        return Form.zero(a.nvars, a.degree, a.dim)
    out = exterior_d(interior(V, a)) + interior(V, exterior_d(a))
    if out.is_zero():
        return Form.zero(a.nvars, a.degree, a.dim)
    return out


def lie_bracket(U, V):
    """``[U, V]^i = U^j d_j V^i - V^j d_j U^i``."""
    if U.nvars != V.nvars:
        raise DimensionMismatch(U.nvars, V.nvars)
    return VectorField([U.apply(V[i]) - V.apply(U[i]) for i in range(U.nvars)])


# -- forms as sections of trivial bundles ------------------------------------


def form_index(dim, degree):
    """Ordered list of increasing index tuples of the given length."""
    if degree < 0 or degree > dim:
        return []
    return list(combinations(range(dim), degree))


def _form_labels(dim, degree, prefix):
    if degree == 0:
        return ("1",)
    return tuple("^".join(f"{prefix}{k + 1}" for k in key) for key in form_index(dim, degree))


def form_bundle(nvars, degree, dim=None, name=None, prefix=None):
    """The bundle of ``degree``-forms; rank ``C(dim, degree)`` (0 off range)."""
    dim = nvars if dim is None else dim
    prefix = prefix or ("dx" if dim == nvars else "a")
    rank = comb(dim, degree) if 0 <= degree <= dim else 0
    labels = _form_labels(dim, degree, prefix) if rank else ()
    return Bundle(name or f"L{degree}", rank, nvars, labels)


def tangent_bundle(nvars, name="T"):
    return Bundle(name, nvars, nvars, tuple(f"d/dx{i + 1}" for i in range(nvars)))


def form_to_section(form, bundle=None):
    bundle = bundle or form_bundle(form.nvars, form.degree, form.dim)
    keys = form_index(form.dim, form.degree)
    if len(keys) != bundle.rank:
        raise ShapeMismatch(f"{form.degree}-form does not fit bundle {bundle.name}")
    return Section(bundle, [form.coeffs.get(k, Poly.zero(form.nvars)) for k in keys])


def section_to_form(section, degree, dim=None):
    dim = section.nvars if dim is None else dim
    keys = form_index(dim, degree)
    if len(keys) != section.bundle.rank:
        raise ShapeMismatch(f"section of rank {section.bundle.rank} is not a {degree}-form")
    if not keys:
        return Form.zero(section.nvars, degree, dim)
    return Form(section.nvars, degree, dict(zip(keys, section.components)), dim)


def _vector(section):
    return VectorField(section.components)


def cartan_operators(nvars):
    """Tensor packagings of the chart Cartan operators for every form degree.

    Returns a dict with ``T`` (tangent bundle), ``L`` (list of form bundles),
    ``d[p]`` (FirstOrderOp ``L[p] -> L[p+1]``), ``iota[p]`` (BidiffOp
    ``T x L[p] -> L[p-1]``), ``lie[p]`` and ``wedge1[p]`` (``L1 x L[p] ->
    L[p+1]``), plus ``bracket`` (the Lie bracket as a BidiffOp on ``T``).
    The tensors are read off the Form-level operators by probing.
    """
    return _cartan_cache(nvars)


_CARTAN = {}


def _cartan_cache(nvars):
    if nvars in _CARTAN:
        return _CARTAN[nvars]
    T = tangent_bundle(nvars)
    L = [form_bundle(nvars, p) for p in range(nvars + 1)]
    ops = {"T": T, "L": L, "d": {}, "iota": {}, "lie": {}, "wedge1": {}}
    for p in range(nvars + 1):
        if p < nvars:
            ops["d"][p] = FirstOrderOp.from_callable(
                lambda s, p=p: form_to_section(exterior_d(section_to_form(s, p)), L[p + 1]),
                L[p],
                L[p + 1],
            )
            ops["wedge1"][p] = BidiffOp.from_callable(
                lambda w, s, p=p: form_to_section(
                    wedge(section_to_form(w, 1), section_to_form(s, p)), L[p + 1]
                ),
                L[1],
                L[p],
                L[p + 1],
            )
        if p > 0:
            ops["iota"][p] = BidiffOp.from_callable(
                lambda V, s, p=p: form_to_section(interior(_vector(V), section_to_form(s, p)), L[p - 1]),
                T,
                L[p],
                L[p - 1],
            )
        ops["lie"][p] = BidiffOp.from_callable(
            lambda V, s, p=p: form_to_section(lie_derivative(_vector(V), section_to_form(s, p)), L[p]),
            T,
            L[p],
            L[p],
        )
    ops["bracket"] = BidiffOp.from_callable(
        lambda U, V: Section(T, lie_bracket(_vector(U), _vector(V)).components), T, T, T
    )
    _CARTAN[nvars] = ops
    return ops


# -- base algebroids ---------------------------------------------------------


class BaseAlgebroid:
    """An almost-Lie algebroid ``(A, rho_A, [.,.]_A)`` replacing the tangent bundle.

    Construction verifies antisymmetry and the right-Leibniz rule with the
    axiom engine (sections up to ``verify_degree``) and records the result.
    """

    def __init__(self, anchor, bracket, name="A", verify_degree=2, verify=True):
        A = anchor.domain
        if anchor.codomain.rank != A.nvars:
            raise ShapeMismatch("the anchor must land in the tangent bundle")
        if (bracket.left.rank, bracket.right.rank, bracket.out.rank) != (A.rank,) * 3:
            raise ShapeMismatch("the bracket must act on sections of A")
        self.name = name
        self.bundle = A
        self.anchor = anchor
        self.bracket = bracket
        self.verified_degree = None
        self.reports = ()
        if verify:
            from . import engine

            reports = (
                engine.check_antisymmetry(bracket, degree=verify_degree),
                engine.check_right_leibniz(bracket, anchor),
            )
            self.reports = reports
            failed = [r for r in reports if not r.passed]
            if failed:
                from .errors import Refused

                raise Refused(
                    f"base algebroid {name} fails {failed[0].axiom}: {failed[0].summary()}"
                )
            self.verified_degree = verify_degree

    @property
    def rank(self):
        return self.bundle.rank

    @property
    def nvars(self):
        return self.bundle.nvars

    @classmethod
    def tangent(cls, nvars):
        T = tangent_bundle(nvars)
        ops = _cartan_cache(nvars)
        inst = cls(BundleMap.identity(T), ops["bracket"], name="T", verify=False)
        inst.verified_degree = float("inf")
        inst.is_tangent = True
        return inst

    is_tangent = False

    @classmethod
    def from_structure(cls, anchor, structure=None, name="A", verify_degree=2, verify=True):
        """Bracket determined by the anchor and structure functions.

        ``structure[(gamma, alpha, beta)]`` is the ``gamma`` component of
        ``[e_alpha, e_beta]_A``; the bracket then reads
        ``[a, b]^g = c^g_ab a^a b^b + rho(a)(b^g) - rho(b)(a^g)``.
        """
        A = anchor.domain
        P, Q = {}, {}
        for (i, al), p in anchor.entries.items():
            for g in range(A.rank):
                P[(g, al, g, i)] = p
                Q[(g, g, al, i)] = -p
        bracket = BidiffOp(A, A, A, C=structure or {}, P=P, Q=Q)
        return cls(anchor, bracket, name=name, verify_degree=verify_degree, verify=verify)

    def structure(self, g, a, b):
        return self.bracket.C.get((g, a, b)) or Poly.zero(self.nvars)

    def anchor_of(self, section):
        """``rho_A(a)`` as a vector field."""
        return VectorField(self.anchor.apply(section).components)

    def dual_form_bundle(self, degree, name=None):
        if self.is_tangent:
            return form_bundle(self.nvars, degree, name=name)
        return form_bundle(self.nvars, degree, dim=self.rank, name=name, prefix="a")

    def __repr__(self):
        return f"BaseAlgebroid({self.name}, rank {self.rank})"


def a_exterior_d(A, form):
    """Exterior derivative of an A-form through the anchor and structure functions."""
    if form.dim != A.rank:
        raise DimensionMismatch(form.dim, A.rank, "A-form index range")
    p = form.degree
    if p < 0:
        return Form.zero(A.nvars, 0, A.rank)
    if p + 1 > A.rank:
        return Form.zero(A.nvars, A.rank + 1, A.rank)
    rho = A.anchor
    acc = {}
    for key in form_index(A.rank, p + 1):
        total = Poly.zero(A.nvars)
        for s, al in enumerate(key):
            rest = key[:s] + key[s + 1:]
            w = form[rest]
            if w:
                for i in range(A.nvars):
                    r = rho.entries.get((i, al))
                    if r:
                        total = total + (r * w.partial(i)).scale(-1 if s % 2 else 1)
        for s in range(len(key)):
            for t in range(s + 1, len(key)):
                rest = key[:s] + key[s + 1:t] + key[t + 1:]
                sign = -1 if (s + t) % 2 else 1
                for g in range(A.rank):
                    c = A.bracket.C.get((g, key[s], key[t]))
                    if c:
                        w = form[(g,) + rest]
                        if w:
                            total = total + (c * w).scale(sign)
        if total:
            acc[key] = total
    return Form(A.nvars, p + 1, acc, A.rank)


def a_interior(A, a, form):
    if form.dim != A.rank:
        raise DimensionMismatch(form.dim, A.rank, "A-form index range")
    comps = a.components if hasattr(a, "components") else a
    return _contract(list(comps), form)


def a_lie_derivative(A, a, form):
    if form.degree < 0 or form.degree > form.dim:
        return Form.zero(A.nvars, form.degree, form.dim)
    out = a_exterior_d(A, a_interior(A, a, form)) + a_interior(A, a, a_exterior_d(A, form))
    return out if not out.is_zero() else Form.zero(A.nvars, form.degree, form.dim)


@dataclass(frozen=True)
class CartanTriple:
    """Cartan operators of a base algebroid around degree ``k``.

    ``d``: ``L[k-1] -> L[k]``; ``iota``: ``A x L[k] -> L[k-1]``;
    ``lie``: ``A x L[k] -> L[k]``; ``lie_r``: ``A x L[k-1] -> L[k-1]``;
    ``wedge``: ``L[1] x L[k-1] -> L[k]``, the symbol of ``d``.
    """

    base: BaseAlgebroid
    k: int
    R: Bundle
    Z: Bundle
    d: FirstOrderOp
    iota: BidiffOp
    lie: BidiffOp
    lie_r: BidiffOp
    wedge: BidiffOp


def base_cartan(A, k):
    """Package ``(d_A, iota_A, L_A)`` of ``A`` as tensors between degrees ``k-1`` and ``k``."""
    if not 1 <= k <= A.rank:
        raise ShapeMismatch(f"k = {k} outside 1..{A.rank}")
    m = A.rank
    R = A.dual_form_bundle(k - 1, name=f"L{k - 1}")
    Z = A.dual_form_bundle(k, name=f"L{k}")
    L1 = A.dual_form_bundle(1, name="L1")
    Ab = A.bundle

    def to_form(s, p):
        return section_to_form(s, p, m)

    d = FirstOrderOp.from_callable(lambda s: form_to_section(a_exterior_d(A, to_form(s, k - 1)), Z), R, Z)
    iota = BidiffOp.from_callable(
        lambda a, s: form_to_section(a_interior(A, a, to_form(s, k)), R), Ab, Z, R
    )
    lie = BidiffOp.from_callable(
        lambda a, s: form_to_section(a_lie_derivative(A, a, to_form(s, k)), Z), Ab, Z, Z
    )
    lie_r = BidiffOp.from_callable(
        lambda a, s: form_to_section(a_lie_derivative(A, a, to_form(s, k - 1)), R), Ab, R, R
    )
    wedge_op = BidiffOp.from_callable(
        lambda w, s: form_to_section(wedge(to_form(w, 1), to_form(s, k - 1)), Z), L1, R, Z
    )
    return CartanTriple(A, k, R, Z, d, iota, lie, lie_r, wedge_op)
