"""Named pre-calculi, the standard bracket, twisting and twist extraction."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .bundle import (
    BidiffOp,
    Bundle,
    BundleMap,
    FirstOrderOp,
    MetricTensor,
    Section,
    SplitPresentation,
    _add_into,
    bidiff_equal,
    check_split,
)
from .chart import (
    BaseAlgebroid,
    Chart,
    base_cartan,
    cartan_operators,
    exterior_d,
    form_bundle,
    form_index,
    form_to_section,
    interior,
    lie_bracket,
    lie_derivative,
    section_to_form,
    tangent_bundle,
    wedge,
    Form,
    VectorField,
)
from . import engine
from .errors import HypothesisViolation, NotInImage, Refused, ShapeMismatch
from .poly import Poly

__all__ = [
    "PreCalculus",
    "TwistData",
    "AlgebroidStack",
    "make_cartan_precalculus",
    "make_connection_precalculus",
    "make_lie_algebroid_precalculus",
    "make_zero_d_precalculus",
    "standard_bracket",
    "canned_dorfman",
    "twist",
    "twist_from_form",
    "random_two_form",
    "extract_twist",
    "induce_precalculus",
    "connection_differential",
]


def _nvars(chart):
    if isinstance(chart, Chart):
        return chart.n
    if isinstance(chart, int) and chart >= 1:
        return chart
    raise ShapeMismatch(f"expected a chart or a positive dimension, got {chart!r}")


def _l_from_wedge(wedge_op):
    """``l`` keyed ``(z, r, alpha)`` from a wedge operator ``L1 x R -> Z``."""
    return {(z, r, al): p for (z, al, r), p in wedge_op.C.items()}


# -- pre-calculi -------------------------------------------------------------


class PreCalculus:
    """The quintet ``(iota, d, l, L^R, L^Z)`` over a base algebroid.

    ``l`` is a dict keyed ``(z, r, alpha)``: ``l_omega r = l^{z,r,alpha} omega_alpha r^r e_z``
    for an ``A``-covector ``omega``.  Construction runs the six checks and
    keeps the aggregate report in ``report``.
    """

    def __init__(self, base, R, Z, iota, d, l, lie_r, lie_z, provenance="user", verify=True, **check_opts):
        self.base = base
        self.R = R
        self.Z = Z
        self.iota = iota
        self.d = d
        self.l = {k: v for k, v in l.items() if v}
        self.lie_r = lie_r
        self.lie_z = lie_z
        self.provenance = provenance
        m = base.rank
        for (z, r, al) in self.l:
            if not (0 <= z < Z.rank and 0 <= r < R.rank and 0 <= al < m):
                raise ShapeMismatch(f"l entry ({z}, {r}, {al}) out of range")
        self.report = engine.check_precalculus(self, **check_opts) if verify else None

    @property
    def passed(self):
        return self.report is not None and self.report.passed

    def same_operators(self, other):
        """Tensor-level equality of all five maps."""
        return (
            bidiff_equal(self.iota, other.iota)
            and self.d == other.d
            and self.l == other.l
            and bidiff_equal(self.lie_r, other.lie_r)
            and bidiff_equal(self.lie_z, other.lie_z)
        )

    def __repr__(self):
        verdict = "unchecked" if self.report is None else self.report.verdict
        return f"PreCalculus({self.provenance}, R rank {self.R.rank}, Z rank {self.Z.rank}, {verdict})"


def make_cartan_precalculus(chart, k, **check_opts):
    """Interior product, exterior derivative, wedge and Lie derivative between degrees ``k-1`` and ``k``."""
    n = _nvars(chart)
    if not 1 <= k <= n:
        raise ShapeMismatch(f"k = {k} outside 1..{n}")
    ops = cartan_operators(n)
    return PreCalculus(
        BaseAlgebroid.tangent(n),
        ops["L"][k - 1],
        ops["L"][k],
        ops["iota"][k],
        ops["d"][k - 1],
        _l_from_wedge(ops["wedge1"][k - 1]),
        ops["lie"][k - 1],
        ops["lie"][k],
        provenance="cartan",
        **check_opts,
    )


def make_lie_algebroid_precalculus(A, k, **check_opts):
    """Cartan calculus of a base algebroid on ``(Lambda^{k-1} A*, Lambda^k A*)``."""
    ct = base_cartan(A, k)
    return PreCalculus(
        A, ct.R, ct.Z, ct.iota, ct.d, _l_from_wedge(ct.wedge), ct.lie_r, ct.lie, provenance="lie-algebroid", **check_opts
    )


def _gamma(n, m, gamma):
    out = {}
    for (a, b, i), p in (gamma or {}).items():
        if not (0 <= a < m and 0 <= b < m and 0 <= i < n):
            raise ShapeMismatch(f"connection coefficient ({a}, {b}, {i}) out of range")
        p = p if isinstance(p, Poly) else (Poly.parse(p, n) if isinstance(p, str) else Poly.const(n, p))
        if p:
            out[(a, b, i)] = p
    return out


def _valued_forms(n, m, p, name):
    L = form_bundle(n, p) if 0 <= p <= n else None
    size = L.rank if L else 0
    labels = tuple(f"p{a + 1}*{L.label(I)}" for a in range(m) for I in range(size))
    return Bundle(name, m * size, n, labels), size


def _split_valued(s, m, size, p):
    return [section_to_form(Section(form_bundle(s.nvars, p), list(s.components[a * size:(a + 1) * size])), p) for a in range(m)]


def _join_valued(forms, bundle, p):
    comps = []
    L = form_bundle(bundle.nvars, p)
    for w in forms:
        comps.extend(form_to_section(w, L).components)
    return Section(bundle, comps)


def connection_differential(n, m, gamma, p):
    """``d^nabla`` from ``P``-valued ``p``-forms to ``(p+1)``-forms."""
    gamma = _gamma(n, m, gamma)
    src, ssize = _valued_forms(n, m, p, f"P*L{p}")
    dst, _ = _valued_forms(n, m, p + 1, f"P*L{p + 1}")

    def fn(s):
        ws = _split_valued(s, m, ssize, p)
        out = []
        for a in range(m):
            acc = exterior_d(ws[a])
            for (a2, b, i), g in gamma.items():
                if a2 == a:
                    acc = acc + wedge(Form.basis(n, (i,), g), ws[b])
            out.append(acc)
        return _join_valued(out, dst, p + 1)

    return FirstOrderOp.from_callable(fn, src, dst)


def make_connection_precalculus(P, gamma, k, nvars=None, **check_opts):
    """Exterior covariant derivative and covariant Lie derivative on ``P``-valued forms.

    ``P`` is a Bundle (or a rank with ``nvars`` given); ``gamma[(a, b, i)]`` is
    ``Gamma^a_{b i}``, so ``nabla_i e_b = Gamma^a_{b i} e_a``.  Components are
    stored ``P``-major: index ``a * dim(Lambda^p) + I``.
    """
    if isinstance(P, Bundle):
        m, n = P.rank, P.nvars
    else:
        m, n = int(P), _nvars(nvars)
    if not 1 <= k <= n:
        raise ShapeMismatch(f"k = {k} outside 1..{n}")
    gamma = _gamma(n, m, gamma)
    T = tangent_bundle(n)
    R, rsize = _valued_forms(n, m, k - 1, f"P*L{k - 1}")
    Z, zsize = _valued_forms(n, m, k, f"P*L{k}")
    d = connection_differential(n, m, gamma, k - 1)

    def vec(V):
        return VectorField(V.components)

    def iota_fn(V, s):
        ws = _split_valued(s, m, zsize, k)
        return _join_valued([interior(vec(V), w) for w in ws], R, k - 1)

    def lie_fn(p, size, bundle):
        def fn(V, s):
            ws = _split_valued(s, m, size, p)
            out = []
            for a in range(m):
                acc = lie_derivative(vec(V), ws[a])
                for (a2, b, i), g in gamma.items():
                    if a2 == a and V[i]:
                        acc = acc + ws[b].scale(V[i] * g)
                out.append(acc)
            return _join_valued(out, bundle, p)

        return fn

    iota = BidiffOp.from_callable(iota_fn, T, Z, R)
    lie_r = BidiffOp.from_callable(lie_fn(k - 1, rsize, R), T, R, R)
    lie_z = BidiffOp.from_callable(lie_fn(k, zsize, Z), T, Z, Z)
    wedge1 = cartan_operators(n)["wedge1"][k - 1]
    l = {}
    for (J, i, I), p in wedge1.C.items():
        for a in range(m):
            l[(a * zsize + J, a * rsize + I, i)] = p
    return PreCalculus(BaseAlgebroid.tangent(n), R, Z, iota, d, l, lie_r, lie_z, provenance="connection", **check_opts)


def make_zero_d_precalculus(base, Z, nabla=None, R=None, iota=None, lie_r=None, d0=None, **check_opts):
    """``d`` zero (or zeroth-order ``d0``), ``l = 0`` and ``L^Z`` a connection.

    ``base`` is a BaseAlgebroid or a chart dimension (tangent base).
    ``nabla[(z, w, alpha)]`` is the coefficient of ``e_z`` in ``nabla_{e_alpha} e_w``.
    ``R`` defaults to the trivial line bundle, ``iota`` to zero and ``L^R``
    to the componentwise derivative along the anchor.
    """
    if not isinstance(base, BaseAlgebroid):
        base = BaseAlgebroid.tangent(_nvars(base))
    A = base.bundle
    n = A.nvars
    if isinstance(Z, int):
        Z = Bundle("Z", Z, n)
    R = R if isinstance(R, Bundle) else Bundle("R", 1 if R is None else R, n)

    def derivation(bundle, coeffs):
        P = {}
        for (i, al), p in base.anchor.entries.items():
            for s in range(bundle.rank):
                P[(s, al, s, i)] = p
        C = {}
        for (z, w, al), p in (coeffs or {}).items():
            if not (0 <= z < bundle.rank and 0 <= w < bundle.rank and 0 <= al < A.rank):
                raise ShapeMismatch(f"connection coefficient ({z}, {w}, {al}) out of range")
            C[(z, al, w)] = p
        return BidiffOp(A, bundle, bundle, C=C, P=P)

    lie_z = derivation(Z, nabla)
    if lie_r is None:
        lie_r = derivation(R, None)
    if iota is None:
        iota = BidiffOp(A, Z, R)
    if d0 is None:
        d = FirstOrderOp.zero(R, Z)
    else:
        d = FirstOrderOp.zeroth_order(d0 if isinstance(d0, BundleMap) else BundleMap(R, Z, d0))
    return PreCalculus(base, R, Z, iota, d, {}, lie_r, lie_z, provenance="zero-d", **check_opts)


# -- algebroid stacks --------------------------------------------------------


@dataclass
class AlgebroidStack:
    """A bracket with its metric, split presentation and calculus data.

    Unpacks as ``bracket, metric, split``.  ``d``, ``l`` and ``lie_r`` are
    the ``R``-side data; the symmetric-part operator is ``chi o d`` and the
    map to the base is ``Q``.
    """

    bracket: BidiffOp
    metric: MetricTensor
    split: SplitPresentation
    base: BaseAlgebroid
    d: FirstOrderOp
    l: dict
    lie_r: BidiffOp
    provenance: str = "user"
    precalculus: object = field(default=None, repr=False)

    def __iter__(self):
        return iter((self.bracket, self.metric, self.split))

    @property
    def E(self):
        return self.bracket.left

    @property
    def R(self):
        return self.metric.R

    @property
    def rho(self):
        return self.split.Q

    @property
    def anchor(self):
        return self.base.anchor.compose(self.split.Q)

    @property
    def dirac(self):
        return self.d.after(self.split.chi)

    def with_bracket(self, bracket, provenance=None):
        return AlgebroidStack(
            bracket, self.metric, self.split, self.base, self.d, self.l, self.lie_r, provenance or self.provenance, self.precalculus
        )

    def classify(self, **opts):
        return engine.classify(self.bracket, self.rho, self.metric, self.dirac, self.lie_r, self.base, **opts)

    def locality(self):
        return engine.locality_from(self.dirac, self.metric)


def standard_bracket(pc):
    """``[a+z, b+y] = [a,b]_A + L^Z_a y - L^Z_b z + d iota_b z`` on ``A + Z``.

    Returns an AlgebroidStack carrying ``g_S(a+z, b+y) = iota_a y + iota_b z``
    and the canonical split.
    """
    if pc.report is None:
        pc.report = engine.check_precalculus(pc)
    if not pc.report.passed:
        failed = next(r for r in pc.report.subreports if not r.passed)
        raise Refused(f"pre-calculus fails {failed.axiom} ({failed.label}): {failed.summary()}")
    A, Z = pc.base.bundle, pc.Z
    E = A.direct_sum(Z, name="E")
    S = SplitPresentation.canonical(A, Z, E)
    Q, ret, inc_a, inc_z = S.Q, S.retraction, S.phi, S.chi
    lie_part = pc.lie_z.compose(M=inc_z, L=Q, R=ret)
    bracket = pc.base.bracket.compose(M=inc_a, L=Q, R=Q)
    bracket = bracket + lie_part - lie_part.swap()
    bracket = bracket + pc.iota.swap().then_first_order(pc.d).compose(M=inc_z, L=ret, R=Q)
    half = pc.iota.compose(L=Q, R=ret)
    g = MetricTensor(E, pc.R, (half + half.swap()).C)
    return AlgebroidStack(bracket, g, S, pc.base, pc.d, dict(pc.l), pc.lie_r, "standard", pc)


def canned_dorfman(chart, k=1):
    """The (higher) Dorfman bracket on ``T + Lambda^k T*`` assembled from chart formulas.

    ``[U + w, V + h] = [U, V] + L_U h - iota_V dw``; built independently of
    :func:`standard_bracket` so the two can be compared.
    """
    n = _nvars(chart)
    if not 1 <= k <= n:
        raise ShapeMismatch(f"k = {k} outside 1..{n}")
    ops = cartan_operators(n)
    T, L = ops["T"], ops["L"]
    A = BaseAlgebroid.tangent(n)
    E = T.direct_sum(L[k], name="E")

    def parts(u):
        V = VectorField(u.components[:n])
        w = section_to_form(Section(L[k], list(u.components[n:])), k)
        return V, w

    def join(V, w):
        return Section(E, list(V.components) + list(form_to_section(w, L[k]).components))

    def dorfman(u, v):
        U, w = parts(u)
        V, h = parts(v)
        form = lie_derivative(U, h) - interior(V, exterior_d(w))
        return join(lie_bracket(U, V), form)

    def pairing(u, v):
        U, w = parts(u)
        V, h = parts(v)
        return form_to_section(interior(U, h) + interior(V, w), L[k - 1])

    bracket = BidiffOp.from_callable(dorfman, E, E, E)
    g = MetricTensor(E, L[k - 1], BidiffOp.from_callable(pairing, E, E, L[k - 1]).C)
    S = SplitPresentation.canonical(T, L[k], E)
    return AlgebroidStack(
        bracket, g, S, A, ops["d"][k - 1], _l_from_wedge(ops["wedge1"][k - 1]), ops["lie"][k - 1], "dorfman"
    )


# -- twisting ----------------------------------------------------------------


class TwistData:
    """``F: A x A -> R`` (symmetric, tensorial) and ``H: A x A -> Z`` (tensorial in its second slot)."""

    def __init__(self, F, H, isotropic=None):
        if not F.is_tensorial():
            raise HypothesisViolation("F must be tensorial")
        if not bidiff_equal(F, F.swap()):
            raise HypothesisViolation("F must be symmetric")
        if H.P:
            raise HypothesisViolation("H must be tensorial in its second argument")
        if isotropic is None:
            isotropic = not F.C
        if isotropic:
            if F.C:
                raise HypothesisViolation("isotropic twist data needs F = 0")
            if H.Q or not bidiff_equal(H, -H.swap()):
                raise HypothesisViolation("with F = 0, H must be a Z-valued 2-form")
        self.F = F
        self.H = H
        self.isotropic = isotropic

    @classmethod
    def from_two_form(cls, H, R):
        A = H.left
        return cls(BidiffOp(A, A, R), H, True)

    def __eq__(self, other):
        if not isinstance(other, TwistData):
            return NotImplemented
        return bidiff_equal(self.F, other.F) and bidiff_equal(self.H, other.H)

    __hash__ = None

    def __repr__(self):
        return f"TwistData(F {len(self.F.C)} entries, H {len(self.H.C)}/{len(self.H.Q)}, isotropic={self.isotropic})"


def _twist_operator(H):
    return H.H if isinstance(H, TwistData) else H


def twist(bracket, split, H):
    """``bracket + chi o H o (Q x Q)``; accepts an AlgebroidStack too."""
    stack = None
    if isinstance(bracket, AlgebroidStack):
        stack, bracket = bracket, bracket.bracket
    H = _twist_operator(H)
    if H.left.rank != split.A.rank or H.right.rank != split.A.rank or H.out.rank != split.Z.rank:
        raise ShapeMismatch("twist must map A x A to Z")
    out = bracket + H.compose(M=split.chi, L=split.Q, R=split.Q)
    return stack.with_bracket(out, "twisted") if stack is not None else out


def twist_from_form(chart, k, form):
    """``(U, V) -> iota_U iota_V H`` for an ordinary ``(k+2)``-form ``H``, as ``Lambda^k``-valued 2-form data."""
    n = _nvars(chart)
    if form.degree != k + 2:
        raise ShapeMismatch(f"expected a {k + 2}-form, got degree {form.degree}")
    ops = cartan_operators(n)
    T, Lk = ops["T"], ops["L"][k]

    def fn(U, V):
        return form_to_section(interior(VectorField(U.components), interior(VectorField(V.components), form)), Lk)

    H = BidiffOp.from_callable(fn, T, T, Lk)
    return TwistData.from_two_form(H, ops["L"][k - 1])


def random_two_form(A, Z, degree=2, seed=0, density=0.5):
    """Seeded random antisymmetric tensorial ``H: A x A -> Z`` with coefficient degree ``<= degree``."""
    rng = random.Random(f"two-form/{seed}/{A.rank}/{Z.rank}/{A.nvars}/{degree}")
    n = A.nvars
    exps = engine._exponents(n, degree)
    C = {}
    for z in range(Z.rank):
        for a in range(A.rank):
            for b in range(a + 1, A.rank):
                if rng.random() >= density:
                    continue
                p = Poly.zero(n)
                for _ in range(rng.randint(1, 3)):
                    p = p + Poly(n, {rng.choice(exps): rng.choice([-3, -2, -1, 1, 2, 3])})
                if p:
                    C[(z, a, b)] = p
                    C[(z, b, a)] = -p
    return BidiffOp(A, A, Z, C=C)


# -- extraction and induction ------------------------------------------------


def _first_entry(*tensors):
    for name, t in tensors:
        if t:
            key = min(t)
            return name, key, t[key]
    return None


def _require_split(split, g):
    if g.E.rank != split.E.rank:
        raise ShapeMismatch("metric and split live on different bundles")
    rep = check_split(split, g)
    if not rep.exact:
        raise HypothesisViolation(f"not a split presentation: {rep.describe()}")
    if not rep.chi_isotropic:
        raise HypothesisViolation("chi is not g-isotropic")
    return rep


@dataclass
class Extraction:
    twist: TwistData
    reconstruction_ok: bool
    metric_ok: bool
    notes: tuple = ()


def extract_twist(bracket, g, split, pc_reference, base=None, detailed=False):
    """Recover ``(F, H)`` with ``g = g_S + F`` and ``[.,.] = [.,.]_S + chi H`` after ``phi + chi``.

    Raises HypothesisViolation when the split is not exact or ``chi`` is not
    isotropic, NotInImage when ``[phi a, phi b] - phi [a, b]`` leaves the
    image of ``chi``.  The structural laws of ``H`` and the reconstruction
    against the reference pre-calculus are verified before returning.
    """
    if isinstance(bracket, AlgebroidStack):
        bracket = bracket.bracket
    base = base or pc_reference.base
    _require_split(split, g)
    A, Z, R = split.A, split.Z, g.R
    if not getattr(base, "is_tangent", False):
        rep = engine.check_anchor_morphism(bracket, split.Q, base.bracket)
        if not rep.passed:
            raise HypothesisViolation(f"Q is not a bracket morphism: {rep.summary()}")
    phi, chi, ret = split.phi, split.chi, split.retraction
    F = BidiffOp(A, A, R, C=g.pullback(phi).entries)
    delta = bracket.compose(L=phi, R=phi) - base.bracket.compose(M=phi)
    H = delta.compose(M=ret)
    outside = delta - H.compose(M=chi)
    bad = _first_entry(("C", outside.C), ("P", outside.P), ("Q", outside.Q))
    if bad:
        name, key, p = bad
        raise NotInImage(
            f"[phi a, phi b] - phi[a, b] leaves the image of chi at {name}{tuple(x + 1 for x in key)} = {p}; "
            "the map to the base is not a bracket morphism"
        )
    if H.P:
        key = min(H.P)
        raise HypothesisViolation(f"H is not tensorial in its second slot (entry {tuple(x + 1 for x in key)})")
    expected_q = {}
    for (z, r, ga), lp in pc_reference.l.items():
        for (i, ga2), rp in base.anchor.entries.items():
            if ga2 != ga:
                continue
            for (r2, a, b), fp in F.C.items():
                if r2 == r:
                    _add_into(expected_q, (z, a, b, i), lp * rp * fp)
    if H.Q != expected_q:
        raise HypothesisViolation("H(f a, b) - f H(a, b) differs from l_{Df} F(a, b)")
    data = TwistData(F, H, isotropic=not F.C)

    forward, backward = split.iso()
    std = standard_bracket(pc_reference)
    transported = bracket.compose(M=backward, L=forward, R=forward)
    expected = twist(std.bracket, std.split, H)
    recon = transported.shape == expected.shape and bidiff_equal(transported, expected)
    g_back = g.pullback(forward)
    Fq = F.compose(L=std.split.Q, R=std.split.Q)
    metric_expected = dict(std.metric.entries)
    for key, p in Fq.C.items():
        _add_into(metric_expected, key, p)
    metric_ok = g_back.entries == metric_expected
    notes = []
    if not recon:
        notes.append("transported bracket differs from the twisted standard bracket of the reference pre-calculus")
    if not metric_ok:
        notes.append("transported metric differs from g_S + F")
    if detailed:
        return Extraction(data, recon, metric_ok, tuple(notes))
    if notes:
        raise HypothesisViolation("; ".join(notes))
    return data


def induce_precalculus(bracket, g, split, d=None, l=None, lie_r=None, base=None, **check_opts):
    """``iota_a z = g(chi z, phi a)`` and ``chi L^Z_a z = [phi a, chi z]``.

    ``bracket`` may be an AlgebroidStack, in which case ``d``, ``l``, ``L^R``
    and the base come from it.
    """
    if isinstance(bracket, AlgebroidStack):
        st = bracket
        bracket = st.bracket
        d = d or st.d
        l = st.l if l is None else l
        lie_r = lie_r or st.lie_r
        base = base or st.base
    if d is None or l is None or lie_r is None:
        raise ShapeMismatch("d, l and L^R must be supplied")
    base = base or BaseAlgebroid.tangent(bracket.nvars)
    _require_split(split, g)
    phi, chi, ret = split.phi, split.chi, split.retraction
    iota = BidiffOp(split.A, split.Z, g.R, C=g.pairing(phi, chi))
    mixed = bracket.compose(L=phi, R=chi)
    lie_z = mixed.compose(M=ret)
    outside = mixed - lie_z.compose(M=chi)
    bad = _first_entry(("C", outside.C), ("P", outside.P), ("Q", outside.Q))
    if bad:
        name, key, p = bad
        a, b, c = key[0], key[1], key[2]
        where = f"phi(e{b + 1}), chi(e{c + 1})"
        if name != "C":
            where += f" with a factor x{key[3] + 1} on the {'right' if name == 'P' else 'left'}"
        raise NotInImage(f"[{where}] has component {p} in E-direction {a + 1} outside the image of chi")
    return PreCalculus(base, g.R, split.Z, iota, d, l, lie_r, lie_z, provenance="induced", **check_opts)
