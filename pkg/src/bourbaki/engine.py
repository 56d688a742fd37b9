"""Decision procedures for the algebroid axioms.

Two kinds of verdict are produced:

``proved-structural``
    Leibniz-type rules of an order-(1,1) operator are identities between its
    ``P``/``Q`` tensors and the anchor; comparing tensors is a proof.

``verified``
    Identities that differentiate coefficient tensors (symmetric part,
    invariance, anchor morphism, Jacobi, BC1, BC2) are checked on every
    monomial section ``x^alpha e_b`` with ``|alpha| <= degree`` plus seeded
    random sections.  The monomial sweep is carried out on the jet form of
    the residual (see :mod:`bourbaki.multilinear`), which is equivalent to
    evaluating every tuple but costs one symbolic pass.  Random sections are
    evaluated directly with the bundle-level operators as a cross-check.

Failed reports carry a witness that re-evaluates to a nonzero residual.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import prod

from .bundle import BidiffOp, Bundle, BundleMap, FirstOrderOp, LocalityOperator, Section, check_metric, _add_into
from .errors import ShapeMismatch
from .multilinear import DirectBackend, JetBackend, Tensorial
from .poly import Poly

__all__ = [
    "AXIOM_LABELS",
    "SectionBasis",
    "Witness",
    "CheckReport",
    "HierarchyReport",
    "check_right_leibniz",
    "check_locality",
    "check_symmetric_part",
    "check_metric_invariance",
    "check_anchor_morphism",
    "check_jacobi",
    "check_antisymmetry",
    "check_precalculus",
    "check_cartan_suite",
    "CARTAN_IDENTITIES",
    "classify",
    "default_witness_points",
    "LEVELS",
]

DEFAULT_DEGREE = 3
DEFAULT_SAMPLES = 8
DEFAULT_SEED = 0

AXIOM_LABELS = {
    "right-leibniz": "right-Leibniz rule",
    "locality": "locality / left-Leibniz rule",
    "symmetric-part": "symmetric part = D g",
    "metric-invariance": "metric invariance",
    "anchor-morphism": "anchor is a bracket morphism",
    "jacobi": "Leibniz-Jacobi",
    "antisymmetry": "antisymmetry",
    "lie-r-derivation": "L^R is a derivation along the anchor",
    "locality-symmetric": "symmetric part has the locality form",
    "precalculus": "Bourbaki pre-calculus",
    "iota-tensorial": "iota is tensorial",
    "d-symbol": "d has symbol l",
    "lie-z-derivation": "L^Z_a(f z) = f L^Z_a z + rho(a)(f) z",
    "lie-z-symbol": "L^Z_{fa} z = f L^Z_a z + l_{Df} iota_a z",
    "bc1": "BC1: L^R_a iota_b z = iota_[a,b] z + iota_b L^Z_a z",
    "classify": "hierarchy classification",
    "d-squared": "d d = 0",
    "iota-squared": "iota_U iota_V + iota_V iota_U = 0",
    "magic-formula": "L_V = d iota_V + iota_V d",
    "lie-iota": "L_U iota_V = iota_[U,V] + iota_V L_U",
    "lie-bracket": "L_[U,V] = [L_U, L_V]",
    "lie-d": "L_V d = d L_V",
    "iota-function": "iota_(fV) w = f iota_V w",
    "iota-form-function": "iota_V (f w) = f iota_V w",
    "d-function": "d(f w) = f dw + df ^ w",
    "lie-function": "L_V(f w) = f L_V w + V(f) w",
    "lie-module": "L_(fV) w = f L_V w + df ^ iota_V w",
    "bc2": "BC2: iota_a(L^Z_b z - d iota_b z) = -iota_b(L^Z_a z - d iota_a z)",
}

LEVELS = (
    "Almost-Leibniz",
    "Almost-Bourbaki",
    "Almost-Metric-Bourbaki",
    "Pre-Metric-Bourbaki",
    "Metric-Bourbaki",
)


# -- test vectors ----------------------------------------------------------


def _exponents(nvars, degree):
    out = []
    for d in range(degree + 1):
        for combo in combinations_with_replacement(range(nvars), d):
            e = [0] * nvars
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    # degree first, then lexicographically descending powers
    return sorted(out, key=lambda e: (sum(e), tuple(-x for x in e)))


class SectionBasis:
    """Monomial sections ``x^alpha e_b`` with ``|alpha| <= degree`` plus seeded random ones."""

    def __init__(self, bundle, degree=DEFAULT_DEGREE, samples=DEFAULT_SAMPLES, seed=DEFAULT_SEED):
        if degree < 0:
            raise ValueError("degree must be non-negative")
        self.bundle = bundle
        self.degree = degree
        self.seed = seed
        self.exponents = _exponents(bundle.nvars, degree)
        self.monomials = [
            Section.monomial(bundle, b, e) for e in self.exponents for b in range(bundle.rank)
        ]
        rng = random.Random(f"{seed}/{bundle.name}/{bundle.rank}/{bundle.nvars}/{degree}")
        self.random = [self._random_section(rng) for _ in range(samples)]

    def _random_section(self, rng):
        n = self.bundle.nvars
        comps = []
        for _ in range(self.bundle.rank):
            p = Poly.zero(n)
            if rng.random() < 0.7:
                for _ in range(rng.randint(1, 3)):
                    e = rng.choice(self.exponents)
                    c = rng.choice([-3, -2, -1, 1, 2, 3])
                    p = p + Poly(n, {e: c})
            comps.append(p)
        return Section(self.bundle, comps)

    def __len__(self):
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)


# -- reports ---------------------------------------------------------------


@dataclass
class Witness:
    """Sections exhibiting a failure, with the nonzero residual they produce."""

    sections: tuple  # ((slot name, Section), ...)
    residual: Section
    replay_fn: object = field(default=None, repr=False, compare=False)

    def replay(self, sections=None):
        if self.replay_fn is None:
            raise RuntimeError("this witness has no attached residual")
        secs = dict(self.sections if sections is None else sections)
        return self.replay_fn(secs)

    def as_dict(self):
        return {
            "sections": {name: s.to_strings() for name, s in self.sections},
            "residual": self.residual.to_strings(),
        }

    def describe(self):
        parts = [f"{name} = {_render(s)}" for name, s in self.sections]
        return ", ".join(parts) + f"; residual = {_render(self.residual)}"


def _render(section):
    if section.bundle.rank == 1 and section.bundle.label(0) == "1":
        return str(section[0])
    return str(section)


VERDICTS = ("proved-structural", "verified", "failed")


@dataclass
class CheckReport:
    axiom: str
    verdict: str
    degree: object = None
    seed: object = None
    samples: object = None
    cases: int = 0
    witness: object = None
    details: tuple = ()
    subreports: tuple = ()

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict == "failed" and self.witness is None and not self.subreports:
            raise ValueError("failed reports need a witness")

    @property
    def passed(self):
        return self.verdict != "failed"

    @property
    def label(self):
        return AXIOM_LABELS.get(self.axiom, self.axiom)

    def failing_witness(self):
        if self.witness is not None:
            return self.witness
        for sub in self.subreports:
            if not sub.passed:
                return sub.failing_witness()
        return None

    def summary(self):
        if self.verdict == "proved-structural":
            text = "proved-structural"
        elif self.verdict == "verified":
            text = f"verified to degree {self.degree} ({self.cases} cases)"
        else:
            w = self.failing_witness()
            text = "failed" + (f": {w.describe()}" if w is not None else "")
        return text

    def __str__(self):
        return f"{self.label}: {self.summary()}"


@dataclass
class HierarchyReport:
    reports: tuple
    label: str
    metric: object = None
    notes: tuple = ()

    def verdict(self, axiom):
        for r in self.reports:
            if r.axiom == axiom:
                return r
        raise KeyError(axiom)

    @property
    def passed(self):
        return all(r.passed for r in self.reports)

    def __str__(self):
        lines = [str(r) for r in self.reports]
        lines.append(f"classification: {self.label}")
        lines.extend(self.notes)
        return "\n".join(lines)


# -- small helper bundles and tensors --------------------------------------


def _functions(n):
    return Bundle("C", 1, n, ("1",))


def _cotangent(n):
    return Bundle("T*", n, n, tuple(f"dx{i + 1}" for i in range(n)))


def _differential(n):
    """``f -> df`` as a first-order operator into covectors."""
    return FirstOrderOp(_functions(n), _cotangent(n), D1={(i, 0, i): 1 for i in range(n)})


def _scalar_mul(bundle):
    return Tensorial((_functions(bundle.nvars), bundle), bundle, {(b, 0, b): 1 for b in range(bundle.rank)})


def _pairing(n):
    """``(V, omega) -> omega(V)``."""
    return Tensorial(
        (Bundle("T", n, n), _cotangent(n)), _functions(n), {(0, i, i): 1 for i in range(n)}
    )


def _anchor_dual(anchor):
    """``rho^*: T* -> A*``."""
    n = anchor.nvars
    A = anchor.domain
    return BundleMap(_cotangent(n), Bundle("A*", A.rank, n), {(al, i): p for (i, al), p in anchor.entries.items()})


def _directional(ops, anchor, x, f):
    """``rho(x)(f)`` as a function-valued value."""
    n = anchor.nvars
    return ops.tensor(_pairing(n), ops.map(anchor, x), ops.first_order(_differential(n), f))


def _times(ops, f, x, bundle):
    return ops.tensor(_scalar_mul(bundle), f, x)


def _monomial_function(n, exps):
    return Section(_functions(n), [Poly(n, {tuple(exps): 1})])


def _unit(n, i):
    e = [0] * n
    e[i] = 1
    return tuple(e)


# -- generic basis check ---------------------------------------------------


def _basis_check(axiom, nvars, slots, residual, degree, seed, samples, details=()):
    """Check ``residual`` on all monomial tuples up to ``degree`` and random samples.

    ``slots`` is a list of ``(name, bundle)``; ``residual(ops, args)`` must be
    written against the backend interface so both backends can run it.
    """
    bundles = dict(slots)
    jet = JetBackend(nvars, max_order=degree)
    expr = residual(jet, {name: jet.variable(name, b) for name, b in slots}).truncate(degree)
    direct = DirectBackend(nvars)

    def replay(sections):
        return residual(direct, sections)

    bases = {name: SectionBasis(b, degree, samples, seed) for name, b in slots}
    cases = prod(len(bases[name]) for name, _ in slots) + samples
    order = [name for name, _ in slots]
    if expr.terms:
        (a, factors, mono), _ = expr.sorted_terms()[0]
        secs = {}
        for name, (comp, alpha) in zip(expr.slots, factors):
            secs[name] = Section.monomial(bundles[name], comp, alpha)
        value = replay(secs)
        if value.is_zero():
            raise AssertionError(f"{axiom}: jet residual and direct evaluation disagree at {secs}")
        witness = Witness(tuple((nm, secs[nm]) for nm in order), value, replay)
        return CheckReport(axiom, "failed", degree, seed, samples, cases, witness, tuple(details))
    for t in range(samples):
        secs = {name: bases[name].random[(t + j) % samples] for j, name in enumerate(order)}
        value = replay(secs)
        if not value.is_zero():
            witness = Witness(tuple((nm, secs[nm]) for nm in order), value, replay)
            details = tuple(details) + ("sampled section disagrees with the monomial sweep",)
            return CheckReport(axiom, "failed", degree, seed, samples, cases, witness, details)
    return CheckReport(axiom, "verified", degree, seed, samples, cases, None, tuple(details))


def _structural(axiom, mismatch, make_witness, details=()):
    """Structural verdict from a dict of mismatching tensor entries."""
    if not mismatch:
        return CheckReport(axiom, "proved-structural", details=tuple(details))
    key = min(mismatch)
    witness = make_witness(key)
    if witness.residual.is_zero():
        raise AssertionError(f"{axiom}: structural mismatch at {key} does not replay")
    entries = tuple(f"tensor entry {tuple(k + 1 for k in key)} off by {mismatch[key]}" for _ in (0,))
    return CheckReport(axiom, "failed", witness=witness, details=tuple(details) + entries)


def _diff(a, b):
    out = dict(a)
    for k, p in b.items():
        _add_into(out, k, -p)
    return out


# -- the checks ------------------------------------------------------------


def check_right_leibniz(bracket, anchor, method="structural", degree=DEFAULT_DEGREE, seed=DEFAULT_SEED, samples=DEFAULT_SAMPLES):
    """``[u, f v] = f [u, v] + rho(u)(f) v``.

    Structurally: ``P^{a,i}_{bc} = rho^i_b delta^a_c``.
    """
    E = bracket.left
    n = E.nvars
    _require(bracket.right.rank == E.rank and bracket.out.rank == E.rank, "bracket must act on one bundle")
    _require(anchor.domain.rank == E.rank and anchor.codomain.rank == n, "anchor must map E to T")
    F = _functions(n)

    def residual(ops, x):
        u, v, f = x["u"], x["v"], x["f"]
        lhs = ops.bidiff(bracket, u, _times(ops, f, v, E))
        rhs = _times(ops, f, ops.bidiff(bracket, u, v), E)
        return ops.sub(ops.sub(lhs, rhs), _times(ops, _directional(ops, anchor, u, f), v, E))

    if method == "basis":
        return _basis_check("right-leibniz", n, [("f", F), ("u", E), ("v", E)], residual, degree, seed, samples)
    expected = {}
    for (i, b), p in anchor.entries.items():
        for c in range(E.rank):
            expected[(c, b, c, i)] = p
    mismatch = {(i, b, c, a): p for (a, b, c, i), p in _diff(bracket.P, expected).items()}

    def witness(key):
        i, b, c, _ = key
        secs = {
            "f": _monomial_function(n, _unit(n, i)),
            "u": E.basis(b),
            "v": E.basis(c),
        }
        replay = lambda s: residual(DirectBackend(n), s)
        return Witness(tuple((k, secs[k]) for k in ("f", "u", "v")), replay(secs), replay)

    return _structural("right-leibniz", mismatch, witness)


def locality_from(dirac, metric):
    """Locality operator ``L(omega, u, v) = (symbol of D)_omega g(u, v)``."""
    return LocalityOperator.from_symbol(dirac, metric)


def check_locality(bracket, anchor, locality, degree=DEFAULT_DEGREE, seed=DEFAULT_SEED, samples=DEFAULT_SAMPLES):
    """``[f u, v] = f [u, v] - rho(v)(f) u + L(df, u, v)``.

    Structurally: ``Q^{a,i}_{bc} = -rho^i_c delta^a_b + L^{a,i}_{bc}``.  The
    equivalent symmetric-part form ``S(fu, v) = f S(u, v) + L(df, u, v)`` is
    checked independently on the section basis and must agree whenever the
    right-Leibniz rule holds.
    """
    E = bracket.left
    n = E.nvars
    F = _functions(n)
    if locality is None:
        locality = LocalityOperator(E)
    Lt = Tensorial((_cotangent(n), E, E), E, locality.entries)
    dfun = _differential(n)

    def residual(ops, x):
        u, v, f = x["u"], x["v"], x["f"]
        lhs = ops.bidiff(bracket, _times(ops, f, u, E), v)
        rhs = _times(ops, f, ops.bidiff(bracket, u, v), E)
        rhs = ops.sub(rhs, _times(ops, _directional(ops, anchor, v, f), u, E))
        rhs = ops.add(rhs, ops.tensor(Lt, ops.first_order(dfun, f), u, v))
        return ops.sub(lhs, rhs)

    def sym_residual(ops, x):
        u, v, f = x["u"], x["v"], x["f"]
        fu = _times(ops, f, u, E)
        s_fu = ops.add(ops.bidiff(bracket, fu, v), ops.bidiff(bracket, v, fu))
        s_uv = ops.add(ops.bidiff(bracket, u, v), ops.bidiff(bracket, v, u))
        rhs = ops.add(_times(ops, f, s_uv, E), ops.tensor(Lt, ops.first_order(dfun, f), u, v))
        return ops.sub(s_fu, rhs)

    expected = {}
    for (i, c), p in anchor.entries.items():
        for b in range(E.rank):
            expected[(b, b, c, i)] = -p
    for (a, i, b, c), p in locality.entries.items():
        _add_into(expected, (a, b, c, i), p)
    mismatch = {(i, b, c, a): p for (a, b, c, i), p in _diff(bracket.Q, expected).items()}

    def witness(key):
        i, b, c, _ = key
        secs = {"f": _monomial_function(n, _unit(n, i)), "u": E.basis(b), "v": E.basis(c)}
        replay = lambda s: residual(DirectBackend(n), s)
        return Witness(tuple((k, secs[k]) for k in ("f", "u", "v")), replay(secs), replay)

    sym = _basis_check("locality-symmetric", n, [("f", F), ("u", E), ("v", E)], sym_residual, degree, seed, samples)
    report = _structural("locality", mismatch, witness)
    agree = report.passed == sym.passed
    note = "symmetric-part form agrees" if agree else "symmetric-part form disagrees"
    report.details = report.details + (note,)
    report.subreports = (sym,)
    return report


def check_symmetric_part(bracket, metric, dirac, degree=DEFAULT_DEGREE, seed=DEFAULT_SEED, samples=DEFAULT_SAMPLES):
    """``[u, v] + [v, u] = D g(u, v)`` on the section basis."""
    E = bracket.left
    n = E.nvars
    _require(dirac.domain.rank == metric.R.rank, "D must start at the metric's value bundle")
    _require(dirac.codomain.rank == E.rank, "D must land in E")
    g = Tensorial.from_metric(metric)

    def residual(ops, x):
        u, v = x["u"], x["v"]
        s = ops.add(ops.bidiff(bracket, u, v), ops.bidiff(bracket, v, u))
        return ops.sub(s, ops.first_order(dirac, ops.tensor(g, u, v)))

    return _basis_check("symmetric-part", n, [("u", E), ("v", E)], residual, degree, seed, samples)


def check_antisymmetry(bracket, degree=2, seed=DEFAULT_SEED, samples=DEFAULT_SAMPLES):
    E = bracket.left
    n = E.nvars

    def residual(ops, x):
        u, v = x["u"], x["v"]
        return ops.add(ops.bidiff(bracket, u, v), ops.bidiff(bracket, v, u))

    return _basis_check("antisymmetry", n, [("u", E), ("v", E)], residual, degree, seed, samples)


def _tangent_base(n):
    from .chart import BaseAlgebroid

    return BaseAlgebroid.tangent(n)


def check_metric_invariance(bracket, metric, lie_r, rho, base=None, degree=DEFAULT_DEGREE, seed=DEFAULT_SEED, samples=DEFAULT_SAMPLES):
    """``L^R_{rho(u)} g(v, w) = g([u, v], w) + g(v, [u, w])``.

    ``rho`` maps ``E`` to the base algebroid (the anchor itself when the base
    is the tangent bundle).  The side condition that ``L^R`` differentiates
    along the base anchor is a structural check on its ``P`` tensor.
    """
    E = bracket.left
    n = E.nvars
    base = base or _tangent_base(n)
    A = base.bundle
    R = metric.R
    _require(rho.codomain.rank == A.rank, "rho must land in the base algebroid")
    _require((lie_r.left.rank, lie_r.right.rank, lie_r.out.rank) == (A.rank, R.rank, R.rank), "L^R must map A x R to R")
    F = _functions(n)
    g = Tensorial.from_metric(metric)

    def side_residual(ops, x):
        a, r, f = x["a"], x["r"], x["f"]
        lhs = ops.bidiff(lie_r, a, _times(ops, f, r, R))
        rhs = _times(ops, f, ops.bidiff(lie_r, a, r), R)
        return ops.sub(ops.sub(lhs, rhs), _times(ops, _directional(ops, base.anchor, a, f), r, R))

    expected = {}
    for (i, al), p in base.anchor.entries.items():
        for s in range(R.rank):
            expected[(s, al, s, i)] = p
    mismatch = {(i, al, s, r): p for (r, al, s, i), p in _diff(lie_r.P, expected).items()}

    def witness(key):
        i, al, s, _ = key
        secs = {"f": _monomial_function(n, _unit(n, i)), "a": A.basis(al), "r": R.basis(s)}
        replay = lambda sc: side_residual(DirectBackend(n), sc)
        return Witness(tuple((k, secs[k]) for k in ("f", "a", "r")), replay(secs), replay)

    side = _structural("lie-r-derivation", mismatch, witness)

    def residual(ops, x):
        u, v, w = x["u"], x["v"], x["w"]
        lhs = ops.bidiff(lie_r, ops.map(rho, u), ops.tensor(g, v, w))
        rhs = ops.add(ops.tensor(g, ops.bidiff(bracket, u, v), w), ops.tensor(g, v, ops.bidiff(bracket, u, w)))
        return ops.sub(lhs, rhs)

    inv = _basis_check("metric-invariance", n, [("u", E), ("v", E), ("w", E)], residual, degree, seed, samples)
    if side.passed and inv.passed:
        return CheckReport("metric-invariance", "verified", degree, seed, samples, inv.cases, subreports=(side, inv))
    if not inv.passed:
        return CheckReport("metric-invariance", "failed", degree, seed, samples, inv.cases, inv.witness, inv.details, (side, inv))
    return CheckReport("metric-invariance", "failed", degree, seed, samples, inv.cases, side.witness, side.details, (side, inv))


def check_anchor_morphism(bracket, rho, base_bracket, degree=DEFAULT_DEGREE, seed=DEFAULT_SEED, samples=DEFAULT_SAMPLES):
    """``rho([u, v]) = [rho u, rho v]_base``; used for anchors and for ``Q``."""
    E = bracket.left
    n = E.nvars
    _require(rho.domain.rank == E.rank, "rho must start at E")
    _require(base_bracket.left.rank == rho.codomain.rank, "base bracket must act on rho's target")

    def residual(ops, x):
        u, v = x["u"], x["v"]
        lhs = ops.map(rho, ops.bidiff(bracket, u, v))
        return ops.sub(lhs, ops.bidiff(base_bracket, ops.map(rho, u), ops.map(rho, v)))

    return _basis_check("anchor-morphism", n, [("u", E), ("v", E)], residual, degree, seed, samples)


def check_jacobi(bracket, degree=DEFAULT_DEGREE, seed=DEFAULT_SEED, samples=DEFAULT_SAMPLES):
    """``[u, [v, w]] = [[u, v], w] + [v, [u, w]]`` on the section basis."""
    E = bracket.left
    n = E.nvars
    B = bracket

    def residual(ops, x):
        u, v, w = x["u"], x["v"], x["w"]
        lhs = ops.bidiff(B, u, ops.bidiff(B, v, w))
        r1 = ops.bidiff(B, ops.bidiff(B, u, v), w)
        r2 = ops.bidiff(B, v, ops.bidiff(B, u, w))
        return ops.sub(ops.sub(lhs, r1), r2)

    return _basis_check("jacobi", n, [("u", E), ("v", E), ("w", E)], residual, degree, seed, samples)


# -- chart Cartan calculus ---------------------------------------------------

CARTAN_IDENTITIES = (
    "d-squared",
    "iota-squared",
    "magic-formula",
    "lie-iota",
    "lie-bracket",
    "lie-d",
    "iota-function",
    "iota-form-function",
    "d-function",
    "lie-function",
    "lie-module",
)

_CARTAN_RANGES = {
    "d-squared": (0, -1),
    "iota-squared": (2, 1),
    "magic-formula": (0, 1),
    "lie-iota": (1, 1),
    "lie-bracket": (0, 1),
    "lie-d": (0, 0),
    "iota-function": (1, 1),
    "iota-form-function": (1, 1),
    "d-function": (0, 0),
    "lie-function": (0, 1),
    "lie-module": (0, 1),
}


def _total(ops, first, *rest):
    out = first
    for sign, term in rest:
        if term is not None:
            out = ops.add(out, term) if sign > 0 else ops.sub(out, term)
    return out


def _cartan_residual(c, name, p):
    n = c["T"].nvars
    T, L, d, iota, lie, w1, br = c["T"], c["L"], c["d"], c["iota"], c["lie"], c["wedge1"], c["bracket"]
    F, Lp = L[0], L[p]

    def D(ops, q, x):
        return ops.first_order(d[q], x) if 0 <= q < n else None

    def I(ops, q, v, x):
        return ops.bidiff(iota[q], v, x) if q > 0 else None

    def df(ops, f):
        return ops.first_order(d[0], f)

    if name == "d-squared":
        return [("w", Lp)], lambda ops, x: D(ops, p + 1, D(ops, p, x["w"]))
    if name == "iota-squared":
        return [("u", T), ("v", T), ("w", Lp)], lambda ops, x: ops.add(
            I(ops, p - 1, x["u"], I(ops, p, x["v"], x["w"])),
            I(ops, p - 1, x["v"], I(ops, p, x["u"], x["w"])),
        )
    if name == "magic-formula":
        def r(ops, x):
            v, w = x["v"], x["w"]
            inner, outer = I(ops, p, v, w), D(ops, p, w)
            return _total(
                ops,
                ops.bidiff(lie[p], v, w),
                (-1, D(ops, p - 1, inner) if inner is not None else None),
                (-1, I(ops, p + 1, v, outer) if outer is not None else None),
            )
        return [("v", T), ("w", Lp)], r
    if name == "lie-iota":
        return [("u", T), ("v", T), ("w", Lp)], lambda ops, x: _total(
            ops,
            ops.bidiff(lie[p - 1], x["u"], I(ops, p, x["v"], x["w"])),
            (-1, I(ops, p, x["v"], ops.bidiff(lie[p], x["u"], x["w"]))),
            (-1, I(ops, p, ops.bidiff(br, x["u"], x["v"]), x["w"])),
        )
    if name == "lie-bracket":
        return [("u", T), ("v", T), ("w", Lp)], lambda ops, x: _total(
            ops,
            ops.bidiff(lie[p], ops.bidiff(br, x["u"], x["v"]), x["w"]),
            (-1, ops.bidiff(lie[p], x["u"], ops.bidiff(lie[p], x["v"], x["w"]))),
            (1, ops.bidiff(lie[p], x["v"], ops.bidiff(lie[p], x["u"], x["w"]))),
        )
    if name == "lie-d":
        return [("v", T), ("w", Lp)], lambda ops, x: ops.sub(
            ops.bidiff(lie[p + 1], x["v"], D(ops, p, x["w"])),
            D(ops, p, ops.bidiff(lie[p], x["v"], x["w"])),
        )
    if name == "iota-function":
        return [("f", F), ("v", T), ("w", Lp)], lambda ops, x: ops.sub(
            I(ops, p, _times(ops, x["f"], x["v"], T), x["w"]),
            _times(ops, x["f"], I(ops, p, x["v"], x["w"]), L[p - 1]),
        )
    if name == "iota-form-function":
        return [("f", F), ("v", T), ("w", Lp)], lambda ops, x: ops.sub(
            I(ops, p, x["v"], _times(ops, x["f"], x["w"], Lp)),
            _times(ops, x["f"], I(ops, p, x["v"], x["w"]), L[p - 1]),
        )
    if name == "d-function":
        return [("f", F), ("w", Lp)], lambda ops, x: _total(
            ops,
            D(ops, p, _times(ops, x["f"], x["w"], Lp)),
            (-1, _times(ops, x["f"], D(ops, p, x["w"]), L[p + 1])),
            (-1, ops.bidiff(w1[p], df(ops, x["f"]), x["w"])),
        )
    if name == "lie-function":
        return [("f", F), ("v", T), ("w", Lp)], lambda ops, x: _total(
            ops,
            ops.bidiff(lie[p], x["v"], _times(ops, x["f"], x["w"], Lp)),
            (-1, _times(ops, x["f"], ops.bidiff(lie[p], x["v"], x["w"]), Lp)),
            (-1, _times(ops, I(ops, 1, x["v"], df(ops, x["f"])), x["w"], Lp)),
        )
    if name == "lie-module":
        def r(ops, x):
            f, v, w = x["f"], x["v"], x["w"]
            inner = I(ops, p, v, w)
            return _total(
                ops,
                ops.bidiff(lie[p], _times(ops, f, v, T), w),
                (-1, _times(ops, f, ops.bidiff(lie[p], v, w), Lp)),
                (-1, ops.bidiff(w1[p - 1], df(ops, f), inner) if inner is not None else None),
            )
        return [("f", F), ("v", T), ("w", Lp)], r
    raise KeyError(f"unknown Cartan identity {name!r}")


def check_cartan_suite(nvars, degree=DEFAULT_DEGREE, seed=DEFAULT_SEED, samples=DEFAULT_SAMPLES, identities=None):
    """Verify the chart Cartan identities in every form degree where they make sense.

    One report per identity, with a subreport per form degree.
    ``iota-squared`` is checked in polarized form
    ``iota_U iota_V + iota_V iota_U = 0``, equivalent over the rationals.
    """
    from .chart import cartan_operators

    c = cartan_operators(nvars)
    reports = []
    for name in identities or CARTAN_IDENTITIES:
        lo, hi = _CARTAN_RANGES[name]
        subs = []
        for p in range(lo, nvars + hi):
            slots, residual = _cartan_residual(c, name, p)
            subs.append(_basis_check(f"{name}[p={p}]", nvars, slots, residual, degree, seed, samples))
        failed = next((r for r in subs if not r.passed), None)
        reports.append(
            CheckReport(
                name,
                "failed" if failed else "verified",
                degree,
                seed,
                samples,
                sum(r.cases for r in subs),
                failed.witness if failed else None,
                (f"first failure: {failed.axiom}",) if failed else (),
                tuple(subs),
            )
        )
    return reports


# -- pre-calculus ------------------------------------------------------------


def check_precalculus(pc, degree=DEFAULT_DEGREE, seed=DEFAULT_SEED, samples=DEFAULT_SAMPLES):
    """The six defining conditions of a Bourbaki (A-)pre-calculus, in order."""
    base = pc.base
    A, R, Z = base.bundle, pc.R, pc.Z
    n = A.nvars
    rho = base.anchor
    F = _functions(n)
    iota, d, lie_r, lie_z = pc.iota, pc.d, pc.lie_r, pc.lie_z
    _require((iota.left.rank, iota.right.rank, iota.out.rank) == (A.rank, Z.rank, R.rank), "iota must map A x Z to R")
    _require((d.domain.rank, d.codomain.rank) == (R.rank, Z.rank), "d must map R to Z")
    _require((lie_r.left.rank, lie_r.right.rank, lie_r.out.rank) == (A.rank, R.rank, R.rank), "L^R must map A x R to R")
    _require((lie_z.left.rank, lie_z.right.rank, lie_z.out.rank) == (A.rank, Z.rank, Z.rank), "L^Z must map A x Z to Z")
    Astar = Bundle("A*", A.rank, n)
    l_t = Tensorial((Astar, R), Z, {(z, al, r): p for (z, r, al), p in pc.l.items()})
    rho_dual = _anchor_dual(rho)
    dfun = _differential(n)
    direct = DirectBackend(n)

    def D_A(ops, f):
        return ops.map(rho_dual, ops.first_order(dfun, f))

    def mk_witness(residual, secs, order):
        replay = lambda s: residual(direct, s)
        return Witness(tuple((k, secs[k]) for k in order), replay(secs), replay)

    reports = []

    # iota is tensorial
    def iota_right(ops, x):
        a, z, f = x["a"], x["z"], x["f"]
        return ops.sub(ops.bidiff(iota, a, _times(ops, f, z, Z)), _times(ops, f, ops.bidiff(iota, a, z), R))

    def iota_left(ops, x):
        a, z, f = x["a"], x["z"], x["f"]
        return ops.sub(ops.bidiff(iota, _times(ops, f, a, A), z), _times(ops, f, ops.bidiff(iota, a, z), R))

    mismatch = {(i, al, z, r, 0): p for (r, al, z, i), p in iota.P.items()}
    mismatch.update({(i, al, z, r, 1): p for (r, al, z, i), p in iota.Q.items()})

    def iota_witness(key):
        i, al, z, _, which = key
        secs = {"f": _monomial_function(n, _unit(n, i)), "a": A.basis(al), "z": Z.basis(z)}
        return mk_witness(iota_right if which == 0 else iota_left, secs, ("f", "a", "z"))

    reports.append(_structural("iota-tensorial", mismatch, iota_witness))

    # d has symbol l
    def d_residual(ops, x):
        r, f = x["r"], x["f"]
        lhs = ops.sub(ops.first_order(d, _times(ops, f, r, R)), _times(ops, f, ops.first_order(d, r), Z))
        return ops.sub(lhs, ops.tensor(l_t, D_A(ops, f), r))

    expected = {}
    for (z, r, al), p in pc.l.items():
        for (i, al2), q in rho.entries.items():
            if al2 == al:
                _add_into(expected, (z, r, i), p * q)
    mismatch = {(i, r, z): p for (z, r, i), p in _diff(d.D1, expected).items()}

    def d_witness(key):
        i, r, _ = key
        secs = {"f": _monomial_function(n, _unit(n, i)), "r": R.basis(r)}
        return mk_witness(d_residual, secs, ("f", "r"))

    reports.append(_structural("d-symbol", mismatch, d_witness))

    # L^Z_a(f z) = f L^Z_a z + rho(a)(f) z
    def lz1(ops, x):
        a, z, f = x["a"], x["z"], x["f"]
        lhs = ops.sub(ops.bidiff(lie_z, a, _times(ops, f, z, Z)), _times(ops, f, ops.bidiff(lie_z, a, z), Z))
        return ops.sub(lhs, _times(ops, _directional(ops, rho, a, f), z, Z))

    expected = {}
    for (i, al), p in rho.entries.items():
        for z in range(Z.rank):
            expected[(z, al, z, i)] = p
    mismatch = {(i, al, z, zz): p for (zz, al, z, i), p in _diff(lie_z.P, expected).items()}

    def lz1_witness(key):
        i, al, z, _ = key
        secs = {"f": _monomial_function(n, _unit(n, i)), "a": A.basis(al), "z": Z.basis(z)}
        return mk_witness(lz1, secs, ("f", "a", "z"))

    reports.append(_structural("lie-z-derivation", mismatch, lz1_witness))

    # L^Z_{fa} z = f L^Z_a z + l_{D_A f} iota_a z
    def lz2(ops, x):
        a, z, f = x["a"], x["z"], x["f"]
        lhs = ops.sub(ops.bidiff(lie_z, _times(ops, f, a, A), z), _times(ops, f, ops.bidiff(lie_z, a, z), Z))
        return ops.sub(lhs, ops.tensor(l_t, D_A(ops, f), ops.bidiff(iota, a, z)))

    expected = {}
    for (zz, r, be), lp in pc.l.items():
        for (i, be2), rp in rho.entries.items():
            if be2 != be:
                continue
            for (r2, al, z), ip in iota.C.items():
                if r2 == r:
                    _add_into(expected, (zz, al, z, i), lp * rp * ip)
    mismatch = {(i, al, z, zz): p for (zz, al, z, i), p in _diff(lie_z.Q, expected).items()}

    def lz2_witness(key):
        i, al, z, _ = key
        secs = {"f": _monomial_function(n, _unit(n, i)), "a": A.basis(al), "z": Z.basis(z)}
        return mk_witness(lz2, secs, ("f", "a", "z"))

    reports.append(_structural("lie-z-symbol", mismatch, lz2_witness))

    def bc1(ops, x):
        a, b, z = x["a"], x["b"], x["z"]
        lhs = ops.bidiff(lie_r, a, ops.bidiff(iota, b, z))
        rhs = ops.add(ops.bidiff(iota, ops.bidiff(base.bracket, a, b), z), ops.bidiff(iota, b, ops.bidiff(lie_z, a, z)))
        return ops.sub(lhs, rhs)

    reports.append(_basis_check("bc1", n, [("a", A), ("b", A), ("z", Z)], bc1, degree, seed, samples))

    def bc2(ops, x):
        a, b, z = x["a"], x["b"], x["z"]
        left = ops.sub(ops.bidiff(lie_z, b, z), ops.first_order(d, ops.bidiff(iota, b, z)))
        right = ops.sub(ops.bidiff(lie_z, a, z), ops.first_order(d, ops.bidiff(iota, a, z)))
        return ops.add(ops.bidiff(iota, a, left), ops.bidiff(iota, b, right))

    reports.append(_basis_check("bc2", n, [("a", A), ("b", A), ("z", Z)], bc2, degree, seed, samples))

    failed = next((r for r in reports if not r.passed), None)
    verdict = "failed" if failed else "verified"
    return CheckReport(
        "precalculus",
        verdict,
        degree,
        seed,
        samples,
        sum(r.cases for r in reports),
        failed.witness if failed else None,
        (f"first failure: {failed.axiom}",) if failed else (),
        tuple(reports),
    )


# -- classification ----------------------------------------------------------


def default_witness_points(n):
    primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37]
    pts = [tuple([1] * n)]
    pts.append(tuple(primes[i % len(primes)] + i // len(primes) for i in range(n)))
    return pts


def is_structurally_antisymmetric(bracket):
    if bracket.left.rank != bracket.right.rank:
        return False
    swapped = bracket.swap()
    return not (bracket + swapped).C and not (bracket + swapped).P and not (bracket + swapped).Q


def classify(bracket, rho, metric, dirac, lie_r, base=None, degree=DEFAULT_DEGREE, seed=DEFAULT_SEED, samples=DEFAULT_SAMPLES, witness_points=None):
    """Run all six hierarchy checks and report the highest level reached.

    ``rho`` maps ``E`` to the base algebroid (``T`` by default); the anchor
    used for the Leibniz rules is ``rho_A o rho``.
    """
    E = bracket.left
    n = E.nvars
    base = base or _tangent_base(n)
    anchor = base.anchor.compose(rho)
    opts = dict(degree=degree, seed=seed, samples=samples)
    loc = LocalityOperator.from_symbol(dirac, metric)
    reports = (
        check_right_leibniz(bracket, anchor),
        check_locality(bracket, anchor, loc, **opts),
        check_symmetric_part(bracket, metric, dirac, **opts),
        check_metric_invariance(bracket, metric, lie_r, rho, base, **opts),
        check_anchor_morphism(bracket, rho, base.bracket, **opts),
        check_jacobi(bracket, **opts),
    )
    ok = {r.axiom: r.passed for r in reports}
    metric_report = check_metric(metric, witness_points or default_witness_points(n)) if E.rank else None
    label = "Unclassified"
    if ok["right-leibniz"]:
        label = LEVELS[0]
        if ok["locality"] and ok["symmetric-part"]:
            label = LEVELS[1]
            if ok["metric-invariance"]:
                label = LEVELS[2]
                if ok["anchor-morphism"]:
                    label = LEVELS[3]
                    if ok["jacobi"]:
                        label = LEVELS[4]
            elif ok["anchor-morphism"]:
                label = "Bourbaki" if ok["jacobi"] else "Pre-Bourbaki"
    notes = []
    if metric_report is not None:
        notes.append(f"metric: {metric_report.describe()}")
    if label == LEVELS[4]:
        if is_structurally_antisymmetric(bracket):
            label += " (Lie instance)"
        elif metric.R.rank == 1 and metric_report is not None and metric_report.ok:
            label += " (Courant instance)"
    if ok["metric-invariance"] and metric_report is not None and metric_report.ok and not ok["right-leibniz"]:
        notes.append("inconsistent: invariance with a non-degenerate metric should force the right-Leibniz rule")
    return HierarchyReport(reports, label, metric_report, tuple(notes))


def _require(cond, message):
    if not cond:
        raise ShapeMismatch(message)
