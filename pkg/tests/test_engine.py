import random
from itertools import product

import pytest

from bourbaki import (
    BaseAlgebroid,
    BidiffOp,
    Bundle,
    BundleMap,
    FirstOrderOp,
    LocalityOperator,
    MetricTensor,
    Poly,
    Section,
    SectionBasis,
    canned_dorfman,
    cartan_operators,
    check_anchor_morphism,
    check_jacobi,
    check_locality,
    check_metric_invariance,
    check_precalculus,
    check_right_leibniz,
    check_symmetric_part,
    classify,
    make_cartan_precalculus,
    make_connection_precalculus,
    random_two_form,
    twist,
    twist_from_form,
)
from bourbaki.chart import Form
from bourbaki.constructions import PreCalculus
from bourbaki.engine import _basis_check
from bourbaki.multilinear import DirectBackend
import oracles as o


@pytest.fixture(scope="module")
def dorfman3():
    return canned_dorfman(3, 1)


def assert_replays(report):
    w = report.failing_witness()
    assert w is not None
    again = w.replay()
    assert not again.is_zero() and again == w.residual


def lie_stack(n):
    ops = cartan_operators(n)
    T = ops["T"]
    R = Bundle("R", 0, n)
    return ops["bracket"], BundleMap.identity(T), MetricTensor(T, R), FirstOrderOp.zero(R, T), BidiffOp(T, R, R)


# -- section basis -------------------------------------------------------------


def test_section_basis_exhaustive_and_unique():
    E = Bundle("E", 2, 3)
    B = SectionBasis(E, degree=2, samples=4, seed=9)
    assert len(B) == 2 * 10
    assert len(set(B.monomials)) == len(B)
    assert len(B.random) == 4
    again = SectionBasis(E, degree=2, samples=4, seed=9)
    assert B.random == again.random


# -- right-Leibniz -------------------------------------------------------------


def test_right_leibniz_lie_bracket():
    br, rho, *_ = lie_stack(3)
    assert check_right_leibniz(br, rho).verdict == "proved-structural"


def test_right_leibniz_dorfman(dorfman3):
    assert check_right_leibniz(dorfman3.bracket, dorfman3.anchor).verdict == "proved-structural"


def test_right_leibniz_wrong_anchor(dorfman3):
    E = dorfman3.E
    zero = BundleMap.zero(E, dorfman3.base.bundle)
    rep = check_right_leibniz(dorfman3.bracket, zero)
    assert rep.verdict == "failed"
    secs = dict(rep.witness.sections)
    assert str(secs["f"][0]) == "x1" and secs["u"] == E.basis(0)
    assert_replays(rep)


def _random_bracket(rng, T, good):
    n = T.nvars
    br = cartan_operators(n)["bracket"]
    C = {(a, b, c): o.sympy_to_poly(o.random_expr(rng, n, 1), n) for a in range(n) for b in range(n) for c in range(n) if rng.random() < 0.3}
    P = {}
    if not good:
        P = {(rng.randrange(n), rng.randrange(n), rng.randrange(n), rng.randrange(n)): Poly.var(n, 0)}
    return br + BidiffOp(T, T, T, C=C, P=P)


@pytest.mark.parametrize("seed", range(5))
def test_structural_and_basis_agree(seed):
    rng = random.Random(seed)
    T = cartan_operators(2)["T"]
    B = _random_bracket(rng, T, good=seed % 2 == 0)
    rho = BundleMap.identity(T)
    s = check_right_leibniz(B, rho)
    b = check_right_leibniz(B, rho, method="basis", degree=2)
    assert s.passed == b.passed
    assert b.verdict in ("verified", "failed")
    if not s.passed:
        assert_replays(s)
        assert_replays(b)


# -- locality -------------------------------------------------------------------


def test_locality_dorfman(dorfman3):
    rep = check_locality(dorfman3.bracket, dorfman3.anchor, dorfman3.locality())
    assert rep.verdict == "proved-structural"
    assert all(r.passed for r in rep.subreports)


def test_locality_higher_dorfman():
    st = canned_dorfman(3, 2)
    assert check_locality(st.bracket, st.anchor, st.locality(), degree=2).verdict == "proved-structural"


def test_locality_zero_operator_fails(dorfman3):
    rep = check_locality(dorfman3.bracket, dorfman3.anchor, LocalityOperator(dorfman3.E), degree=2)
    assert rep.verdict == "failed"
    secs = dict(rep.witness.sections)
    assert str(secs["f"][0]) == "x1"
    assert_replays(rep)
    # the independent symmetric-form test reaches the same conclusion
    assert not rep.subreports[0].passed


# -- symmetric part -------------------------------------------------------------


def test_symmetric_part_dorfman(dorfman3):
    assert check_symmetric_part(dorfman3.bracket, dorfman3.metric, dorfman3.dirac, degree=2).verdict == "verified"


def test_symmetric_part_higher_dorfman():
    st = canned_dorfman(3, 2)
    assert check_symmetric_part(st.bracket, st.metric, st.dirac, degree=2).passed


def test_symmetric_part_antisymmetric_bracket_fails():
    n = 2
    ops = cartan_operators(n)
    T = ops["T"]
    R = ops["L"][0]
    g = MetricTensor(T, R, {(0, 0, 0): Poly.const(n, 1)})
    D = FirstOrderOp(R, T, D1={(0, 0, 0): Poly.const(n, 1)})
    rep = check_symmetric_part(ops["bracket"], g, D, degree=1)
    assert rep.verdict == "failed"
    assert_replays(rep)


# -- invariance --------------------------------------------------------------


def test_invariance_dorfman(dorfman3):
    st = dorfman3
    rep = check_metric_invariance(st.bracket, st.metric, st.lie_r, st.rho, st.base, degree=2)
    assert rep.passed


def test_invariance_higher_dorfman():
    st = canned_dorfman(3, 2)
    assert check_metric_invariance(st.bracket, st.metric, st.lie_r, st.rho, st.base, degree=2).passed


def test_invariance_zero_lie_r_fails(dorfman3):
    st = dorfman3
    rep = check_metric_invariance(st.bracket, st.metric, BidiffOp(st.base.bundle, st.R, st.R), st.rho, st.base, degree=2)
    assert not rep.passed
    assert_replays(rep)


# -- anchor morphism ------------------------------------------------------------


def test_anchor_morphism_dorfman_and_twisted(dorfman3):
    st = dorfman3
    assert check_anchor_morphism(st.bracket, st.rho, st.base.bracket, degree=2).passed
    H = random_two_form(st.split.A, st.split.Z, seed=4, density=1.0)
    tw = twist(st.bracket, st.split, H)
    assert check_anchor_morphism(tw, st.rho, st.base.bracket, degree=2).passed


def test_anchor_morphism_noise_is_the_residual(dorfman3):
    st = dorfman3
    E = st.E
    noise = BidiffOp(E, E, E, C={(0, 1, 2): Poly.var(3, 2)})
    rep = check_anchor_morphism(st.bracket + noise, st.rho, st.base.bracket, degree=2)
    assert not rep.passed
    w = rep.witness
    secs = dict(w.sections)
    u, v = secs["u"], secs["v"]
    expected = st.rho.apply(noise.apply(u, v))
    assert w.residual == expected
    assert_replays(rep)


# -- Jacobi ----------------------------------------------------------------------


def test_jacobi_lie_bracket():
    br, *_ = lie_stack(3)
    assert check_jacobi(br).verdict == "verified"


def test_jacobi_dorfman(dorfman3):
    assert check_jacobi(dorfman3.bracket, degree=2).passed


def test_jacobi_nonclosed_twist_constant_witness():
    st = canned_dorfman(4, 1)
    form = Form.basis(4, (0, 1, 2), Poly.var(4, 3))
    tw = twist(st.bracket, st.split, twist_from_form(4, 1, form))
    rep = check_jacobi(tw, degree=1)
    assert not rep.passed
    assert all(s.degree() <= 0 for _, s in rep.witness.sections)
    assert_replays(rep)


# -- the jet sweep against brute force ----------------------------------------------


@pytest.mark.parametrize("seed", range(3))
def test_jet_sweep_matches_brute_force(seed):
    rng = random.Random(seed)
    n, degree = 2, 1
    T = cartan_operators(n)["T"]
    B = _random_bracket(rng, T, good=True)
    B = B + BidiffOp(T, T, T, P={(0, 1, 1, 1): Poly.var(n, 1)}) if seed else B

    def residual(ops, x):
        u, v, w = x["u"], x["v"], x["w"]
        lhs = ops.bidiff(B, u, ops.bidiff(B, v, w))
        rhs = ops.add(ops.bidiff(B, ops.bidiff(B, u, v), w), ops.bidiff(B, v, ops.bidiff(B, u, w)))
        return ops.sub(lhs, rhs)

    slots = [("u", T), ("v", T), ("w", T)]
    rep = _basis_check("jacobi", n, slots, residual, degree, 0, 2)
    basis = SectionBasis(T, degree, 0)
    direct = DirectBackend(n)
    brute_fail = any(
        not residual(direct, {"u": a, "v": b, "w": c}).is_zero() for a, b, c in product(basis, basis, basis)
    )
    assert rep.passed == (not brute_fail)


# -- pre-calculus --------------------------------------------------------------------


def test_precalculus_cartan():
    rep = check_precalculus(make_cartan_precalculus(3, 2, verify=False), degree=2)
    assert rep.passed
    assert [r.axiom for r in rep.subreports] == [
        "iota-tensorial", "d-symbol", "lie-z-derivation", "lie-z-symbol", "bc1", "bc2"
    ]


def test_precalculus_flat_connection():
    assert make_connection_precalculus(Bundle("P", 2, 2), {}, 1, degree=2).passed


def test_precalculus_corrupted_l():
    pc = make_cartan_precalculus(3, 2, verify=False)
    l = dict(pc.l)
    key = min(l)
    l[key] = -l[key]
    bad = PreCalculus(pc.base, pc.R, pc.Z, pc.iota, pc.d, l, pc.lie_r, pc.lie_z, degree=2)
    assert not bad.passed
    sub = {r.axiom: r for r in bad.report.subreports}
    assert sub["d-symbol"].verdict == "failed"
    assert_replays(sub["d-symbol"])


# -- classification ------------------------------------------------------------------


def test_classify_dorfman(dorfman3):
    h = dorfman3.classify(degree=2)
    assert h.label == "Metric-Bourbaki (Courant instance)"
    assert [r.axiom for r in h.reports] == [
        "right-leibniz", "locality", "symmetric-part", "metric-invariance", "anchor-morphism", "jacobi"
    ]
    assert h.metric.ok


def test_classify_nonclosed_twist():
    st = canned_dorfman(4, 1)
    form = Form.basis(4, (0, 1, 2), Poly.var(4, 3))
    tw = twist(st, st.split, twist_from_form(4, 1, form))
    h = tw.classify(degree=1)
    assert h.label == "Pre-Metric-Bourbaki"
    assert [r.axiom for r in h.reports if not r.passed] == ["jacobi"]


def test_classify_lie_instance():
    h = classify(*lie_stack(2), degree=2)
    assert h.label == "Metric-Bourbaki (Lie instance)"


def test_twist_is_monotone(dorfman3):
    st = dorfman3
    base = {r.axiom: r.passed for r in st.classify(degree=1).reports}
    for seed in range(3):
        H = random_two_form(st.split.A, st.split.Z, degree=1, seed=seed, density=0.8)
        tw = twist(st, st.split, H).classify(degree=1)
        for r in tw.reports:
            if r.axiom in ("right-leibniz", "locality", "symmetric-part", "anchor-morphism"):
                assert r.passed == base[r.axiom]


def test_invariance_implies_right_leibniz(dorfman3):
    h = dorfman3.classify(degree=1)
    if h.verdict("metric-invariance").passed and h.metric.ok:
        assert h.verdict("right-leibniz").passed
    assert not any("inconsistent" in n for n in h.notes)


def test_every_failure_replays(dorfman3):
    st = dorfman3
    E = st.E
    bad = st.bracket + BidiffOp(E, E, E, C={(0, 0, 4): Poly.const(3, 1)}, P={(3, 1, 2, 0): Poly.var(3, 1)})
    h = classify(bad, st.rho, st.metric, st.dirac, st.lie_r, st.base, degree=1)
    failed = [r for r in h.reports if not r.passed]
    assert failed
    for r in failed:
        assert_replays(r)
