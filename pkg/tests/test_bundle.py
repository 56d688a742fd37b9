import random

import pytest
from hypothesis import given, strategies as st

from bourbaki import (
    BidiffOp,
    Bundle,
    BundleMap,
    BundleMismatch,
    FirstOrderOp,
    Form,
    MetricTensor,
    Poly,
    Section,
    ShapeMismatch,
    SplitPresentation,
    VectorField,
    bidiff_equal,
    canned_dorfman,
    cartan_operators,
    check_metric,
    check_split,
    interior,
    lie_bracket,
    random_two_form,
    twist,
)
from bourbaki.bundle import apply_bidiff, apply_first_order
from bourbaki.chart import form_to_section, section_to_form
from conftest import polys
import oracles as o


def random_section(rng, bundle, degree=2):
    n = bundle.nvars
    return Section(bundle, [o.sympy_to_poly(o.random_expr(rng, n, degree), n) for _ in range(bundle.rank)])


def random_bidiff(rng, E, degree=1):
    n, m = E.nvars, E.rank

    def p():
        return o.sympy_to_poly(o.random_expr(rng, n, degree, 2), n)

    C = {(a, b, c): p() for a in range(m) for b in range(m) for c in range(m) if rng.random() < 0.3}
    P = {(a, b, c, i): p() for a in range(m) for b in range(m) for c in range(m) for i in range(n) if rng.random() < 0.2}
    Q = {(a, b, c, i): p() for a in range(m) for b in range(m) for c in range(m) for i in range(n) if rng.random() < 0.2}
    return BidiffOp(E, E, E, C=C, P=P, Q=Q)


def test_first_order_exterior_derivative():
    ops = cartan_operators(2)
    f = Section(ops["L"][0], [Poly.parse("x1*x2", 2)])
    out = apply_first_order(ops["d"][0], f)
    assert out.to_strings() == ["x2", "x1"]


@pytest.mark.parametrize("seed", range(5))
def test_symbol_law(seed):
    rng = random.Random(seed)
    n = 3
    R, Z = Bundle("R", 2, n), Bundle("Z", 3, n)
    D = FirstOrderOp(
        R,
        Z,
        D0={(z, r): o.sympy_to_poly(o.random_expr(rng, n, 2), n) for z in range(3) for r in range(2)},
        D1={(z, r, i): o.sympy_to_poly(o.random_expr(rng, n, 1), n) for z in range(3) for r in range(2) for i in range(n)},
    )
    f = Poly.parse("x1^2", n) + o.sympy_to_poly(o.random_expr(rng, n, 2), n)
    r = random_section(rng, R)
    lhs = D.apply(r.scale(f)) - D.apply(r).scale(f)
    expected = [Poly.zero(n)] * 3
    for (z, rr, i), p in D.D1.items():
        expected[z] = expected[z] + p * f.partial(i) * r[rr]
    assert lhs == Section(Z, expected)


def test_zeroth_order_has_no_symbol():
    R, Z = Bundle("R", 2, 2), Bundle("Z", 2, 2)
    D = FirstOrderOp.zeroth_order(BundleMap(R, Z, {(0, 1): Poly.parse("x1", 2), (1, 0): Poly.const(2, 3)}))
    r = Section(R, [Poly.parse("x2", 2), Poly.parse("1 + x1", 2)])
    f = Poly.parse("x1*x2 - 4", 2)
    assert (D.apply(r.scale(f)) - D.apply(r).scale(f)).is_zero()


def test_a_symbol_factors_through_anchor():
    A, T = Bundle("A", 1, 1), Bundle("T", 1, 1)
    anchor = BundleMap(A, T, {(0, 0): Poly.var(1, 0)})
    R, Z = Bundle("R", 1, 1), Bundle("Z", 1, 1)
    D = FirstOrderOp.from_a_symbol(R, Z, {}, {(0, 0, 0): Poly.const(1, 2)}, anchor)
    assert D.D1 == {(0, 0, 0): Poly.parse("2*x1", 1)}
    assert not D.symbol_residual()


def test_lie_bracket_as_bidiff():
    br = cartan_operators(2)["bracket"]
    T = br.left
    u = Section(T, [Poly.zero(2), Poly.parse("x1", 2)])
    v = Section(T, [Poly.parse("x2", 2), Poly.zero(2)])
    assert br.apply(u, v).to_strings() == ["x1", "-x2"]


def test_zero_bidiff_gives_zero():
    E = Bundle("E", 2, 2)
    B = BidiffOp.zero(E, E, E)
    rng = random.Random(3)
    assert B.apply(random_section(rng, E), random_section(rng, E)).is_zero()


def test_interior_as_bidiff_matches_chart():
    rng = random.Random(11)
    n, p = 3, 2
    ops = cartan_operators(n)
    for _ in range(10):
        w = o.dict_to_form(n, p, o.random_form(rng, n, p, 2))
        V = o.list_to_vf(n, o.random_field(rng, n, 2))
        got = ops["iota"][p].apply(Section(ops["T"], V.components), form_to_section(w, ops["L"][p]))
        assert section_to_form(got, p - 1) == interior(V, w)


@pytest.mark.parametrize("seed", range(4))
def test_leibniz_contractions(seed):
    rng = random.Random(seed)
    E = Bundle("E", 2, 2)
    B = random_bidiff(rng, E)
    u, v = random_section(rng, E), random_section(rng, E)
    f = o.sympy_to_poly(o.random_expr(rng, 2, 2), 2)
    right = B.apply(u, v.scale(f)) - B.apply(u, v).scale(f)
    left = B.apply(u.scale(f), v) - B.apply(u, v).scale(f)
    exp_r, exp_l = [Poly.zero(2)] * 2, [Poly.zero(2)] * 2
    for (a, b, c, i), p in B.P.items():
        exp_r[a] = exp_r[a] + p * f.partial(i) * u[b] * v[c]
    for (a, b, c, i), p in B.Q.items():
        exp_l[a] = exp_l[a] + p * f.partial(i) * u[b] * v[c]
    assert right == Section(E, exp_r) and left == Section(E, exp_l)


def test_from_callable_recovers_tensors():
    rng = random.Random(5)
    E = Bundle("E", 2, 2)
    B = random_bidiff(rng, E)
    again = BidiffOp.from_callable(B.apply, E, E, E)
    assert bidiff_equal(B, again)


def test_bidiff_equal_relations():
    rng = random.Random(8)
    E = Bundle("E", 2, 2)
    B1 = random_bidiff(rng, E)
    B2 = BidiffOp.from_callable(B1.apply, E, E, E)
    B3 = BidiffOp.from_callable(B2.apply, E, E, E)
    assert bidiff_equal(B1, B1) and bidiff_equal(B2, B1) and bidiff_equal(B1, B3)
    u, v = random_section(rng, E), random_section(rng, E)
    assert B1.apply(u, v) == B3.apply(u, v)


def test_bidiff_equal_rejects_different_shapes():
    E, F = Bundle("E", 2, 2), Bundle("F", 3, 2)
    with pytest.raises(ShapeMismatch):
        bidiff_equal(BidiffOp.zero(E, E, E), BidiffOp.zero(F, F, F))


def test_dorfman_differs_from_twisted():
    st_ = canned_dorfman(3, 1)
    H = random_two_form(st_.split.A, st_.split.Z, seed=1, density=1.0)
    assert not bidiff_equal(st_.bracket, twist(st_.bracket, st_.split, H))


def test_section_bundle_mismatch():
    E, F = Bundle("E", 2, 2), Bundle("F", 3, 2)
    with pytest.raises(BundleMismatch):
        E.zero() + F.zero()


# -- metrics -------------------------------------------------------------


def g_standard(n):
    return canned_dorfman(n, 1).metric


def test_standard_pairing_is_nondegenerate():
    g = g_standard(2)
    rep = check_metric(g, [(1, 1)])
    assert rep.ok and rep.ranks == (4,)
    rows = g.flattened_at((1, 1))
    assert rows == [[0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0]]


def test_zero_row_is_degenerate():
    E, R = Bundle("E", 2, 1), Bundle("R", 1, 1)
    g = MetricTensor(E, R, {(0, 0, 0): Poly.const(1, 1)})
    rep = check_metric(g, [(0,), (5,)])
    assert rep.status == "degenerate" and rep.offending == (0,)


def test_asymmetric_metric():
    E, R = Bundle("E", 2, 1), Bundle("R", 1, 1)
    g = MetricTensor(E, R, {(0, 0, 1): Poly.const(1, 1), (0, 1, 0): Poly.const(1, 2)})
    rep = check_metric(g, [(1,)])
    assert rep.status == "asymmetric" and "g[1][1][2]" in rep.describe()


def test_generic_rank_reading_is_pointwise():
    E, R = Bundle("E", 1, 1), Bundle("R", 1, 1)
    g = MetricTensor(E, R, {(0, 0, 0): Poly.var(1, 0)})
    assert check_metric(g, [(1,)]).ok
    assert not check_metric(g, [(0,)]).ok


# -- split presentations ------------------------------------------------------


def test_canonical_split_is_exact_and_isotropic():
    st_ = canned_dorfman(3, 2)
    rep = check_split(st_.split, st_.metric)
    assert rep.exact and rep.chi_isotropic and rep.phi_isotropic


def test_perturbed_split_stays_exact_but_phi_not_isotropic():
    st_ = canned_dorfman(2, 1)
    S = st_.split
    beta = BundleMap(S.A, S.Z, {(1, 0): Poly.parse("x2", 2)})
    S2 = S.with_phi(S.phi + S.chi.compose(beta))
    rep = check_split(S2, st_.metric)
    assert rep.exact and rep.chi_isotropic and not rep.phi_isotropic
    # g((phi + chi beta) U, (phi + chi beta) V) = iota_U beta V + iota_V beta U
    F = st_.metric.pullback(S2.phi)
    assert F[(0, 0, 0)] == Poly.zero(2) and F[(0, 0, 1)] == Poly.parse("x2", 2) and F[(0, 1, 0)] == Poly.parse("x2", 2)


def test_broken_exactness_names_entry():
    T = Bundle("T", 2, 2)
    Z = Bundle("Z", 2, 2)
    S = SplitPresentation.canonical(T, Z)
    bad = SplitPresentation(S.chi + BundleMap(Z, S.E, {(0, 0): Poly.const(2, 1)}), S.Q, S.phi, S.retraction)
    rep = check_split(bad)
    assert not rep.exact
    assert "Q chi = 0 fails at entry (1, 1)" in rep.describe()


def test_iso_round_trip():
    st_ = canned_dorfman(2, 1)
    S = st_.split
    beta = BundleMap(S.A, S.Z, {(0, 1): Poly.parse("x1", 2)})
    S2 = S.with_phi(S.phi + S.chi.compose(beta))
    fwd, bwd = S2.iso()
    assert bwd.compose(fwd) == BundleMap.identity(fwd.domain)
    assert fwd.compose(bwd) == BundleMap.identity(S2.E)
