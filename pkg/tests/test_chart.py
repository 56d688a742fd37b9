import random

import pytest
from hypothesis import given, strategies as st

from bourbaki import (
    BaseAlgebroid,
    BidiffOp,
    Bundle,
    BundleMap,
    DimensionMismatch,
    Form,
    Poly,
    Refused,
    Section,
    VectorField,
    a_exterior_d,
    a_interior,
    a_lie_derivative,
    base_cartan,
    check_cartan_suite,
    exterior_d,
    interior,
    lie_bracket,
    lie_derivative,
    wedge,
)
from bourbaki.engine import CARTAN_IDENTITIES
from conftest import polys
import oracles as o


def x(n, i):
    return Poly.var(n, i)


def dx(n, *idx, coef=None):
    return Form.basis(n, tuple(idx), coef)


def vf(n, i, coef=None):
    return VectorField.coordinate(n, i, coef)


# -- worked examples --------------------------------------------------------


def test_wedge_examples():
    assert wedge(dx(2, 0), dx(2, 0)).is_zero()
    assert wedge(dx(2, 0, coef=x(2, 0)), dx(2, 1)) == dx(2, 0, 1, coef=x(2, 0))
    assert wedge(dx(2, 1), dx(2, 0)) == -dx(2, 0, 1)


def test_wedge_past_top_degree_is_zero():
    w = wedge(dx(2, 0, 1), dx(2, 0))
    assert w.is_zero() and w.degree == 3


def test_exterior_d_examples():
    f = Form.function(x(2, 0) * x(2, 1))
    assert exterior_d(f) == dx(2, 0, coef=x(2, 1)) + dx(2, 1, coef=x(2, 0))
    assert exterior_d(dx(2, 0, coef=x(2, 0) * x(2, 1))) == dx(2, 0, 1, coef=-x(2, 0))
    assert exterior_d(dx(2, 0, 1, coef=x(2, 0))).is_zero()


def test_interior_examples():
    assert interior(vf(2, 0), dx(2, 0, 1)) == dx(2, 1)
    assert interior(vf(2, 0), interior(vf(2, 0), dx(2, 0, 1))).is_zero()
    assert interior(vf(2, 0, x(2, 1)), dx(2, 0)) == Form.function(x(2, 1))
    assert interior(vf(2, 0), Form.function(x(2, 0))).is_zero()


def test_lie_derivative_examples():
    assert lie_derivative(vf(2, 0), dx(2, 1, coef=x(2, 0))) == dx(2, 1)
    V = VectorField.parse(["x2", "x1^2"], 2)
    f = Poly.parse("x1*x2^2", 2)
    assert lie_derivative(V, Form.function(f)) == Form.function(V.apply(f))
    zero = VectorField([Poly.zero(2)] * 2)
    assert lie_derivative(zero, dx(2, 0, coef=x(2, 1))).is_zero()


def test_lie_bracket_examples():
    U, V = vf(2, 1, x(2, 0)), vf(2, 0, x(2, 1))
    assert lie_bracket(U, V) == VectorField([x(2, 0), -x(2, 1)])
    assert lie_bracket(V, V).is_zero()
    assert lie_bracket(vf(2, 0), vf(2, 1)).is_zero()


def test_chart_mismatch_is_an_error():
    with pytest.raises(DimensionMismatch):
        wedge(dx(2, 0), dx(3, 0))
    with pytest.raises(DimensionMismatch):
        interior(vf(3, 0), dx(2, 0))


# -- oracle comparisons ------------------------------------------------------


@pytest.mark.parametrize("seed", range(12))
def test_operators_match_component_formulas(seed):
    rng = random.Random(seed)
    n = rng.choice([2, 3, 4])
    p = rng.randint(0, n)
    q = rng.randint(0, n - p)
    w, h = o.random_form(rng, n, p, 3), o.random_form(rng, n, q, 2)
    U, V = o.random_field(rng, n, 2), o.random_field(rng, n, 2)
    W, Hf = o.dict_to_form(n, p, w), o.dict_to_form(n, q, h)
    UU, VV = o.list_to_vf(n, U), o.list_to_vf(n, V)
    assert o.form_to_dict(exterior_d(W)) == o.d(w, n, p)
    assert o.form_to_dict(wedge(W, Hf)) == o.wedge(w, h)
    if p:
        assert o.form_to_dict(interior(VV, W)) == o.interior(V, w, p)
    assert o.form_to_dict(lie_derivative(VV, W)) == o.lie(V, w, n, p)
    assert o.vf_to_list(lie_bracket(UU, VV)) == o.bracket(U, V, n)


@pytest.mark.parametrize("seed", range(6))
def test_interior_agrees_with_evaluation(seed):
    rng = random.Random(100 + seed)
    n, p = 3, rng.randint(1, 3)
    w = o.random_form(rng, n, p, 2)
    vs = [o.random_field(rng, n, 1) for _ in range(p)]
    inner = o.interior(vs[0], w, p)
    assert o.evaluate(w, n, vs) == o.evaluate(inner, n, vs[1:])


@given(st.integers(0, 3), st.integers(0, 3), st.data())
def test_wedge_graded_commutative(p, q, data):
    n = 3
    rng = random.Random(data.draw(st.integers(0, 10**6)))
    if p + q > n:
        q = n - p
    a = o.dict_to_form(n, p, o.random_form(rng, n, p, 2))
    b = o.dict_to_form(n, q, o.random_form(rng, n, q, 2))
    assert wedge(a, b) == wedge(b, a).scale((-1) ** (p * q))


@given(polys(3, 3), polys(3, 3), polys(3, 3), polys(3, 2))
def test_bracket_leibniz_and_antisymmetry(a, b, c, f):
    U = VectorField([a, b, c])
    V = VectorField([c, f, a])
    assert lie_bracket(U, V.scale(f)) == lie_bracket(U, V).scale(f) + V.scale(U.apply(f))
    assert lie_bracket(U, V) == lie_bracket(V, U).scale(-1)


# -- the identity suite on small charts -------------------------------------


@pytest.mark.parametrize("n", [1, 2, 4])
def test_cartan_suite_other_dimensions(n):
    reports = check_cartan_suite(n, degree=3)
    assert [r.axiom for r in reports] == list(CARTAN_IDENTITIES)
    assert all(r.verdict == "verified" for r in reports), [str(r) for r in reports if not r.passed]


def test_cartan_suite_random_sections_are_evaluated_directly():
    rep = check_cartan_suite(3, degree=1, samples=3, identities=["lie-bracket"])[0]
    assert rep.passed and rep.cases > 0 and len(rep.subreports) == 4


# -- base algebroids ---------------------------------------------------------


def rank_one():
    A = Bundle("A", 1, 1, ("e",))
    T = Bundle("T", 1, 1, ("d/dx1",))
    return BaseAlgebroid.from_structure(BundleMap(A, T, {(0, 0): Poly.var(1, 0)}))


def test_rank_one_differential():
    A = rank_one()
    f = Poly.parse("x1^3 + 2*x1", 1)
    df = a_exterior_d(A, Form(1, 0, {(): f}, dim=1))
    assert df[(0,)] == Poly.var(1, 0) * f.partial(0)
    ddf = a_exterior_d(A, df)
    assert ddf.is_zero()


def test_rank_one_bracket_formula():
    A = rank_one()
    f, g = Poly.parse("x1^2", 1), Poly.parse("x1 + 1", 1)
    u, v = Section(A.bundle, [f]), Section(A.bundle, [g])
    xvar = Poly.var(1, 0)
    expected = f * xvar * g.partial(0) - g * xvar * f.partial(0)
    assert A.bracket.apply(u, v)[0] == expected


def test_tangent_base_cartan_matches_chart_operators():
    rng = random.Random(7)
    n, k = 3, 2
    A = BaseAlgebroid.tangent(n)
    ct = base_cartan(A, k)
    from bourbaki.chart import form_to_section, section_to_form

    for _ in range(10):
        w = o.dict_to_form(n, k, o.random_form(rng, n, k, 2))
        r = o.dict_to_form(n, k - 1, o.random_form(rng, n, k - 1, 2))
        V = o.list_to_vf(n, o.random_field(rng, n, 2))
        Vs = Section(A.bundle, V.components)
        assert section_to_form(ct.d.apply(form_to_section(r, ct.R)), k) == exterior_d(r)
        assert section_to_form(ct.iota.apply(Vs, form_to_section(w, ct.Z)), k - 1) == interior(V, w)
        assert section_to_form(ct.lie.apply(Vs, form_to_section(w, ct.Z)), k) == lie_derivative(V, w)


def test_a_operators_satisfy_magic_formula():
    A = rank_one()
    w = Form(1, 1, {(0,): Poly.parse("x1^2 - 3", 1)}, dim=1)
    a = [Poly.parse("2*x1 + 1", 1)]
    lhs = a_lie_derivative(A, a, w)
    rhs = a_exterior_d(A, a_interior(A, a, w)) + a_interior(A, a, a_exterior_d(A, w))
    assert lhs == rhs


def test_corrupted_base_is_refused():
    A = Bundle("A", 2, 2)
    T = Bundle("T", 2, 2)
    anchor = BundleMap.identity(T)
    anchor = BundleMap(A, T, anchor.entries)
    ok = BaseAlgebroid.from_structure(anchor, {})
    assert ok.verified_degree == 2
    # a non-antisymmetric structure function
    with pytest.raises(Refused, match="antisymmetry"):
        BaseAlgebroid.from_structure(anchor, {(0, 0, 1): Poly.const(2, 1)})
    # a bracket whose Leibniz part disagrees with the anchor
    bad = BidiffOp(A, A, A, P={(0, 0, 0, 0): Poly.const(2, 1)}, Q={(0, 0, 0, 0): Poly.const(2, -1)})
    with pytest.raises(Refused, match="right-leibniz"):
        BaseAlgebroid(anchor, bad)
