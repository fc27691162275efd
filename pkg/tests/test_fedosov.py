import pytest
from gmpy2 import mpq
from hypothesis import given, strategies as st

from formality import (CapacityError, CoeffPoly, FiberPolyOp, FiberPolyVec, FormSection,
                       PreconditionError, ValidationError, apply_op, multiplication)
from formality.brackets import ad_vector_form, hkr, schouten
from formality.fedosov import (ConnectionData, ResidualError, curvature, delta, delta_inv,
                               fedosov_D, lift_base, mu_project, nabla, sigma, solve_A,
                               solve_exact, tau_function)
from formality.graded import base_function, to_base
from randgen import make_rng, rand_op, rand_section, rand_vec

seeds = st.integers(0, 10**6)
N = 6
FLAT = ConnectionData.flat(2)
CURVED = ConnectionData(2, {(1, 0, 0): "x2"})
CURVED3 = ConnectionData(3, {(1, 0, 0): "x2*x3", (2, 1, 2): "x1", (2, 2, 1): "x1"})


@pytest.fixture(scope="module")
def st_flat():
    return solve_A(FLAT, N)


@pytest.fixture(scope="module")
def st_curved():
    return solve_A(CURVED, N)


def S(text, d=2):
    return FormSection.parse(d, N, text)


def _random_any(rng, d, ydeg=3):
    kind = rng.randrange(3)
    q = rng.randint(0, d)
    if kind == 0:
        return rand_section(rng, d, N, ydeg=ydeg, q=q)
    if kind == 1:
        return rand_vec(rng, d, N, rng.randint(-1, d - 1), ydeg=ydeg, q=q)
    return rand_op(rng, d, N, rng.randint(-1, 2), ydeg=ydeg, q=q)


# -- connection data -----------------------------------------------------------

def test_torsion_rejected():
    with pytest.raises(ValidationError):
        ConnectionData(2, {(0, 0, 1): "x1"})


def test_riemann_component():
    assert CURVED.riemann(1, 0, 0, 1) == CoeffPoly.const(2, -1)
    assert CURVED.riemann(1, 0, 1, 0) == CoeffPoly.const(2, 1)
    assert CURVED.riemann(0, 0, 0, 1) == CoeffPoly(2)


def test_constant_single_entry_is_flat():
    assert curvature(ConnectionData(2, {(1, 0, 0): "5"}), N) == 0
    assert curvature(FLAT, N) == 0


# -- delta, delta_inv, sigma ---------------------------------------------------------

def test_delta_examples():
    assert delta(S("y1*y2")) == S("dx1*y2 + dx2*y1")
    assert delta(multiplication(2, N)) == 0


def test_delta_inv_examples():
    assert delta_inv(S("dx1")) == S("y1")
    assert delta_inv(S("y1")) == 0
    assert delta_inv(S("y1*dx2")) == S("1/2*y1*y2")


def test_sigma_examples():
    assert sigma(S("3 + x1*y2 + y1*dx1")) == S("3")
    assert sigma(multiplication(2, N)) == multiplication(2, N)


@given(seeds, st.integers(2, 3))
def test_hodge_identity(seed, d):
    a = _random_any(make_rng(seed), d, ydeg=N - 1)
    assert a == sigma(a) + delta(delta_inv(a)) + delta_inv(delta(a))


@given(seeds)
def test_homotopy_relations(seed):
    a = _random_any(make_rng(seed), 3)
    assert delta(delta(a)) == 0
    assert delta_inv(delta_inv(a)) == 0
    assert sigma(delta_inv(a)) == 0
    assert delta_inv(sigma(a)) == 0


# -- nabla and curvature -------------------------------------------------------------

def test_nabla_examples():
    assert nabla(S("x1*y2"), FLAT) == S("dx1*y2")
    assert nabla(S("y2"), CURVED) == S("-x2*y1*dx1")


@given(seeds)
def test_nabla_anticommutes_with_delta(seed):
    a = _random_any(make_rng(seed), 3)
    assert delta(nabla(a, CURVED3)) + nabla(delta(a), CURVED3) == 0


@given(seeds)
def test_nabla_squared_is_curvature_action(seed):
    rng = make_rng(seed)
    a = _random_any(rng, 3, ydeg=2)
    R = curvature(CURVED3, N)
    assert nabla(nabla(a, CURVED3), CURVED3) == ad_vector_form(R, a)


def test_bianchi():
    for conn in (CURVED, CURVED3):
        R = curvature(conn, N)
        assert delta(R) == 0
        assert nabla(R, conn) == 0


# -- solve_A and D -------------------------------------------------------------------

def test_flat_A_is_zero(st_flat):
    assert st_flat.A == 0


def test_first_iterate(st_curved):
    A2 = st_curved.A.ydeg_part(2)
    assert A2 == delta_inv(st_curved.R)
    assert delta(A2) == st_curved.R


@pytest.mark.parametrize("conn", [CURVED, CURVED3], ids=["r2", "r3"])
def test_flatness_residual_degree_by_degree(conn):
    st = solve_A(conn, N)
    res = st.flatness_residual()
    for p in range(N):
        assert res.ydeg_part(p) == 0, p
    assert delta_inv(st.A) == 0
    assert st.A.min_ydeg() >= 2


def test_D_examples(st_flat, st_curved):
    assert fedosov_D(S("y1"), st_flat) == S("-dx1")
    for st_ in (st_flat, st_curved):
        assert fedosov_D(multiplication(2, N), st_) == 0


@given(seeds)
def test_D_squared_through_valid_to(seed):
    st_ = solve_A(CURVED, N)
    a = _random_any(make_rng(seed), 2, ydeg=3)
    DDa = fedosov_D(fedosov_D(a, st_), st_)
    assert DDa.truncated(DDa.valid_to) == 0


# -- solve_exact, tau -----------------------------------------------------------------

def test_solve_exact_examples(st_flat):
    assert solve_exact(S("-dx1"), st_flat) == S("y1")
    assert solve_exact(S("dx1*dx2"), st_flat) == S("-1/2*y1*dx2 + 1/2*y2*dx1")
    with pytest.raises(PreconditionError):
        solve_exact(S("y1"), st_flat)
    with pytest.raises(ResidualError):
        solve_exact(S("y2*dx1"), st_flat)


@given(seeds)
def test_solve_exact_properties(seed):
    rng = make_rng(seed)
    st_ = solve_A(CURVED, N)
    sp = {k: v for k, v in rand_section(rng, 2, N, ydeg=3, q=0).data.get((), {}).items() if any(k[0])}
    c = FormSection(2, N, {(): sp})
    a = fedosov_D(c, st_)
    if a == 0:
        return
    b = solve_exact(a, st_)
    Db = fedosov_D(b, st_)
    v = min(Db.valid_to, a.valid_to)
    assert (Db - a).truncated(v) == 0
    assert sigma(b) == 0 and delta_inv(b) == 0


def test_tau_taylor_flat(st_flat):
    assert tau_function(st_flat, "x1") == S("x1 + y1")
    assert tau_function(st_flat, "x1^2") == S("x1^2 + 2*x1*y1 + y1^2")


@pytest.mark.parametrize("f", ["x1", "x2^2", "x1*x2^3", "x1^4"])
def test_tau_properties_curved(st_curved, f):
    t = tau_function(st_curved, f)
    assert sigma(t) == sigma(S(f))
    Dt = fedosov_D(t, st_curved)
    assert Dt.truncated(Dt.valid_to) == 0


# -- mu -------------------------------------------------------------------------------

def test_mu_examples(st_flat, st_curved):
    d1 = FiberPolyOp.from_terms(2, N, {((1, 0),): 1})
    assert mu_project(d1, st_flat) == FiberPolyOp.from_terms(2, None, {((1, 0),): 1}, "x")
    for st_ in (st_flat, st_curved):
        assert mu_project(multiplication(2, N), st_) == multiplication(2, None, "x")


def test_mu_sigma_tau_identity_on_vector_field(st_curved):
    v = FiberPolyVec.from_terms(2, None, {(0,): "x2", (1,): "x1^2"}, "x")
    assert mu_project(lift_base(v, st_curved), st_curved) == v
    assert mu_project(lift_base(hkr(v), st_curved), st_curved) == hkr(v)


def test_mu_capacity(st_flat):
    P = FiberPolyOp.from_terms(2, N, {((N + 1, 0),): 1})
    with pytest.raises(CapacityError):
        mu_project(P, st_flat)


def test_morphism_property_on_composition(st_curved):
    """sigma(P1(P2(tau f))) = mu(P1)(mu(P2) f) for D-closed lifts of base operators."""
    st_ = st_curved
    Q1 = FiberPolyOp.from_terms(2, None, {((1, 0),): "x2", ((0, 1),): 1}, "x")
    Q2 = FiberPolyOp.from_terms(2, None, {((0, 2),): 1, ((1, 0),): "x1"}, "x")
    P1, P2 = lift_base(Q1, st_), lift_base(Q2, st_)
    for text in ("x1^2*x2", "x2^3", "x1*x2"):
        f = base_function(2, text)
        lhs = to_base(sigma(apply_op(P1, [apply_op(P2, [tau_function(st_, CoeffPoly.parse(text, 2))])])))
        assert lhs == apply_op(Q1, [apply_op(Q2, [f])])
