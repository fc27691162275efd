import pytest
from gmpy2 import mpq
from hypothesis import given, strategies as st

from formality import FiberPolyOp, FiberPolyVec, FormSection, apply_op, multiplication
from formality.brackets import (PolyMap, d_hom, gerstenhaber, hkr, hochschild_d, schouten,
                                total_degree)
from randgen import make_rng, rand_op, rand_section, rand_vec

seeds = st.integers(0, 10**6)
D, N = 2, 6


def S(text, d=D):
    return FormSection.parse(d, N, text)


def V(terms, d=D):
    return FiberPolyVec.from_terms(d, N, terms)


def Op(terms, d=D):
    return FiberPolyOp.from_terms(d, N, terms)


def sgn(n):
    return -1 if n % 2 else 1


def _op(rng, d):
    return rand_op(rng, d, None, rng.randint(-1, 1), ydeg=2, q=rng.randint(0, 1), nterms=2, order=1)


def _vec(rng, d):
    return rand_vec(rng, d, None, rng.randint(-1, d - 1), ydeg=2, q=rng.randint(0, 1), nterms=2)


# -- gerstenhaber -----------------------------------------------------------

def test_m_m_vanishes():
    m = multiplication(D, N)
    assert gerstenhaber(m, m) == 0


def test_commutator_of_first_order_operators():
    p1 = Op({((1, 0),): 1})
    p2 = Op({((0, 1),): "y1"})
    assert gerstenhaber(p1, p2) == Op({((0, 1),): 1})


def test_hochschild_of_vector_field_vanishes():
    v = Op({((1, 0),): "y2^2", ((0, 1),): "y1*x1"})
    assert hochschild_d(v) == 0


def test_hochschild_of_section_vanishes():
    f = S("y1*y2 + x1").as_op()
    assert hochschild_d(f) == 0


@given(seeds, st.integers(2, 3))
def test_gerstenhaber_axioms(seed, d):
    rng = make_rng(seed)
    a, b, c = (_op(rng, d) for _ in range(3))
    ka, kb = total_degree(a), total_degree(b)
    assert gerstenhaber(a, b) == gerstenhaber(b, a) * (-sgn(ka * kb))
    jac = (gerstenhaber(a, gerstenhaber(b, c)) - gerstenhaber(gerstenhaber(a, b), c)
           - gerstenhaber(b, gerstenhaber(a, c)) * sgn(ka * kb))
    assert jac == 0


@given(seeds)
def test_hochschild_squares_to_zero(seed):
    rng = make_rng(seed)
    a = rand_op(rng, D, None, rng.randint(-1, 2), ydeg=2, q=rng.randint(0, 1), nterms=2, order=2)
    assert hochschild_d(hochschild_d(a)) == 0


@given(seeds)
def test_hochschild_is_derivation(seed):
    rng = make_rng(seed)
    a, b = _op(rng, D), _op(rng, D)
    ka = total_degree(a)
    lhs = hochschild_d(gerstenhaber(a, b))
    rhs = gerstenhaber(hochschild_d(a), b) + gerstenhaber(a, hochschild_d(b)) * sgn(ka)
    assert lhs == rhs


# -- schouten ---------------------------------------------------------------

def test_vector_field_bracket():
    assert schouten(V({(0,): 1}), V({(1,): "y1"})) == V({(1,): 1})


def test_bivector_function_documented_sign():
    out = schouten(V({(0, 1): 1}), S("y1*y2").as_vec())
    assert out == V({(1,): "y2", (0,): "-y1"})


def test_constant_bivector_is_poisson():
    a = V({(0, 1): 1})
    assert schouten(a, a) == 0


@given(seeds, st.integers(2, 3))
def test_schouten_axioms(seed, d):
    rng = make_rng(seed)
    a, b, c = (_vec(rng, d) for _ in range(3))
    ka, kb = total_degree(a), total_degree(b)
    assert schouten(a, b) == schouten(b, a) * (-sgn(ka * kb))
    jac = (schouten(a, schouten(b, c)) - schouten(schouten(a, b), c)
           - schouten(b, schouten(a, c)) * sgn(ka * kb))
    assert jac == 0


@given(seeds)
def test_vector_on_function_is_directional_derivative(seed):
    rng = make_rng(seed)
    v = rand_vec(rng, D, N, 0, ydeg=2, q=0)
    f = rand_section(rng, D, N, ydeg=3, q=0)
    assert schouten(v, f.as_vec()).function_part() == apply_op(hkr(v), [f])


# -- hkr --------------------------------------------------------------------

def test_hkr_identity_on_functions_and_vectors():
    f = S("y1*x2")
    assert hkr(f) == f.as_op()
    v = V({(0,): "y2", (1,): 3})
    assert hkr(v) == Op({((1, 0),): "y2", ((0, 1),): 3})


def test_hkr_bivector_normalization():
    P = hkr(V({(0, 1): 1}))
    a, b = S("y1^2*y2"), S("y1*y2^3")
    expect = (apply_op(Op({((1, 0),): 1}), [a]).spoly, apply_op(Op({((0, 1),): 1}), [b]).spoly,
              apply_op(Op({((0, 1),): 1}), [a]).spoly, apply_op(Op({((1, 0),): 1}), [b]).spoly)
    from formality import kernels as K
    want = K.add_into(K.mul(expect[0], expect[1], N), K.mul(expect[2], expect[3], N), -1)
    assert apply_op(P, [a, b]) == FormSection(D, N, {(): K.scale(want, mpq(1, 2))})


@given(seeds)
def test_hkr_lands_in_hochschild_cocycles(seed):
    rng = make_rng(seed)
    g = rand_vec(rng, 3, None, rng.randint(-1, 2), ydeg=2, q=rng.randint(0, 1), nterms=2)
    assert hochschild_d(hkr(g)) == 0


@given(seeds)
def test_hkr_defect_is_hochschild_closed(seed):
    rng = make_rng(seed)
    a, b = (rand_vec(rng, D, None, rng.randint(0, 1), ydeg=2, q=0, nterms=2) for _ in range(2))
    defect = hkr(schouten(a, b)) - gerstenhaber(hkr(a), hkr(b))
    assert hochschild_d(defect) == 0


# -- d_hom ------------------------------------------------------------------

def test_d_hom_of_hkr_vanishes_on_basis():
    H = PolyMap(hkr, 1, 0, "hkr")
    dH = d_hom(H, None, hochschild_d)
    basis = [V({(0,): "y1"}), V({(0, 1): 1}), V({(1,): "y1*y2"}), S("y2^2").as_vec()]
    for g in basis:
        assert dH(g) == 0


def test_d_hom_zero_source_is_postcomposition():
    rng = make_rng(3)
    ops = [rand_op(rng, D, None, 1, ydeg=2, q=0, nterms=2, order=2) for _ in range(3)]
    psi = PolyMap(lambda a, b: gerstenhaber(a, b), 2, 0, "br")
    dpsi = d_hom(psi, None, hochschild_d)
    for a in ops:
        for b in ops:
            assert dpsi(a, b) == hochschild_d(gerstenhaber(a, b))


@given(seeds)
def test_d_hom_nilpotent(seed):
    rng = make_rng(seed)
    c = rand_op(rng, D, None, 1, ydeg=1, q=0, nterms=2, order=1)
    psi = PolyMap(lambda a, b: gerstenhaber(c, gerstenhaber(a, b)), 2, 1, "psi")
    d1 = d_hom(psi, hochschild_d, hochschild_d)
    d2 = d_hom(d1, hochschild_d, hochschild_d)
    a, b = _op(rng, D), _op(rng, D)
    assert d2(a, b) == 0
