from fractions import Fraction

import pytest
from gmpy2 import mpq
from hypothesis import given, strategies as st

from formality import (CoeffPoly, FiberPolyOp, FiberPolyVec, FormSection, StructuralError,
                       ValidationError, apply_op, grade_of, multiplication, wedge_mul)
from formality.graded import INF, lmul
from randgen import make_rng, rand_op, rand_section, rand_vec

seeds = st.integers(0, 10**6)


def S(text, d=2, N=6):
    return FormSection.parse(d, N, text)


# -- add ----------------------------------------------------------------------

def test_add_linearity():
    assert S("y1") + S("y1") == S("2*y1")


def test_add_cancellation_gives_empty_map():
    z = S("y1") + S("-y1")
    assert z == 0 and z.data == {}


def test_add_merges_coefficients():
    a = S("x1*y1*dx2") + S("x2*y1*dx2")
    assert a == S("(x1+x2)*y1*dx2")
    assert list(a.terms().values()) == [CoeffPoly.parse("x1+x2", 2)]


def test_mismatched_operands_rejected():
    with pytest.raises(StructuralError):
        S("y1", N=4) + S("y1", N=5)
    with pytest.raises(StructuralError):
        S("y1", d=2) + S("y1", d=3)


# -- wedge_mul ----------------------------------------------------------------

def test_forms_anticommute():
    assert wedge_mul(S("dx1"), S("dx2")) == S("dx1*dx2")
    assert wedge_mul(S("dx2"), S("dx1")) == S("-dx1*dx2")
    assert wedge_mul(S("dx1"), S("dx1")) == 0


def test_fiber_variables_commute():
    assert wedge_mul(S("y1"), S("y2")) == S("y1*y2") == wedge_mul(S("y2"), S("y1"))


def test_truncation_drops_high_degree():
    out = wedge_mul(S("y1*y2", N=2), S("y1", N=2))
    assert out == 0
    assert out.valid_to == 2


def test_valid_to_infinite_when_nothing_dropped():
    assert wedge_mul(S("y1"), S("y2")).valid_to == INF


@given(seeds)
def test_wedge_associative_and_graded_commutative(seed):
    rng = make_rng(seed)
    a, b, c = (rand_section(rng, 3, 5, ydeg=2, q=rng.randint(0, 2)) for _ in range(3))
    assert wedge_mul(wedge_mul(a, b), c) == wedge_mul(a, wedge_mul(b, c))
    qa = {q for q, _, _ in grade_of(a)}
    qb = {q for q, _, _ in grade_of(b)}
    if len(qa) == 1 and len(qb) == 1:
        s = -1 if (qa.pop() * qb.pop()) % 2 else 1
        assert wedge_mul(a, b) == wedge_mul(b, a) * s


@given(seeds)
def test_normalization_is_canonical(seed):
    rng = make_rng(seed)
    a = rand_section(rng, 2, 4, nterms=6, q=None)
    items = list(a.data[()].items()) if a.data else []
    rng.shuffle(items)
    b = FormSection(2, 4, {(): {}})
    for k, c in items:
        b = b + FormSection(2, 4, {(): {k: c}})
    assert b.data == a.data


# -- apply_op -------------------------------------------------------------------

def test_apply_partial_tensor():
    P = FiberPolyOp.from_terms(2, 6, {((1, 0), (0, 1)): 1})
    assert apply_op(P, [S("y1"), S("y2")]) == S("1")


def test_apply_multiplication():
    assert apply_op(multiplication(2, 6), [S("y1"), S("y2")]) == S("y1*y2")


def test_apply_euler_operator():
    P = FiberPolyOp.from_terms(2, 6, {((1, 0),): "y1"})
    assert apply_op(P, [S("y1*y2")]) == S("y1*y2")


def test_apply_arity_checked():
    with pytest.raises(StructuralError):
        apply_op(multiplication(2, 6), [S("y1")])


@given(seeds)
def test_apply_op_multilinear(seed):
    rng = make_rng(seed)
    P = rand_op(rng, 2, 6, 1, ydeg=1, q=0)
    a, a2, b = (rand_section(rng, 2, 6, ydeg=2, q=0) for _ in range(3))
    c = mpq(rng.randint(-3, 3), 2)
    assert apply_op(P, [a + a2 * c, b]) == apply_op(P, [a, b]) + apply_op(P, [a2, b]) * c
    assert apply_op(P, [b, a + a2]) == apply_op(P, [b, a]) + apply_op(P, [b, a2])


# -- grade_of -------------------------------------------------------------------

def test_grade_examples():
    assert grade_of(S("y1*dx2")) == {(1, -1, 1)}
    assert grade_of(FiberPolyVec.from_terms(2, 6, {(0, 1): 1})) == {(0, 1, 0)}
    assert grade_of(multiplication(2, 6)) == {(0, 1, 0)}


@given(seeds)
def test_grade_additive_under_wedge(seed):
    rng = make_rng(seed)
    a, b = (rand_section(rng, 2, 6, ydeg=2, nterms=1, q=rng.randint(0, 1)) for _ in range(2))
    prod = wedge_mul(a, b)
    if prod:
        (qa, _, pa), = grade_of(a)
        (qb, _, pb), = grade_of(b)
        assert grade_of(prod) == {(qa + qb, -1, pa + pb)}


@given(seeds)
def test_lmul_distributes(seed):
    rng = make_rng(seed)
    s = rand_section(rng, 2, 5, ydeg=1, q=0)
    P, Q = rand_vec(rng, 2, 5, 1, ydeg=2, q=1), rand_vec(rng, 2, 5, 1, ydeg=2, q=1)
    assert lmul(s, P + Q) == lmul(s, P) + lmul(s, Q)


# -- construction ---------------------------------------------------------------

def test_polyvector_permutation_sign():
    a = FiberPolyVec.from_terms(2, 4, {(1, 0): 1})
    assert a == FiberPolyVec.from_terms(2, 4, {(0, 1): -1})
    assert FiberPolyVec.from_terms(2, 4, {(0, 0): 1}) == 0


def test_exact_rationals_and_fraction_inputs():
    a = FormSection.const(2, 4, Fraction(1, 3))
    assert a == FormSection.const(2, 4, mpq(1, 3))
    assert str(S("y1/3")) == "1/3*y1"


def test_parse_rejects_division_by_variable():
    with pytest.raises(ValidationError):
        S("y1/x1")


def test_text_is_deterministic():
    a = S("y2 + y1*dx1 - 3*x1*y1^2*dx1*dx2")
    assert str(a) == str(S("-3*x1*y1^2*dx1*dx2 + y2 + y1*dx1"))
