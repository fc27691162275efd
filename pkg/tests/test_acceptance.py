"""Acceptance criteria 1-11: exact identities at desk scale with runtime bounds.

Each test records one PASS/FAIL line (printed in the terminal summary).
"""

import itertools
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import pytest
import sympy
from gmpy2 import mpq

from conftest import ACCEPTANCE
from formality import (FiberPolyOp, FiberPolyVec, FormSection, PreconditionError, apply_op,
                       multiplication, wedge_mul)
from formality.brackets import PolyMap, d_hom, gerstenhaber, hkr, hochschild_d, schouten, total_degree
from formality.equivariance import AffineAction, GroupElement, act, check_equivariance
from formality.fedosov import (ConnectionData, delta, delta_inv, fedosov_D, lift_base, mu_project,
                               sigma, solve_A, solve_exact, tau_function)
from formality.graded import CoeffPoly, base_function, to_base
from formality.kontsevich import assemble_fiber_morphism, u2
from formality.linfinity import MaurerCartanElement, linf_defect, rhs2, shift, twist
from formality.pipeline import build_star_product, load_spec, probe_functions
from randgen import make_rng, monomials, rand_op, rand_section, rand_spoly, rand_vec

SPECS = Path(__file__).resolve().parent.parent / "specs"
CURVED = ConnectionData(2, {(1, 0, 0): "x2"})
FLAT = ConnectionData.flat(2)


@contextmanager
def criterion(n, bound, title):
    t0 = time.perf_counter()
    ok = False
    try:
        yield
        ok = True
    finally:
        elapsed = time.perf_counter() - t0
        ok = ok and elapsed < bound
        ACCEPTANCE[n] = (ok, elapsed, bound, title)
    assert elapsed < bound, f"criterion {n} took {elapsed:.1f}s (bound {bound}s)"


def sgn(n):
    return -1 if n % 2 else 1


def zero_through_valid(a):
    return (a.truncated(a.valid_to) if a.valid_to != float("inf") else a) == 0


# ---------------------------------------------------------------------------

def test_criterion_01_hodge_identity():
    with criterion(1, 10, "Hodge identity on 240 random elements, d in {2,3}, y-degree <= 6"):
        rng = make_rng(101)
        count = 0
        for d in (2, 3):
            for n in range(120):
                q = n % (d + 1)
                kind = n % 3
                if kind == 0:
                    a = rand_section(rng, d, 7, ydeg=6, q=q, nterms=4)
                elif kind == 1:
                    a = rand_vec(rng, d, 7, rng.randint(-1, d - 1), ydeg=6, q=q, nterms=4)
                else:
                    a = rand_op(rng, d, 7, rng.randint(-1, 2), ydeg=6, q=q, nterms=4)
                assert a == sigma(a) + delta(delta_inv(a)) + delta_inv(delta(a))
                count += 1
        assert count >= 200


def test_criterion_02_bracket_axioms():
    with criterion(2, 30, "graded antisymmetry + Jacobi (100 triples each), [m,m]=0, d^2=0"):
        rng = make_rng(202)
        for br, kind in ((gerstenhaber, "op"), (schouten, "vec")):
            for n in range(100):
                d = 2 + n % 2
                if kind == "op":
                    gen = lambda: rand_op(rng, d, None, rng.randint(-1, 1), ydeg=2,
                                          q=rng.randint(0, 1), nterms=2, order=1)
                else:
                    gen = lambda: rand_vec(rng, d, None, rng.randint(-1, d - 1), ydeg=2,
                                           q=rng.randint(0, 1), nterms=2)
                a, b, c = gen(), gen(), gen()
                ka, kb = total_degree(a), total_degree(b)
                assert br(a, b) == br(b, a) * (-sgn(ka * kb))
                assert (br(a, br(b, c)) - br(br(a, b), c) - br(b, br(a, c)) * sgn(ka * kb)) == 0
        for d in (2, 3):
            m = multiplication(d, None)
            assert gerstenhaber(m, m) == 0
        for _ in range(50):
            P = rand_op(rng, 2, None, rng.randint(-1, 2), ydeg=2, q=rng.randint(0, 1), nterms=3, order=2)
            assert hochschild_d(hochschild_d(P)) == 0


def _spanning_probes(d, N):
    """Monomials y^a x^b dx^I (|a| <= 3, |b| <= 1) as sections and as vector coefficients."""
    out = []
    z = (0,) * d
    for a in monomials(d, 3):
        for b in monomials(d, 1):
            for mask in range(1 << d):
                out.append(FormSection(d, N, {(): {(a, mask, b, 0): mpq(1)}}))
                out.append(FiberPolyVec(d, N, {(0,): {(a, mask, b, 0): mpq(1)}}))
    del z
    return out


def test_criterion_03_fedosov_flatness():
    with criterion(3, 60, "flatness residual through y-degree 5 (N=6) and D^2 = 0 on probes"):
        for conn in (FLAT, CURVED):
            st = solve_A(conn, 6)
            res = st.flatness_residual()
            for p in range(6):
                assert res.ydeg_part(p) == 0, (conn, p)
            for a in _spanning_probes(2, 6):
                assert zero_through_valid(fedosov_D(fedosov_D(a, st), st))


def _taylor_oracle(text, d, N):
    """f(x + y) expanded, as a fiberwise section (sympy)."""
    xs = sympy.symbols(f"x1:{d + 1}")
    ys = sympy.symbols(f"y1:{d + 1}")
    f = sympy.sympify(text.replace("^", "**"), locals=dict(zip([str(x) for x in xs], xs)))
    g = sympy.expand(f.subs({x: x + y for x, y in zip(xs, ys)}, simultaneous=True))
    return FormSection.parse(d, N, str(g).replace("**", "^"))


def test_criterion_04_resolution():
    with criterion(4, 60, "sigma tau = id, D tau = 0 (x-degree <= 4), Taylor oracle, 50 solve_exact probes"):
        for conn in (FLAT, CURVED):
            st = solve_A(conn, 6)
            for e in monomials(2, 4):
                f = CoeffPoly(2, {(e, 0): 1})
                t = tau_function(st, f)
                assert sigma(t) == FormSection.from_coeff(2, 6, f)
                assert zero_through_valid(fedosov_D(t, st))
                if conn is FLAT:
                    assert t == _taylor_oracle(str(f), 2, 6)
        st = solve_A(CURVED, 6)
        rng = make_rng(404)
        done = 0
        while done < 50:
            sp = {k: v for k, v in rand_spoly(rng, 2, 4, 3, q=rng.randint(0, 1)).items() if any(k[0])}
            c = FormSection(2, 6, {(): sp})
            a = fedosov_D(c, st)
            if a == 0:
                continue
            b = solve_exact(a, st)
            Db = fedosov_D(b, st)
            v = min(Db.valid_to, a.valid_to)
            assert (Db - a).truncated(v) == 0
            assert sigma(b) == 0 and delta_inv(b) == 0
            done += 1


def test_criterion_05_morphism_property():
    with criterion(5, 60, "mu sigma multiplicative on composed D-closed operators; mu(m) = m0"):
        for conn in (FLAT, CURVED):
            st = solve_A(conn, 6)
            assert mu_project(multiplication(2, 6), st) == multiplication(2, None, "x")
            ops = [FiberPolyOp.from_terms(2, None, t, "x") for t in (
                {((1, 0),): "x2", ((0, 1),): 1},
                {((0, 2),): 1, ((1, 0),): "x1"},
                {((1, 1),): "x1 + 2"},
            )]
            lifts = [lift_base(Q, st) for Q in ops]
            for (Q1, P1), (Q2, P2) in itertools.product(zip(ops, lifts), repeat=2):
                for e in monomials(2, 3):
                    f = CoeffPoly(2, {(e, 0): 1})
                    lhs = to_base(sigma(apply_op(P1, [apply_op(P2, [tau_function(st, f)])])))
                    rhs = apply_op(Q1, [apply_op(Q2, [base_function(2, f)])])
                    assert lhs == rhs


def _pair(rng, d, N=None):
    k1, k2 = rng.choice([(1, 1), (0, 1), (1, 0), (0, 0)])
    return (rand_vec(rng, d, N, k1, ydeg=2, q=rng.randint(0, 1), nterms=2),
            rand_vec(rng, d, N, k2, ydeg=2, q=rng.randint(0, 1), nterms=2))


def _random_V1(rng, d):
    from formality import kernels as K

    c = rand_spoly(rng, d, 1, 2, q=0)

    def v1(g):
        if g.kind == "sec":
            g = g.as_vec()
        out = {}
        for slot, sp in g.data.items():
            if 1 in slot:
                pos = slot.index(1)
                K.add_into(out.setdefault(slot[:pos] + slot[pos + 1:], {}), K.mul(c, sp, None),
                           -1 if pos % 2 else 1)
        return hkr(FiberPolyVec(d, None, out))

    return PolyMap(v1, 1, -1, "V1")


def test_criterion_06_linfinity():
    with criterion(6, 120, "arity-1/2 defects zero, RHS d_hom-closed, shift preserves defects"):
        rng = make_rng(606)
        for de_rham in (False, True):
            F = assemble_fiber_morphism(2, de_rham=de_rham)
            for _ in range(15):
                d = rng.choice((2, 3))
                a, b = _pair(rng, d)
                assert linf_defect(F, 1, [a]) == 0
                assert linf_defect(F, 2, [a, b]) == 0
        F = assemble_fiber_morphism(2)
        R = PolyMap(lambda a, b: rhs2(F, a, b), 2, 0)
        dR = d_hom(R, None, hochschild_d)
        for _ in range(15):
            assert dR(*_pair(rng, 2)) == 0
        for _ in range(5):
            G = shift(F, 1, _random_V1(rng, 2))
            for _ in range(3):
                a, b = _pair(rng, 2)
                assert linf_defect(G, 1, [a]) == 0
                assert linf_defect(G, 2, [a, b]) == 0


def test_criterion_07_twisting():
    with criterion(7, 60, "twist by 0 = id, B^(d+1) = 0, properties 3-4 on 100 probes each"):
        rng = make_rng(707)
        F = assemble_fiber_morphism(2)
        zero = FiberPolyVec(2, None, {})
        T = twist(F, MaurerCartanElement(zero), MaurerCartanElement(zero))
        for _ in range(10):
            a, b = _pair(rng, 2)
            assert T(a) == F(a) and T(a, b) == F(a, b)
        for conn in (FLAT, CURVED):
            st = solve_A(conn, 5)
            forms = [FormSection(2, 5, {(): sp}) for sp in st.B().data.values()]
            for combo in itertools.product(forms, repeat=3):
                assert wedge_mul(wedge_mul(combo[0], combo[1]), combo[2]) == 0
            assert MaurerCartanElement(st.B()).nilpotency_bound == 3
        for n in range(100):
            d = 2 + n % 2
            v1, v2 = (rand_vec(rng, d, None, 0, ydeg=3, q=rng.randint(0, 1)) for _ in range(2))
            assert u2(v1, v2) == 0
        for n in range(100):
            d = 2 + n % 2
            lin = rand_vec(rng, d, None, 0, ydeg=1, q=rng.randint(0, 1))
            g = rand_vec(rng, d, None, 1, ydeg=3, q=rng.randint(0, 1))
            assert u2(lin, g) == 0 and u2(g, lin) == 0


def _moyal_oracle(f_text, g_text, order):
    """Closed-form Moyal product for alpha^12 = 1 via sympy."""
    x1, x2, h = sympy.symbols("x1 x2 hbar")
    f = sympy.sympify(f_text.replace("^", "**"))
    g = sympy.sympify(g_text.replace("^", "**"))
    total = 0
    for n in range(order + 1):
        term = 0
        for k in range(n + 1):
            # (d1 (x) d2 - d2 (x) d1)^n expanded binomially
            df = sympy.diff(f, x1, k, x2, n - k) if n else f
            dg = sympy.diff(g, x2, k, x1, n - k) if n else g
            term += sympy.binomial(n, k) * (-1) ** (n - k) * df * dg
        total += h ** n / (sympy.factorial(n) * 2 ** n) * term
    return base_function(2, str(sympy.expand(total)).replace("**", "^"))


def _mono_text(e):
    return "*".join(f"x{i + 1}^{k}" for i, k in enumerate(e) if k) or "1"


def test_criterion_08_moyal():
    with criterion(8, 120, "flat R^2 star product = Moyal through hbar^2; associative mod hbar^3"):
        spec = load_spec(SPECS / "flat_moyal.yaml")
        sp = build_star_product(spec, verify=False)
        mons = monomials(2, 4)
        for a in mons:
            for b in mons:
                fa, fb = _mono_text(a), _mono_text(b)
                assert sp.star(base_function(2, fa), base_function(2, fb)) == _moyal_oracle(fa, fb, 2)
        probes = probe_functions(2, 4)
        for f in probes:
            for g in probes:
                for h in probes:
                    assert all(x == 0 for x in sp.associativity_defect(f, g, h))


def test_criterion_09_weight_derivation():
    with criterion(9, 60, "order-2 weight system solvable; minimal support byte-stable across runs"):
        code = "from formality.kontsevich import solve_weights; print(solve_weights().dumps())"
        outs = [subprocess.run([sys.executable, "-c", code], capture_output=True, check=True).stdout
                for _ in range(2)]
        assert outs[0] == outs[1]
        assert b'"FG|FG": "1/8"' in outs[0]


def test_criterion_10_equivariance():
    with criterion(10, 60, "{+-id} and C4: g.A = A, g tau = tau g, g(f*h) = g(f)*g(h); negative test"):
        for name in ("sign_z2.yaml", "rotation4.yaml"):
            spec = load_spec(SPECS / name)
            sp = build_star_product(spec, verify=False)
            probes = [CoeffPoly(2, {(e, 0): 1}) for e in monomials(2, 3)]
            pairs = [(f, g) for f in probes for g in probes]
            res = check_equivariance(spec.group, sp.state, probes, star=sp, star_pairs=pairs)
            assert set(res) == {"g.A = A", "g o tau = tau o g", "g(f*h) = g(f)*g(h)"}
            assert all(ok for ok, _ in res.values()), res
        bad = load_spec(SPECS / "noninvariant.yaml")
        with pytest.raises(PreconditionError, match="not invariant under"):
            check_equivariance(bad.group, solve_A(bad.conn, bad.N), [])


def test_criterion_11_determinism():
    with criterion(11, 120, "every CLI subcommand twice -> byte-identical reports"):
        runs = [
            ["check", "--spec", str(SPECS / "curved_r2.yaml")],
            ["connection", "--spec", str(SPECS / "curved_r2.yaml")],
            ["star", "--spec", str(SPECS / "linear_poisson.yaml")],
            ["equivariance", "--spec", str(SPECS / "rotation4.yaml")],
        ]
        for args in runs:
            outs = []
            for _ in range(2):
                proc = subprocess.run([sys.executable, "-m", "formality.cli", *args],
                                      capture_output=True)
                assert proc.returncode == 0, proc.stderr
                outs.append(proc.stdout)
            assert outs[0] == outs[1] and outs[0]
