"""Gerstenhaber and Schouten brackets, the Hochschild differential, HKR and d_Hom.

All brackets act on form-valued objects through the tensor rule

    [w1 P1, w2 P2] = (-1)^(k1 q2) w1 w2 [P1, P2],

where k is the bracket degree of the fiber part and q the exterior degree.
The total degree used for graded antisymmetry is therefore k + q.

Schouten convention.  With theta_i standing for d/dy^i and left
theta-derivatives, the standard bracket is

    std[P, Q] = (-1)^kP (d_theta_i P)(d_{y^i} Q) - (-1)^((kP+1) kQ) (d_theta_i Q)(d_{y^i} P).

The bracket used here is its conjugate by P -> (-1)^(k(k+1)/2) P,

    [P, Q] = (-1)^(f(kP) + f(kQ) + f(kP+kQ)) std[P, Q],   f(k) = k(k+1)/2,

which is again a graded Lie bracket.  It gives [v, f] = v(f), the Lie
bracket on vector fields, [pi, f] = pi(df, .), and agrees with the
Gerstenhaber bracket through hkr on (polyvector, function) pairs.
"""

from functools import lru_cache
from itertools import product
from math import factorial

from gmpy2 import mpq

from formality import kernels as K
from formality.errors import StructuralError
from formality.graded import (
    INF,
    FiberPolyOp,
    FiberPolyVec,
    FormSection,
    hkr_slots,
    multiplication,
    truncation_cap,
    unit_exp,
)


def _signed_by_form_parity(sp, k):
    """Multiply the odd-exterior-degree terms by (-1)^k."""
    if k % 2 == 0:
        return sp
    return {key: (-c if bin(key[1]).count("1") & 1 else c) for key, c in sp.items()}


def _bracket_valid(a, b, ord_a, ord_b, N):
    if not a or not b:
        return INF
    va = b.valid_to + a.min_ydeg() - ord_a
    vb = a.valid_to + b.min_ydeg() - ord_b
    return min(va, vb, truncation_cap(N, a.max_ydeg() + b.max_ydeg()))


def _as_vec(a):
    if a.kind == "sec":
        return a.as_vec()
    if a.kind != "vec":
        raise StructuralError(f"Schouten bracket needs polyvectors, got {a.kind}")
    return a


def _as_op(a):
    if a.kind == "sec":
        return a.as_op()
    if a.kind != "op":
        raise StructuralError(f"Gerstenhaber bracket needs operators, got {a.kind}")
    return a


def _mask(idx):
    m = 0
    for i in idx:
        m |= 1 << i
    return m


def _theta_product(rest, other):
    """Sign and sorted slot of theta_rest ^ theta_other (sign 0 on overlap)."""
    s = K.wedge_sign(_mask(rest), _mask(other))
    if not s:
        return 0, None
    return s, tuple(sorted(rest + other))


# ---------------------------------------------------------------------------
# Schouten-Nijenhuis


def _f(k):
    return (k * (k + 1) // 2) & 1


def schouten(a, b):
    """Schouten-Nijenhuis bracket of form-valued fiberwise polyvector fields."""
    a._check(b, same_kind=False)
    a, b = _as_vec(a), _as_vec(b)
    N = a.N
    d = a.d
    out = {}
    dy_cache_a = {}
    dy_cache_b = {}
    for I, s1 in a.data.items():
        k1 = len(I) - 1
        for J, s2 in b.data.items():
            k2 = len(J) - 1
            s2t = _signed_by_form_parity(s2, k1)
            eps = -1 if (_f(k1) + _f(k2) + _f(k1 + k2)) & 1 else 1
            first = eps * (-1 if k1 & 1 else 1)
            exch = -eps * (-1 if ((k1 + 1) * k2) & 1 else 1)
            for pos, i in enumerate(I):
                rest = I[:pos] + I[pos + 1:]
                ws, slot = _theta_product(rest, J)
                if not ws:
                    continue
                key = (J, i)
                db = dy_cache_b.get(key)
                if db is None:
                    db = dy_cache_b[key] = K.dy(s2, unit_exp(d, i))
                db = _signed_by_form_parity(db, k1)
                sign = first * ws * (-1 if pos & 1 else 1)
                K.add_into(out.setdefault(slot, {}), K.mul(s1, db, N), sign)
            for pos, j in enumerate(J):
                rest = J[:pos] + J[pos + 1:]
                ws, slot = _theta_product(rest, I)
                if not ws:
                    continue
                key = (I, j)
                da = dy_cache_a.get(key)
                if da is None:
                    da = dy_cache_a[key] = K.dy(s1, unit_exp(d, j))
                sign = exch * ws * (-1 if pos & 1 else 1)
                K.add_into(out.setdefault(slot, {}), K.mul(da, s2t, N), sign)
    ord_a = 1 if any(a.data) else 0
    ord_b = 1 if any(b.data) else 0
    return FiberPolyVec(d, N, out, a.family, _bracket_valid(a, b, ord_a, ord_b, N))


# ---------------------------------------------------------------------------
# Gerstenhaber


@lru_cache(maxsize=None)
def _splits(alpha, nparts):
    """All ways to write alpha = g_0 + .. + g_{nparts-1}, with multinomial weights."""
    per_coord = []
    for a in alpha:
        comps = []
        for c in _compositions(a, nparts):
            w = factorial(a)
            for e in c:
                w //= factorial(e)
            comps.append((c, w))
        per_coord.append(comps)
    out = []
    for choice in product(*per_coord):
        w = 1
        for _, cw in choice:
            w *= cw
        parts = tuple(tuple(choice[c][0][p] for c in range(len(alpha))) for p in range(nparts))
        out.append((parts, w))
    return tuple(out)


def _compositions(n, parts):
    if parts == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, parts - 1):
            yield (first,) + rest


def _insert_into(out, slots1, s1, slots2, s2, i, sign, N):
    """Accumulate sign * (P1 o_i P2) for single-slot-key pieces."""
    alpha = slots1[i]
    nb = len(slots2)
    for parts, w in _splits(alpha, nb + 1):
        gc = parts[0]
        c2 = K.dy(s2, gc)
        if not c2:
            continue
        mid = tuple(tuple(b + g for b, g in zip(beta, parts[j + 1])) for j, beta in enumerate(slots2))
        slot = slots1[:i] + mid + slots1[i + 1:]
        K.add_into(out.setdefault(slot, {}), K.mul(s1, c2, N), sign * w)


def gerstenhaber(a, b):
    """Gerstenhaber bracket of form-valued fiberwise polydifferential operators."""
    a._check(b, same_kind=False)
    a, b = _as_op(a), _as_op(b)
    N = a.N
    out = {}
    for S1, s1 in a.data.items():
        k1 = len(S1) - 1
        for S2, s2 in b.data.items():
            k2 = len(S2) - 1
            s2t = _signed_by_form_parity(s2, k1)
            for i in range(len(S1)):
                _insert_into(out, S1, s1, S2, s2t, i, -1 if (i * k2) % 2 else 1, N)
            exch = 1 if (k1 * k2) % 2 else -1
            for i in range(len(S2)):
                _insert_into_swapped(out, S2, s2t, S1, s1, i, exch * (-1 if (i * k1) % 2 else 1), N)
    out = {s: sp for s, sp in out.items() if sp}
    return FiberPolyOp(a.d, N, out, a.family,
                       _bracket_valid(a, b, a.max_order(), b.max_order(), N))


def _insert_into_swapped(out, slots2, s2, slots1, s1, i, sign, N):
    """sign * (P2 o_i P1) with the form factors kept in the order w1 w2."""
    alpha = slots2[i]
    nb = len(slots1)
    for parts, w in _splits(alpha, nb + 1):
        c1 = K.dy(s1, parts[0])
        if not c1:
            continue
        mid = tuple(tuple(b + g for b, g in zip(beta, parts[j + 1])) for j, beta in enumerate(slots1))
        slot = slots2[:i] + mid + slots2[i + 1:]
        K.add_into(out.setdefault(slot, {}), K.mul(c1, s2, N), sign * w)


def hochschild_d(a):
    """Hochschild differential [m, a]."""
    return gerstenhaber(multiplication(a.d, a.N, a.family), _as_op(a))


# ---------------------------------------------------------------------------
# HKR


def hkr(a):
    """Antisymmetrization map from polyvectors to polydifferential operators.

    A (k+1)-vector goes to 1/(k+1)! times the signed sum over slot assignments;
    functions and vector fields are mapped identically.
    """
    if a.kind == "sec":
        return a.as_op()
    if a.kind != "vec":
        raise StructuralError("hkr expects a polyvector")
    out = {}
    for I, sp in a.data.items():
        if not I:
            K.add_into(out.setdefault((), {}), sp)
            continue
        w = mpq(1, factorial(len(I)))
        for slots, sign in hkr_slots(I, a.d):
            K.add_into(out.setdefault(slots, {}), sp, w * sign)
    return FiberPolyOp(a.d, a.N, out, a.family, a.valid_to)


# ---------------------------------------------------------------------------
# generic bracket and DGLA helpers


def bracket(a, b):
    """Bracket of two elements of the same DGLA (sections coerce to either kind)."""
    if a.kind == "op" or b.kind == "op":
        if a.kind == "vec":
            a = hkr(a)
        if b.kind == "vec":
            b = hkr(b)
        return gerstenhaber(a, b)
    r = schouten(a, b)
    if a.kind == "sec" and b.kind == "sec":
        return r.function_part()
    return r


def ad_vector_form(X, a):
    """[X, a] for X a form-valued vector field, returned in the kind of a."""
    if a.kind == "sec":
        return schouten(X, a.as_vec()).function_part()
    if a.kind == "vec":
        return schouten(X, a)
    return gerstenhaber(hkr(X), a)


def total_degree(a):
    """Homogeneous total degree k + q, or raise if not homogeneous."""
    degs = set()
    for slot, sp in a.data.items():
        k = a.slot_degree(slot)
        for key in sp:
            degs.add(k + bin(key[1]).count("1"))
    if len(degs) > 1:
        raise StructuralError(f"element is not homogeneous in total degree: {sorted(degs)}")
    return degs.pop() if degs else 0


class PolyMap:
    """Evaluable graded polylinear map of fixed arity and degree."""

    __slots__ = ("fn", "arity", "degree", "name")

    def __init__(self, fn, arity, degree, name=""):
        self.fn = fn
        self.arity = arity
        self.degree = degree
        self.name = name

    def __call__(self, *args):
        if len(args) != self.arity:
            raise StructuralError(f"{self.name or 'map'} takes {self.arity} arguments, got {len(args)}")
        return self.fn(*args)


def d_hom(psi, d_source, d_target, degree_of=total_degree):
    """The differential on polylinear maps:

        (d psi)(g1..gn) = d2 psi(g1..gn)
                          - sum_i (-1)^(k_1 + .. + k_{i-1} + k) psi(g1, .., d1 g_i, .., gn)

    with k the degree of psi and k_j the degrees of the arguments.
    ``d_source``/``d_target`` may be None for a zero differential.
    """
    k = psi.degree

    def fn(*args):
        val = psi(*args)
        out = d_target(val) if d_target is not None else val.zero()
        if d_source is not None:
            acc = k
            for i, g in enumerate(args):
                dg = d_source(g)
                if dg:
                    term = psi(*args[:i], dg, *args[i + 1:])
                    out = out - term if acc % 2 == 0 else out + term
                acc += degree_of(g)
        return out

    return PolyMap(fn, psi.arity, k + 1, f"d_hom({psi.name})")


__all__ = [
    "schouten",
    "gerstenhaber",
    "hochschild_d",
    "hkr",
    "bracket",
    "ad_vector_form",
    "total_degree",
    "PolyMap",
    "d_hom",
]
