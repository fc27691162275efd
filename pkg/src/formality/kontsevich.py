"""Fiberwise formality morphism at arity <= 2.

U1 is the HKR map.  U2 on a pair of bivectors is a combination of the nine
two-vertex graphs: each bivector vertex sends its two ordered edges to one of

    type 0: (F, G)       both ground points,
    type 1: (F, other)   first edge to F, second to the other vertex,
    type 2: (G, other)   first edge to G, second to the other vertex.

For a bivector P = 1/2 P^ij theta_i theta_j the graph (a, b) evaluates to

    sum P^{i1 i2} Q^{j1 j2}, with every edge contributing a derivative
    d/dy^{index} on its target (F, G, or the other vertex's coefficient),

P of type a and Q of type b.  Graded symmetry (bivectors have degree 1) makes
S_ab = G_ab + G_ba the natural unknowns, six of them, listed in
``SHAPES`` order.  Their weights are fixed by requiring the arity-2 relation

    d U2(P, Q) = hkr [P, Q] - [hkr P, hkr Q]

on a generic polynomial probe family, choosing the solution of minimal
support (subsets tried by size, then in ``SHAPES`` order).

U2 vanishes whenever an argument is a vector field: the relation then holds
with U2 = 0 because hkr intertwines Lie derivatives exactly.  Functions and
trivectors (or higher) are outside the implemented capacity.
"""

import json
from functools import lru_cache
from itertools import combinations

import sympy
from gmpy2 import mpq

from formality import kernels as K
from formality.brackets import (
    PolyMap,
    _signed_by_form_parity,
    gerstenhaber,
    hkr,
    hochschild_d,
    schouten,
)
from formality.errors import CapacityError, ConsistencyError, StructuralError
from formality.graded import FiberPolyOp, FiberPolyVec, format_rational, zero_exp
from formality.linfinity import DglaHandle, LinfMorphism

SHAPES = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
SHAPE_NAMES = {
    (0, 0): "FG|FG",
    (0, 1): "FG|F*",
    (0, 2): "FG|G*",
    (1, 1): "F*|F*",
    (1, 2): "F*|G*",
    (2, 2): "G*|G*",
}


def _ordered_components(P):
    """{(i, j): coefficient term dict} with both index orders (antisymmetric)."""
    out = {}
    for idx, sp in P.data.items():
        if len(idx) != 2:
            continue
        i, j = idx
        out[(i, j)] = sp
        out[(j, i)] = K.scale(sp, -1)
    return out


def _unit(d, i):
    return tuple(1 if t == i else 0 for t in range(d))


def _addexp(a, b):
    return tuple(p + q for p, q in zip(a, b))


def graph_op(a_type, b_type, P, Q):
    """The graph operator G_ab(P, Q) for bivectors P (type a) and Q (type b).

    Coefficients are multiplied in the order P then Q, so dx factors of P stand
    to the left of those of Q.
    """
    d = P.d
    N = P.N
    z = zero_exp(d)
    Pc = _ordered_components(P)
    Qc = _ordered_components(Q)
    out = {}
    for (i1, i2), p in Pc.items():
        for (j1, j2), q in Qc.items():
            aF = aG = z
            dP = dQ = z
            # P's edges
            if a_type == 0:
                aF, aG = _addexp(aF, _unit(d, i1)), _addexp(aG, _unit(d, i2))
            elif a_type == 1:
                aF, dQ = _addexp(aF, _unit(d, i1)), _addexp(dQ, _unit(d, i2))
            else:
                aG, dQ = _addexp(aG, _unit(d, i1)), _addexp(dQ, _unit(d, i2))
            # Q's edges
            if b_type == 0:
                aF, aG = _addexp(aF, _unit(d, j1)), _addexp(aG, _unit(d, j2))
            elif b_type == 1:
                aF, dP = _addexp(aF, _unit(d, j1)), _addexp(dP, _unit(d, j2))
            else:
                aG, dP = _addexp(aG, _unit(d, j1)), _addexp(dP, _unit(d, j2))
            pp = K.dy(p, dP)
            if not pp:
                continue
            qq = K.dy(q, dQ)
            if not qq:
                continue
            K.add_into(out.setdefault((aF, aG), {}), K.mul(pp, qq, N))
    return FiberPolyOp(d, N, out, P.family)


def shape_op(shape, P, Q):
    a, b = shape
    r = graph_op(a, b, P, Q)
    if a == b:
        return r * 2
    return r + graph_op(b, a, P, Q)


# ---------------------------------------------------------------------------
# weight table


class WeightTable:
    """Rational weights of the symmetrized shapes S_ab (absent shapes weigh 0)."""

    def __init__(self, entries, order_cap=2, probes=0, equations=0):
        self.entries = {s: mpq(c) for s, c in entries.items() if c}
        for s in self.entries:
            if s not in SHAPES:
                raise StructuralError(f"unknown shape {s}")
        self.order_cap = order_cap
        self.probes = probes
        self.equations = equations

    def weight(self, shape):
        return self.entries.get(shape, mpq(0))

    def to_json(self):
        return {
            "order_cap": self.order_cap,
            "shapes": [SHAPE_NAMES[s] for s in SHAPES],
            "weights": {SHAPE_NAMES[s]: format_rational(self.weight(s)) for s in SHAPES},
            "support": [SHAPE_NAMES[s] for s in SHAPES if s in self.entries],
            "probe_pairs": self.probes,
            "equations": self.equations,
        }

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        names = {v: k for k, v in SHAPE_NAMES.items()}
        entries = {names[n]: mpq(c) for n, c in obj["weights"].items()}
        return cls(entries, obj.get("order_cap", 2), obj.get("probe_pairs", 0), obj.get("equations", 0))

    def __eq__(self, other):
        return isinstance(other, WeightTable) and self.entries == other.entries


def _probe_pairs():
    """Generic polynomial bivectors on R^3 (fixed, so the solve is reproducible)."""
    from formality.graded import FiberPolyVec as V

    d = 3
    P = V.from_terms(d, None, {(0, 1): "y3^2 + 2*y1 - y2*y3 + 1", (0, 2): "y1*y2 - 3*y3 + y2^2",
                               (1, 2): "y1^2 - y1*y3 + 2"})
    Q = V.from_terms(d, None, {(0, 1): "y2*y3 - y1^2 + y3", (0, 2): "2*y1*y3 + y2 - 1",
                               (1, 2): "y1*y2 + y3^2 - y2"})
    R = V.from_terms(d, None, {(0, 1): "y1*y3", (1, 2): "y2^2 + y1"})
    return [(P, P), (P, Q), (Q, Q), (Q, R), (R, R)]


def _equations(pairs):
    rows = {}
    cols = len(SHAPES)
    for pi, (P, Q) in enumerate(pairs):
        target = hkr(schouten(P, Q)) - gerstenhaber(hkr(P), hkr(Q))
        basis = [hochschild_d(shape_op(s, P, Q)) for s in SHAPES]
        keys = set()
        for e in basis + [target]:
            for slot, sp in e.data.items():
                for k in sp:
                    keys.add((slot, k))
        for key in keys:
            slot, k = key
            row = [b.data.get(slot, {}).get(k, 0) for b in basis]
            rhs = target.data.get(slot, {}).get(k, 0)
            rows[(pi, key)] = (row, rhs)
    ordered = [rows[k] for k in sorted(rows, key=repr)]
    A = [[sympy.Rational(int(c.numerator), int(c.denominator)) if c else 0 for c in (mpq(x) for x in r)]
         for r, _ in ordered]
    b = [sympy.Rational(int(mpq(v).numerator), int(mpq(v).denominator)) for _, v in ordered]
    return A, b, cols


def _solve_subset(A, b, subset):
    M = sympy.Matrix([[row[j] for j in subset] + [rhs] for row, rhs in zip(A, b)])
    R, piv = M.rref()
    n = len(subset)
    if n in piv:
        return None
    if len(piv) < n:
        return None
    sol = {}
    for r, c in enumerate(piv):
        sol[subset[c]] = R[r, n]
    return sol


@lru_cache(maxsize=None)
def solve_weights():
    """Derive the minimal-support WeightTable from the arity-2 relation."""
    pairs = _probe_pairs()
    A, b, cols = _equations(pairs)
    for size in range(0, cols + 1):
        for subset in combinations(range(cols), size):
            sol = _solve_subset(A, b, list(subset))
            if sol is not None:
                entries = {SHAPES[j]: mpq(int(v.p), int(v.q)) for j, v in sol.items() if v != 0}
                return WeightTable(entries, 2, len(pairs), len(A))
    raise ConsistencyError("the arity-2 weight system has no exact solution")


# ---------------------------------------------------------------------------
# structure maps


def u1(g):
    """First structure map: HKR, passing exterior forms through."""
    return hkr(g)


def _split_degree(g):
    """{k: component} of a polyvector."""
    out = {}
    for slot, sp in g.data.items():
        out.setdefault(len(slot) - 1, {})[slot] = sp
    return {k: FiberPolyVec(g.d, g.N, data, g.family, g.valid_to) for k, data in out.items()}


def u2(g1, g2, table=None):
    """Second structure map on polyvectors of degree 0 or 1 (vectors vanish)."""
    if g1.kind == "sec":
        g1 = g1.as_vec()
    if g2.kind == "sec":
        g2 = g2.as_vec()
    if g1.kind != "vec" or g2.kind != "vec":
        raise StructuralError("u2 expects polyvectors")
    g1._check(g2)
    table = table or solve_weights()
    c1, c2 = _split_degree(g1), _split_degree(g2)
    for k in list(c1) + list(c2):
        if k not in (0, 1):
            raise CapacityError(f"u2 is implemented for vectors and bivectors only (got degree {k})")
    out = FiberPolyOp(g1.d, g1.N, {}, g1.family)
    P, Q = c1.get(1), c2.get(1)
    if P is None or Q is None:
        return out
    # form passthrough: U2(w1 P, w2 Q) = (-1)^q1 w1 w2 U2(P, Q) for bivectors
    Ps = P.map_coeffs(lambda sp: _signed_by_form_parity(sp, 1))
    for shape in SHAPES:
        w = table.weight(shape)
        if w:
            out = out + shape_op(shape, Ps, Q) * w
    v = min(g1.valid_to - 2 + (g2.min_ydeg() if g2 else 0), g2.valid_to - 2 + (g1.min_ydeg() if g1 else 0))
    return out.with_valid_to(max(v, -1) if v != float("inf") else v)


def affine_vector_part(b):
    """The vector-field part of b of y-degree <= 1 (annihilated by U_n, n >= 2)."""
    if b.kind == "sec":
        b = b.as_vec()
    return b.select(lambda slot, key: len(slot) == 1 and sum(key[0]) <= 1)


def fiber_source(de_rham=False):
    from formality.brackets import bracket
    from formality.fedosov import d_x

    return DglaHandle("fiber T_poly", d_x if de_rham else None, bracket)


def fiber_target(de_rham=False):
    from formality.brackets import bracket
    from formality.fedosov import d_x

    if de_rham:
        return DglaHandle("fiber D_poly", lambda a: d_x(a) + hochschild_d(a), bracket)
    return DglaHandle("fiber D_poly", hochschild_d, bracket)


def assemble_fiber_morphism(arity_cap=2, table=None, de_rham=False):
    """The fiberwise morphism U^f with maps u1 (and u2).

    With ``de_rham`` the source and target carry the exterior derivative in x
    as well (U^f commutes with it since its maps do not depend on x).
    """
    if arity_cap not in (1, 2):
        if arity_cap > 2:
            raise CapacityError(f"arity cap {arity_cap} > 2: weights beyond arity 2 are not available")
        raise StructuralError("arity cap must be 1 or 2")
    maps = {1: PolyMap(u1, 1, 0, "U1")}
    if arity_cap >= 2:
        tbl = table or solve_weights()
        maps[2] = PolyMap(lambda a, b: u2(a, b, tbl), 2, -1, "U2")
    return LinfMorphism(fiber_source(de_rham), fiber_target(de_rham), maps, arity_cap, 2, "U^f",
                        inert=affine_vector_part)


__all__ = [
    "SHAPES",
    "SHAPE_NAMES",
    "WeightTable",
    "graph_op",
    "shape_op",
    "solve_weights",
    "u1",
    "u2",
    "assemble_fiber_morphism",
    "affine_vector_part",
    "fiber_source",
    "fiber_target",
]
