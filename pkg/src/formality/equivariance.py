"""Finite affine group actions on graded objects and connections.

An element g = (L, t) acts on R^d by x -> L x + t.  On fiberwise objects

    (g.a)(x, y, dx) = a(g^-1 x, L^-1 y, L^-1 dx),   d/dy^k -> sum_j L_jk d/dy^j,

so g is the pushforward of the induced bundle map.  Base-level objects
(family "x") transform by (g.f)(x) = f(g^-1 x) with d/dx^k pushed forward the
same way.  Christoffel symbols of an affine map transform tensorially:

    Gamma'^k_ij(x) = L^k_a (L^-1)^b_i (L^-1)^c_j Gamma^a_bc(g^-1 x).
"""

from itertools import product as iproduct

from gmpy2 import mpq

from formality import kernels as K
from formality.errors import PreconditionError, ValidationError
from formality.fedosov import ConnectionData
from formality.graded import CoeffPoly, Graded, zero_exp

MAX_GROUP_ORDER = 512


def _mat_mul(A, B):
    n = len(A)
    return tuple(tuple(sum(A[i][k] * B[k][j] for k in range(n)) for j in range(n)) for i in range(n))


def _mat_vec(A, v):
    return tuple(sum(A[i][k] * v[k] for k in range(len(v))) for i in range(len(A)))


def _mat_inv(A):
    n = len(A)
    M = [[mpq(A[i][j]) for j in range(n)] + [mpq(1 if i == j else 0) for j in range(n)] for i in range(n)]
    for c in range(n):
        p = next((r for r in range(c, n) if M[r][c] != 0), None)
        if p is None:
            raise ValidationError("group element has a singular matrix")
        M[c], M[p] = M[p], M[c]
        piv = M[c][c]
        M[c] = [v / piv for v in M[c]]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c]
                M[r] = [a - f * b for a, b in zip(M[r], M[c])]
    return tuple(tuple(M[i][n + j] for j in range(n)) for i in range(n))


class GroupElement:
    """x -> L x + t with exact rational entries."""

    __slots__ = ("L", "t", "Linv", "_cache")

    def __init__(self, L, t=None):
        d = len(L)
        self.L = tuple(tuple(mpq(v) for v in row) for row in L)
        if any(len(row) != d for row in self.L):
            raise ValidationError("group matrix must be square")
        self.t = tuple(mpq(v) for v in (t if t is not None else [0] * d))
        if len(self.t) != d:
            raise ValidationError("translation has the wrong length")
        self.Linv = _mat_inv(self.L)
        self._cache = {}

    @property
    def d(self):
        return len(self.L)

    def __mul__(self, other):
        """(g h)(x) = g(h(x))."""
        return GroupElement(_mat_mul(self.L, other.L),
                            tuple(a + b for a, b in zip(_mat_vec(self.L, other.t), self.t)))

    def inverse(self):
        return GroupElement(self.Linv, tuple(-v for v in _mat_vec(self.Linv, self.t)))

    def key(self):
        return (self.L, self.t)

    def __eq__(self, other):
        return isinstance(other, GroupElement) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def is_identity(self):
        d = self.d
        return all(self.L[i][j] == (1 if i == j else 0) for i in range(d) for j in range(d)) and not any(self.t)

    def __repr__(self):
        rows = ";".join(",".join(str(v) for v in row) for row in self.L)
        return f"g[{rows} | {','.join(str(v) for v in self.t)}]"


class AffineAction:
    """A finite group of affine maps, validated for identity, closure and inverses."""

    def __init__(self, elements):
        elements = list(dict.fromkeys(elements))
        if not elements:
            raise ValidationError("group has no elements")
        d = elements[0].d
        if any(g.d != d for g in elements):
            raise ValidationError("group elements have different dimensions")
        present = set(elements)
        if not any(g.is_identity() for g in elements):
            raise ValidationError("group does not contain the identity")
        for g in elements:
            if g.inverse() not in present:
                raise ValidationError(f"group is not closed under inverses: {g}")
            for h in elements:
                if g * h not in present:
                    raise ValidationError(f"group is not closed under composition: {g} * {h}")
        self.d = d
        self.elements = sorted(elements, key=lambda g: (not g.is_identity(), repr(g)))

    @classmethod
    def generated_by(cls, gens):
        gens = list(gens)
        if not gens:
            raise ValidationError("no group generators given")
        d = gens[0].d
        ident = GroupElement([[1 if i == j else 0 for j in range(d)] for i in range(d)])
        found = {ident}
        frontier = [ident]
        while frontier:
            nxt = []
            for g in frontier:
                for s in gens:
                    h = s * g
                    if h not in found:
                        found.add(h)
                        nxt.append(h)
                        if len(found) > MAX_GROUP_ORDER:
                            raise ValidationError(
                                f"generated group exceeds {MAX_GROUP_ORDER} elements (not finite?)")
            frontier = nxt
        return cls(found)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)


# ---------------------------------------------------------------------------
# action on term dicts


def _images(g, d, family):
    """Term-dict images of the generators y^i, x^i, dx^i under substitution by g^-1."""
    key = ("img", family)
    hit = g._cache.get(key)
    if hit is not None:
        return hit
    z = zero_exp(d)
    Li = g.Linv
    ys, xs, dxs = [], [], []
    for i in range(d):
        yi, xi, di = {}, {}, {}
        for j in range(d):
            c = Li[i][j]
            if c:
                e = tuple(1 if t == j else 0 for t in range(d))
                yi[(e, 0, z, 0)] = c
                xi[(z, 0, e, 0)] = c
                di[(z, 1 << j, z, 0)] = c
        # translation part of g^-1 x = L^-1 (x - t)
        shift = -sum(Li[i][j] * g.t[j] for j in range(d))
        if family == "x":
            if shift:
                yi[(z, 0, z, 0)] = shift
        elif shift:
            xi[(z, 0, z, 0)] = shift
        ys.append(yi)
        xs.append(xi)
        dxs.append(di)
    out = (ys, xs, dxs)
    g._cache[key] = out
    return out


def _power(cache, base_list, i, e, N):
    key = (i, e)
    hit = cache.get(key)
    if hit is None:
        d = len(base_list)
        if e == 0:
            z = zero_exp(d)
            hit = {(z, 0, z, 0): mpq(1)}
        else:
            hit = K.mul(_power(cache, base_list, i, e - 1, N), base_list[i], N)
        cache[key] = hit
    return hit


def _act_spoly(g, sp, d, N, family):
    ys, xs, dxs = _images(g, d, family)
    ycache, xcache = {}, {}
    out = {}
    for (y, m, x, h), c in sp.items():
        z = zero_exp(d)
        t = {(z, 0, z, h): c}
        for i, e in enumerate(y):
            if e:
                t = K.mul(t, _power(ycache, ys, i, e, None), N)
        for i, e in enumerate(x):
            if e:
                t = K.mul(t, _power(xcache, xs, i, e, None), N)
        i = 0
        while m >> i:
            if (m >> i) & 1:
                t = K.mul(t, dxs[i], N)
            i += 1
        K.add_into(out, t)
    return out


def _vec_slot_image(g, slot):
    """theta_{i0} ^ .. ^ theta_{ik} pushed forward: {sorted slot: coefficient}."""
    d = g.d
    res = {(): mpq(1)}
    for k in slot:
        nxt = {}
        for cur, c in res.items():
            for j in range(d):
                a = g.L[j][k]
                if not a or j in cur:
                    continue
                # theta_cur ^ theta_j: move theta_j to its sorted position
                above = sum(1 for t in cur if t > j)
                s = -1 if above & 1 else 1
                new = tuple(sorted(cur + (j,)))
                v = nxt.get(new, 0) + s * c * a
                if v:
                    nxt[new] = v
                else:
                    nxt.pop(new, None)
        res = nxt
    return res


def _op_multi_image(g, alpha):
    """prod_k (sum_j L_jk d_j)^alpha_k as {exponent: coefficient}."""
    d = g.d
    z = zero_exp(d)
    res = {z: mpq(1)}
    for k, e in enumerate(alpha):
        for _ in range(e):
            nxt = {}
            for cur, c in res.items():
                for j in range(d):
                    a = g.L[j][k]
                    if a:
                        new = tuple(v + (1 if t == j else 0) for t, v in enumerate(cur))
                        nxt[new] = nxt.get(new, 0) + c * a
            res = {k2: v for k2, v in nxt.items() if v}
    return res


def _op_slot_image(g, slots):
    parts = [_op_multi_image(g, a) for a in slots]
    out = {}
    for combo in iproduct(*[list(p.items()) for p in parts]):
        c = mpq(1)
        for _, v in combo:
            c *= v
        key = tuple(k for k, _ in combo)
        out[key] = out.get(key, 0) + c
    return {k: v for k, v in out.items() if v}


def act(g, a):
    """Action of a group element on a graded element or a connection."""
    if isinstance(a, ConnectionData):
        return _act_connection(g, a)
    if not isinstance(a, Graded):
        raise PreconditionError(f"cannot act on {type(a).__name__}")
    if g.d != a.d:
        raise PreconditionError("group element and element have different dimensions")
    data = {}
    for slot, sp in a.data.items():
        img = _act_spoly(g, sp, a.d, a.N, a.family)
        if not img:
            continue
        if a.kind == "sec" or not slot:
            simg = {slot: mpq(1)}
        elif a.kind == "vec":
            simg = _vec_slot_image(g, slot)
        else:
            simg = _op_slot_image(g, slot)
        for s2, c in simg.items():
            K.add_into(data.setdefault(s2, {}), img, c)
    return a._new(data, a.valid_to)


def _act_connection(g, conn):
    d = conn.d
    L, Li = g.L, g.Linv
    pulled = {}
    for (a, b, c), poly in conn.items():
        pulled[(a, b, c)] = _pull_poly(g, poly)
    table = {}
    for k, i, j in iproduct(range(d), repeat=3):
        acc = CoeffPoly(d)
        for (a, b, c), poly in pulled.items():
            w = L[k][a] * Li[b][i] * Li[c][j]
            if w:
                acc = acc + poly * w
        if acc:
            table[(k, i, j)] = acc
    return ConnectionData(d, table)


def _pull_poly(g, poly):
    sp = _act_spoly(g, poly.to_spoly(), poly.d, None, "y")
    return CoeffPoly.from_spoly(poly.d, sp)


def average_connection(G, conn):
    """|G|^-1 sum_g g.Gamma."""
    d = conn.d
    acc = {}
    for g in G:
        for key, poly in act(g, conn).items():
            acc[key] = acc.get(key, CoeffPoly(d)) + poly
    n = mpq(1, len(G))
    return ConnectionData(d, {k: v * n for k, v in acc.items() if v})


def require_invariant_connection(G, conn):
    for g in G:
        if act(g, conn) != conn:
            raise PreconditionError(f"connection is not invariant under {g}")


def check_equivariance(G, st, probes, morphism=None, star=None, tuples=None, star_pairs=None):
    """Exact equivariance assertions; returns {name: (passed, detail)}.

    ``probes`` are base polynomials (CoeffPoly) for the tau check, ``tuples``
    maps arity n to lists of base polyvector tuples for the morphism check,
    ``star_pairs`` lists base function pairs for the star product check.
    """
    from formality.fedosov import tau_function
    from formality.graded import base_function

    require_invariant_connection(G, st.conn)
    results = {}

    def record(name, ok, detail=""):
        prev = results.get(name)
        if prev is None or prev[0]:
            results[name] = (ok, detail)

    for g in G:
        ok = act(g, st.A) == st.A
        record("g.A = A", ok, "" if ok else f"fails for {g}")
        for f in probes:
            lhs = act(g, tau_function(st, f))
            rhs = tau_function(st, _pull_poly(g, f))
            ok = lhs.equal_through(rhs)
            record("g o tau = tau o g", ok, "" if ok else f"fails for {g} on {f}")
        if morphism is not None:
            for n, tups in (tuples or {}).items():
                for tup in tups:
                    lhs = act(g, morphism(*tup))
                    rhs = morphism(*[act(g, t) for t in tup])
                    ok = lhs.equal_through(rhs)
                    record(f"g o U{n} = U{n} o g", ok, "" if ok else f"fails for {g} on arity {n}")
        if star is not None:
            for f, h in star_pairs or []:
                F = base_function(st.d, f)
                H = base_function(st.d, h)
                lhs = [act(g, c) for c in star.apply(F, H)]
                rhs = star.apply(act(g, F), act(g, H))
                ok = all(a == b for a, b in zip(lhs, rhs))
                record("g(f*h) = g(f)*g(h)", ok, "" if ok else f"fails for {g} on ({f}, {h})")
    return results


__all__ = [
    "GroupElement",
    "AffineAction",
    "act",
    "average_connection",
    "require_invariant_connection",
    "check_equivariance",
]
