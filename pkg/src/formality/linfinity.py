"""L-infinity morphisms as tables of evaluable structure maps.

Conventions.  A structure map F_n has degree 1 - n and is graded
antisymmetric, F(.., a, b, ..) = -(-1)^(ka kb) F(.., b, a, ..), where ka is
the total degree of a.  The relations checked by :func:`linf_defect` are

    n = 1:  d2 F1(g) - F1(d1 g)
    n = 2:  d_hom(F2)(g1, g2) - (F1[g1, g2] - [F1 g1, F1 g2])

with d_hom as in :func:`formality.brackets.d_hom`.  With these signs the
star product C_n = F_n(a, .., a) / n! of a Maurer-Cartan element a is
associative.
"""

from math import factorial

from gmpy2 import mpq

from formality.brackets import PolyMap, d_hom, total_degree
from formality.errors import CapacityError, ConsistencyError, PreconditionError


class DglaHandle:
    """Differential, bracket and grading of a DGLA; ``differential=None`` means zero."""

    def __init__(self, name, differential, bracket, degree_of=total_degree):
        self.name = name
        self.differential = differential
        self.bracket = bracket
        self.degree_of = degree_of

    def d(self, a):
        return self.differential(a) if self.differential is not None else a.zero()

    def __repr__(self):
        return f"DglaHandle({self.name})"


class LinfMorphism:
    """Structure maps ``maps[n]`` for 1 <= n <= arity_cap."""

    def __init__(self, source, target, maps, arity_cap=None, hbar_order_cap=2, name="F",
                 inert=None):
        self.inert = inert
        self.source = source
        self.target = target
        self.maps = dict(maps)
        self.arity_cap = max(self.maps) if arity_cap is None else arity_cap
        self.hbar_order_cap = hbar_order_cap
        self.name = name
        for n, f in self.maps.items():
            if f.arity != n:
                raise PreconditionError(f"structure map {n} has arity {f.arity}")
            if f.degree != 1 - n:
                raise PreconditionError(f"structure map {n} has degree {f.degree}, expected {1 - n}")

    def F(self, n):
        if n > self.arity_cap or n not in self.maps:
            raise CapacityError(f"{self.name}: structure map of arity {n} is not available "
                                f"(arity cap {self.arity_cap})")
        return self.maps[n]

    def __call__(self, *args):
        return self.F(len(args))(*args)

    def replace(self, maps, name=None):
        new = dict(self.maps)
        new.update(maps)
        return LinfMorphism(self.source, self.target, new, self.arity_cap, self.hbar_order_cap,
                            name or self.name, self.inert)


class MaurerCartanElement:
    """A Maurer-Cartan element; ``nilpotency_bound`` m means m-fold products vanish."""

    def __init__(self, value, nilpotency_bound=None):
        self.value = value
        if nilpotency_bound is None:
            nilpotency_bound = value.d + 1 if value.form_degrees() and 0 not in value.form_degrees() else None
        self.nilpotency_bound = nilpotency_bound

    def is_zero(self):
        return self.value.is_zero()


def rhs2(F, g1, g2):
    """F1[g1, g2] - [F1 g1, F1 g2]."""
    F1 = F.F(1)
    return F1(F.source.bracket(g1, g2)) - F.target.bracket(F1(g1), F1(g2))


def linf_defect(F, n, args):
    """LHS - RHS of the arity-n L-infinity relation; zero iff it holds on ``args``."""
    args = list(args)
    if len(args) != n:
        raise PreconditionError(f"linf_defect at arity {n} needs {n} arguments")
    if n > F.arity_cap:
        raise CapacityError(f"arity {n} exceeds the morphism's arity cap {F.arity_cap}")
    if n == 1:
        return d_hom(F.F(1), F.source.differential, F.target.differential, F.source.degree_of)(*args)
    if n == 2:
        lhs = d_hom(F.F(2), F.source.differential, F.target.differential, F.source.degree_of)(*args)
        return lhs - rhs2(F, *args)
    raise CapacityError(f"the arity-{n} relation is not implemented (needs brackets of "
                        f"structure maps beyond arity 2)")


def memoized(pm):
    """Cache a PolyMap's values by argument tuple (arguments are hashable values)."""
    cache = {}

    def fn(*args):
        key = tuple((type(a).__name__, a, a.valid_to) for a in args)
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = pm(*args)
        return hit

    return PolyMap(fn, pm.arity, pm.degree, pm.name)


# ---------------------------------------------------------------------------
# twisting


def twisted_handle(h, B, name):
    """The DGLA h with differential d + [B, .]."""
    def diff(a):
        out = h.bracket(B, a)
        if h.differential is not None:
            out = h.differential(a) + out
        return out

    return DglaHandle(name, diff, h.bracket, h.degree_of)


def twist(F, B_src, B_tgt=None):
    """Twist F by a Maurer-Cartan element:  U_n(v..) = sum_m 1/m! F_{n+m}(B, .., B, v..).

    ``F.inert`` (if set) returns the part of B that every structure map of
    arity >= 2 annihilates; only the remainder enters the m >= 1 terms.  The
    sum stops at the nilpotency bound of B.  ``B_tgt`` defaults to
    sum_m 1/m! F_m(B, .., B) evaluated within the arity cap.
    """
    if not isinstance(B_src, MaurerCartanElement):
        B_src = MaurerCartanElement(B_src)
    B = B_src.value
    active = B - F.inert(B) if F.inert is not None else B
    bound = B_src.nilpotency_bound
    mmax = 0
    if not active.is_zero():
        mmax = F.arity_cap if bound is None else bound - 1
        # U_n needs F_{n+1}(B, v..) at the top arity n = cap
        if mmax >= 1:
            raise CapacityError(
                f"twisting needs the structure map of arity {F.arity_cap + 1} (cap {F.arity_cap}): "
                f"the Maurer-Cartan element has a part not annihilated by higher structure maps"
            )
    if B_tgt is None:
        B_tgt = F.F(1)(B)
    elif isinstance(B_tgt, MaurerCartanElement):
        B_tgt = B_tgt.value
    maps = {}
    for n in range(1, F.arity_cap + 1):
        terms = []
        for m in range(0, mmax + 1):
            if n + m > F.arity_cap:
                break
            terms.append((m, F.F(n + m)))

        def fn(*args, _terms=terms):
            out = None
            for m, Fm in _terms:
                val = Fm(*([active] * m), *args)
                if m:
                    val = val * mpq(1, factorial(m))
                out = val if out is None else out + val
            return out

        maps[n] = PolyMap(fn, n, 1 - n, f"twisted U{n}")
    src = twisted_handle(F.source, B, f"{F.source.name} twisted")
    tgt = twisted_handle(F.target, B_tgt, f"{F.target.name} twisted")
    return LinfMorphism(src, tgt, maps, F.arity_cap, F.hbar_order_cap, f"tw({F.name})", F.inert)


# ---------------------------------------------------------------------------
# shifting by a homotopy


def _parity(k):
    return -1 if k % 2 else 1


def shift(F, n, V):
    """Shift F by the polylinear map V of arity n and degree -n.

    n = 1:  F1' = F1 + H with H = d2 V + V d1, and
            F2'(a, b) = F2(a, b) + V[a, b] - (-1)^ka [F1 a, V b] - [V a, F1 b]
                        - 1/2 [V a, H b] - 1/2 (-1)^ka [H a, V b].
    n = 2:  F2' = F2 + d_hom(V).
    Lower arities are unchanged; arities above the cap are not produced.
    """
    if V.arity != n or V.degree != -n:
        raise PreconditionError(f"shift at arity {n} needs a map of arity {n} and degree {-n}")
    if n > F.arity_cap:
        raise CapacityError(f"shift at arity {n} exceeds the arity cap {F.arity_cap}")
    src, tgt = F.source, F.target
    if n == 1:
        V = memoized(V)
        H = memoized(d_hom(V, src.differential, tgt.differential, src.degree_of))
        F1 = memoized(F.F(1))

        def f1(a):
            return F1(a) + H(a)

        maps = {1: PolyMap(f1, 1, 0, "F1~")}
        if F.arity_cap >= 2:
            F2 = F.F(2)
            half = mpq(1, 2)

            def f2(a, b):
                ka = src.degree_of(a)
                sa = _parity(ka)
                Va, Vb = V(a), V(b)
                out = F2(a, b) + V(src.bracket(a, b))
                out = out - tgt.bracket(F1(a), Vb) * sa - tgt.bracket(Va, F1(b))
                out = out - tgt.bracket(Va, H(b)) * half - tgt.bracket(H(a), Vb) * (half * sa)
                return out

            maps[2] = PolyMap(f2, 2, -1, "F2~")
        if F.arity_cap > 2:
            raise CapacityError("shift corrections beyond arity 2 are not implemented")
        return F.replace(maps, f"shift1({F.name})")
    if n == 2:
        dV = d_hom(V, src.differential, tgt.differential, src.degree_of)
        F2 = F.F(2)
        return F.replace({2: PolyMap(lambda a, b: F2(a, b) + dV(a, b), 2, -1, "F2~")},
                         f"shift2({F.name})")
    raise CapacityError(f"shift at arity {n} is not implemented")


# ---------------------------------------------------------------------------
# lift to base-level sources and contraction


def compose_lift(F, st, source):
    """Precompose every structure map with the lift tau of base-level arguments."""
    from formality.fedosov import lift_base

    maps = {}
    for n in range(1, F.arity_cap + 1):
        Fn = F.F(n)

        def fn(*args, _Fn=Fn):
            return _Fn(*(lift_base(a, st) for a in args))

        maps[n] = memoized(PolyMap(fn, n, 1 - n, f"{Fn.name} o tau"))
    return LinfMorphism(source, F.target, maps, F.arity_cap, F.hbar_order_cap,
                        f"{F.name} o tau", None)


def contract_to_fiber_zero(F, st):
    """Shift F arity by arity until every value has exterior degree 0.

    For each arity n and each exterior degree q from d down to 1 the homotopy
    V_n(args) = -solve_exact(F_n(args) in degree q) is applied through
    :func:`shift`.  A non-closed top component raises ConsistencyError.
    """
    from formality.fedosov import ResidualError, solve_exact

    d = st.d
    cur = F
    for n in range(1, F.arity_cap + 1):
        for q in range(d, 0, -1):
            Fn = memoized(cur.F(n))
            cur = cur.replace({n: Fn})

            def v(*args, _Fn=Fn, _q=q, _n=n):
                top = _Fn(*args).form_part(_q)
                if top.is_zero():
                    return top
                if max(top.form_degrees()) != _q:
                    raise ConsistencyError("unexpected exterior degree in contraction")
                try:
                    b = solve_exact(top, st)
                except ResidualError as exc:
                    raise ConsistencyError(
                        f"arity-{_n} component of exterior degree {_q} is not D-closed "
                        f"(residual at y-degree {exc.degree})") from exc
                return -b

            cur = shift(cur, n, PolyMap(v, n, -n, f"V{n}[{q}]"))
    maps = {n: memoized(cur.F(n)) for n in range(1, F.arity_cap + 1)}
    return LinfMorphism(F.source, F.target, maps, F.arity_cap, F.hbar_order_cap,
                        f"contract({F.name})", F.inert)


__all__ = [
    "DglaHandle",
    "LinfMorphism",
    "MaurerCartanElement",
    "linf_defect",
    "rhs2",
    "memoized",
    "twisted_handle",
    "twist",
    "shift",
    "compose_lift",
    "contract_to_fiber_zero",
]
