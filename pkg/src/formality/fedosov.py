"""Fedosov resolution on R^d with a polynomial torsion-free connection.

Operators on form-valued sections, polyvectors and polydifferential operators:

* ``delta``     dx^i d/dy^i on coefficients,
* ``delta_inv`` y^k i(d/dx^k), divided by p + q on each (p, q) component,
* ``sigma``     the projection to y = dx = 0,
* ``nabla``     d_x + [Gamma, .] with Gamma = -dx^i Gamma^k_ij y^j d/dy^k,
* ``fedosov_D`` nabla - delta + [A, .].

``solve_A`` builds the flat connection by iterating
A = delta_inv R + delta_inv(nabla A + 1/2 [A, A]).
"""

from gmpy2 import mpq

from formality import kernels as K
from formality.brackets import ad_vector_form, schouten
from formality.errors import CapacityError, PreconditionError, StructuralError, ValidationError
from formality.graded import (
    INF,
    CoeffPoly,
    FiberPolyOp,
    FiberPolyVec,
    FormSection,
    apply_op,
    from_base,
    truncation_cap,
    unit_exp,
    zero_exp,
)


class ResidualError(PreconditionError):
    """An input that must be D-closed is not; ``degree`` is the lowest failing y-degree."""

    def __init__(self, message, degree=None):
        super().__init__(message)
        self.degree = degree


# ---------------------------------------------------------------------------
# connection data


class ConnectionData:
    """Christoffel symbols Gamma^k_ij (0-based keys ``(k, i, j)``), symmetric in i, j."""

    __slots__ = ("d", "_gamma")

    def __init__(self, d, christoffels=None):
        self.d = d
        table = {}
        for key, val in (christoffels or {}).items():
            k, i, j = key
            if not all(0 <= t < d for t in key):
                raise ValidationError(f"Christoffel index {key} out of range for d={d}")
            poly = val if isinstance(val, CoeffPoly) else CoeffPoly.parse(str(val), d)
            if poly.d != d:
                raise ValidationError("Christoffel symbol has wrong dimension")
            if poly:
                table[(k, i, j)] = poly
        for (k, i, j), poly in table.items():
            other = table.get((k, j, i), CoeffPoly(d))
            if other != poly:
                raise ValidationError(
                    f"connection has torsion: Gamma^{k + 1}_{i + 1}{j + 1} = {poly} "
                    f"but Gamma^{k + 1}_{j + 1}{i + 1} = {other}"
                )
        self._gamma = table

    @classmethod
    def flat(cls, d):
        return cls(d, {})

    def gamma(self, k, i, j):
        return self._gamma.get((k, i, j), CoeffPoly(self.d))

    def items(self):
        return sorted(self._gamma.items())

    def is_flat(self):
        return not self._gamma

    def __eq__(self, other):
        return isinstance(other, ConnectionData) and self.d == other.d and self._gamma == other._gamma

    def __hash__(self):
        return hash((self.d, frozenset(self._gamma.items())))

    def __repr__(self):
        body = ", ".join(f"G^{k + 1}_{i + 1}{j + 1}={p}" for (k, i, j), p in self.items())
        return f"ConnectionData(d={self.d}, {body or 'flat'})"

    def riemann(self, k, l, i, j):
        """R^k_{l i j} = d_i G^k_jl - d_j G^k_il + G^k_im G^m_jl - G^k_jm G^m_il."""
        r = self.gamma(k, j, l).diff(i) - self.gamma(k, i, l).diff(j)
        for m in range(self.d):
            r = r + self.gamma(k, i, m) * self.gamma(m, j, l) - self.gamma(k, j, m) * self.gamma(m, i, l)
        return r


def gamma_form(conn, N):
    """Gamma = -dx^i Gamma^k_ij y^j theta_k as a form-valued vector field."""
    d = conn.d
    data = {}
    for (k, i, j), poly in conn.items():
        sp = data.setdefault((k,), {})
        for (x, h), c in poly.items():
            key = (unit_exp(d, j), 1 << i, x, h)
            sp[key] = sp.get(key, 0) - c
    return FiberPolyVec(d, N, data)


def delta_form(d, N):
    """dx^i theta_i; delta = [dx^i theta_i, .]."""
    z = zero_exp(d)
    return FiberPolyVec(d, N, {(i,): {(z, 1 << i, z, 0): mpq(1)} for i in range(d)})


def curvature(conn, N):
    """R = -1/2 dx^i dx^j R^k_lij y^l theta_k."""
    d = conn.d
    data = {}
    for k in range(d):
        for l in range(d):
            for i in range(d):
                for j in range(i + 1, d):
                    r = conn.riemann(k, l, i, j)
                    if not r:
                        continue
                    sp = data.setdefault((k,), {})
                    for (x, h), c in r.items():
                        key = (unit_exp(d, l), (1 << i) | (1 << j), x, h)
                        sp[key] = sp.get(key, 0) - c
    return FiberPolyVec(d, N, data)


# ---------------------------------------------------------------------------
# linear operators


def _delta_sp(sp, d):
    out = {}
    for i in range(d):
        K.add_into(out, K.dx_wedge(i, K.dy(sp, unit_exp(d, i))))
    return out


def delta(a):
    return a.map_coeffs(lambda sp: _delta_sp(sp, a.d), a.valid_to - 1)


def delta_inv(a):
    top = a.max_ydeg() + 1 if any(k[1] for sp in a.data.values() for k in sp) else 0
    v = min(a.valid_to + 1, truncation_cap(a.N, top))
    return a.map_coeffs(lambda sp: K.delta_inv(sp, a.d, a.N), v)


def sigma(a):
    return a.select(lambda s, k: not k[1] and not any(k[0]))


def d_x(a):
    """Exterior derivative in the base coordinates."""
    def fn(sp):
        out = {}
        for i in range(a.d):
            K.add_into(out, K.dx_wedge(i, K.dx(sp, i)))
        return out

    return a.map_coeffs(fn)


def nabla(a, conn):
    if conn.d != a.d:
        raise StructuralError("connection dimension mismatch")
    out = d_x(a)
    if not conn.is_flat():
        out = out + ad_vector_form(gamma_form(conn, a.N), a)
    return out


# ---------------------------------------------------------------------------
# Fedosov state


class FedosovState:
    """Connection, curvature and the Fedosov correction A at truncation N."""

    def __init__(self, conn, N, R, A, iterations):
        self.conn = conn
        self.N = N
        self.d = conn.d
        self.R = R
        self.A = A
        self.iterations = iterations
        self.valid_to = A.valid_to
        self._gamma = gamma_form(conn, N)
        self._tau_cache = {}

    @property
    def gamma(self):
        return self._gamma

    def B(self):
        """-dx^i theta_i + Gamma + A."""
        return -delta_form(self.d, self.N) + self._gamma + self.A

    def flatness_residual(self):
        """delta A - R - nabla A - 1/2 [A, A]."""
        A = self.A
        return delta(A) - self.R - nabla(A, self.conn) - schouten(A, A) * mpq(1, 2)


def solve_A(conn, N):
    """Iterate the Fedosov equation for A through y-degree N."""
    if N < 2:
        raise PreconditionError("truncation order N must be at least 2")
    R = curvature(conn, N)
    A = FiberPolyVec(conn.d, N, {})
    if R:
        dR = delta_inv(R)
        # each pass fixes one more y-degree, starting at 2
        for _ in range(N - 1):
            rhs = nabla(A, conn) + schouten(A, A) * mpq(1, 2)
            A = dR + delta_inv(rhs)
        A = A.with_valid_to(N)
    return FedosovState(conn, N, R, A, max(N - 1, 0))


def fedosov_D(a, st):
    out = nabla(a, st.conn) - delta(a)
    if st.A:
        out = out + ad_vector_form(st.A, a)
    return out


def _first_nonzero_degree(a, v):
    bad = a.truncated(v) if v != INF else a
    return bad.min_ydeg() if bad else None


def solve_exact(a, st, check=True):
    """b with D b = a, sigma b = 0 and delta_inv b = 0, for D-closed a of exterior degree > 0."""
    if a.N != st.N or a.d != st.d:
        raise StructuralError("element does not match the Fedosov state")
    if 0 in a.form_degrees():
        raise PreconditionError("solve_exact needs exterior degree >= 1 in every term")
    if check:
        Da = fedosov_D(a, st)
        deg = _first_nonzero_degree(Da, Da.valid_to)
        if deg is not None:
            raise ResidualError(f"input is not D-closed: residual at y-degree {deg}", deg)
    first = -delta_inv(a)
    b = first
    for _ in range(st.N + 1):
        rhs = nabla(b, st.conn)
        if st.A:
            rhs = rhs + ad_vector_form(st.A, b)
        b = first + delta_inv(rhs)
    return b


def tau_lift(a0, st):
    """Unique D-closed lift with sigma(tau a0) = a0 of a y- and dx-free element."""
    if a0.N != st.N or a0.d != st.d:
        raise StructuralError("element does not match the Fedosov state")
    if a0.family != "y":
        raise StructuralError("tau_lift expects a fiberwise element (use from_base)")
    for sp in a0.data.values():
        for (y, m, x, h) in sp:
            if any(y) or m:
                raise PreconditionError("tau_lift input must have y-degree 0 and exterior degree 0")
    key = a0
    hit = st._tau_cache.get(key)
    if hit is not None:
        return hit
    a = a0
    for _ in range(st.N + 1):
        rhs = nabla(a, st.conn)
        if st.A:
            rhs = rhs + ad_vector_form(st.A, a)
        a = a0 + delta_inv(rhs)
    st._tau_cache[key] = a
    return a


def tau_function(st, poly):
    """tau of a base polynomial (CoeffPoly or string)."""
    if not isinstance(poly, CoeffPoly):
        poly = CoeffPoly.parse(str(poly), st.d)
    return tau_lift(FormSection.from_coeff(st.d, st.N, poly), st)


# ---------------------------------------------------------------------------
# projection to base operators


def _monomials_upto(d, r):
    out = []

    def rec(prefix, left, pos):
        if pos == d - 1:
            out.append(tuple(prefix + [left]))
            return
        for e in range(left + 1):
            rec(prefix + [e], left - e, pos + 1)

    for deg in range(r + 1):
        rec([], deg, 0)
    return out


def _falling(b, a):
    f = 1
    for t in range(a):
        f *= b - t
    return f


def mu_project(P, st, order=None):
    """Base-level operator mu(P) = sigma P(tau x^b0, .., tau x^bk), read off on monomial probes.

    Coefficients q_a of mu(P) = sum q_a d^a0 (x) .. (x) d^ak are recovered by the
    triangular recursion
        q_b = (Q(x^b) - sum_{a < b} q_a prod_i b_i!/(b_i - a_i)! x^(b_i - a_i)) / prod b_i!.
    Polyvectors project by sigma.
    """
    if P.kind == "vec":
        return _to_base_vec(sigma(P))
    if P.kind == "sec":
        return _to_base_vec(sigma(P.as_vec())).function_part()
    if P.form_degrees() not in ([], [0]):
        raise PreconditionError("mu_project needs exterior degree 0")
    d = st.d
    if P.is_zero():
        return FiberPolyOp(d, None, {}, "x")
    k = P.homogeneous_degree()
    r = P.max_order() if order is None else order
    if r > st.N or r > P.valid_to:
        raise CapacityError(f"derivative order {r} exceeds the truncation order {st.N}")
    if k == -1:
        return _to_base_vec(sigma(P.function_part().as_vec())).function_part().as_op()
    mons = _monomials_upto(d, r)
    taus = {b: tau_function(st, CoeffPoly(d, {(b, 0): 1})) for b in mons}
    slot_lists = [[]]
    for _ in range(k + 1):
        slot_lists = [s + [b] for s in slot_lists for b in mons]
    slot_lists.sort(key=lambda s: (sum(sum(b) for b in s), s))
    q = {}
    for beta in slot_lists:
        val = apply_op(P, [taus[b] for b in beta])
        acc = _xpoly(sigma(val).data.get((), {}))
        for alpha, qa in q.items():
            if all(all(a <= b for a, b in zip(al, be)) for al, be in zip(alpha, beta)):
                coef = 1
                shift = [0] * d
                for al, be in zip(alpha, beta):
                    for c in range(d):
                        coef *= _falling(be[c], al[c])
                        shift[c] += be[c] - al[c]
                term = {((0,) * d, 0, tuple(x + s for x, s in zip(xx, shift)), h): v * coef
                        for (_, _, xx, h), v in qa.items()}
                K.add_into(acc, term, -1)
        norm = 1
        for be in beta:
            for e in be:
                norm *= _falling(e, e)
        if acc:
            q[tuple(beta)] = K.scale(acc, mpq(1, norm))
    data = {}
    for slots, sp in q.items():
        data[slots] = {(x, 0, zero_exp(d), h): c for (_, _, x, h), c in sp.items()}
    return FiberPolyOp(d, None, data, "x")


def _xpoly(sp):
    return {k: c for k, c in sp.items()}


def _to_base_vec(a):
    data = {}
    for s, sp in a.data.items():
        data[s] = {(x, 0, zero_exp(a.d), h): c for (y, m, x, h), c in sp.items()}
    return type(a)(a.d, None, data, "x")


def lift_base(a, st):
    """tau of a base-level element (section, polyvector or operator)."""
    return tau_lift(from_base(a, st.N), st)


__all__ = [
    "ConnectionData",
    "FedosovState",
    "ResidualError",
    "gamma_form",
    "delta_form",
    "curvature",
    "delta",
    "delta_inv",
    "sigma",
    "d_x",
    "nabla",
    "solve_A",
    "fedosov_D",
    "solve_exact",
    "tau_lift",
    "tau_function",
    "mu_project",
    "lift_base",
]
