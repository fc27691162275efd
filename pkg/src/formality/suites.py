"""Named identity suites run against a ManifoldSpec.

Every identity is a function ``ctx -> (passed, detail)``.  ``detail`` names the
first offending term exactly on failure.  Probe data is seeded, so reports are
reproducible.
"""

from formality.errors import CapacityError, PreconditionError

SEED = 20240611


def first_term(a):
    """The leading term of a nonzero element as text (for failure reports)."""
    if a is None or a.is_zero():
        return ""
    slot = min(a.data, key=lambda s: (a.slot_degree(s), s))
    single = a._new({slot: a.data[slot]}, a.valid_to)
    from formality.graded import sorted_terms
    key, c = sorted_terms(a.data[slot])[0]
    return str(single._new({slot: {key: c}}, a.valid_to))


def _zero(a, label=""):
    if a.is_zero():
        return True, ""
    return False, f"{label}nonzero term {first_term(a)}".strip()


class Context:
    """Lazily built pipeline objects shared by the identities of one run."""

    def __init__(self, spec):
        import random

        self.spec = spec
        self.d = spec.d
        self.N = spec.N
        self.rng = random.Random(SEED)
        self._st = None
        self._star = None

    @property
    def st(self):
        if self._st is None:
            from formality.fedosov import solve_A

            self._st = solve_A(self.spec.conn, self.N)
        return self._st

    @property
    def star(self):
        if self._star is None:
            from formality.pipeline import build_star_product

            self._star = build_star_product(self.spec, verify=False)
        return self._star

    def probe_polys(self, maxdeg=None):
        from formality.graded import CoeffPoly
        from formality.probes import monomials

        deg = self.spec.probe_degree if maxdeg is None else maxdeg
        return [CoeffPoly(self.d, {(e, 0): 1}) for e in monomials(self.d, deg)]


# ---------------------------------------------------------------------------
# graded_core


def _random_elements(ctx, count, ydeg=None):
    from formality.probes import rand_op, rand_section, rand_vec

    rng, d, N = ctx.rng, ctx.d, ctx.N
    # delta_inv raises y-degree, so stay below the truncation order
    ydeg = min(N - 1, 6) if ydeg is None else ydeg
    out = []
    for n in range(count):
        kind = n % 3
        q = rng.randint(0, d)
        if kind == 0:
            out.append(rand_section(rng, d, N, ydeg=ydeg, q=q))
        elif kind == 1:
            out.append(rand_vec(rng, d, N, rng.randint(-1, d - 1), ydeg=ydeg, q=q))
        else:
            out.append(rand_op(rng, d, N, rng.randint(-1, 2), ydeg=ydeg, q=q))
    return out


def id_hodge(ctx):
    from formality.fedosov import delta, delta_inv, sigma

    for a in _random_elements(ctx, 60):
        diff = a - sigma(a) - delta(delta_inv(a)) - delta_inv(delta(a))
        if not diff.is_zero():
            return _zero(diff)
    return True, ""


def id_delta_nilpotent(ctx):
    from formality.fedosov import delta, delta_inv

    for a in _random_elements(ctx, 30):
        for b in (delta(delta(a)), delta_inv(delta_inv(a))):
            if not b.is_zero():
                return _zero(b)
    return True, ""


# ---------------------------------------------------------------------------
# brackets


def _homogeneous(ctx, kind):
    from formality.probes import rand_op, rand_vec

    rng, d = ctx.rng, ctx.d
    q = rng.randint(0, min(d, 1))
    if kind == "vec":
        return rand_vec(rng, d, None, rng.randint(-1, d - 1), ydeg=2, q=q, nterms=2)
    return rand_op(rng, d, None, rng.randint(-1, 1), ydeg=2, q=q, nterms=2, order=1)


def _sgn(n):
    return -1 if n % 2 else 1


def _axioms(ctx, kind, br, count=25):
    from formality.brackets import total_degree

    for _ in range(count):
        a, b, c = (_homogeneous(ctx, kind) for _ in range(3))
        ka, kb, kc = (total_degree(t) for t in (a, b, c))
        anti = br(a, b) + br(b, a) * _sgn(ka * kb)
        if not anti.is_zero():
            return _zero(anti, "antisymmetry: ")
        jac = br(a, br(b, c)) - br(br(a, b), c) - br(b, br(a, c)) * _sgn(ka * kb)
        if not jac.is_zero():
            return _zero(jac, "Jacobi: ")
    return True, ""


def id_schouten_axioms(ctx):
    from formality.brackets import schouten

    return _axioms(ctx, "vec", schouten)


def id_gerstenhaber_axioms(ctx):
    from formality.brackets import gerstenhaber

    return _axioms(ctx, "op", gerstenhaber)


def id_m_m(ctx):
    from formality.brackets import gerstenhaber
    from formality.graded import multiplication

    m = multiplication(ctx.d, ctx.N)
    return _zero(gerstenhaber(m, m))


def id_hochschild_squared(ctx):
    from formality.brackets import hochschild_d

    for _ in range(20):
        a = _homogeneous(ctx, "op")
        b = hochschild_d(hochschild_d(a))
        if not b.is_zero():
            return _zero(b)
    return True, ""


# ---------------------------------------------------------------------------
# fedosov


def id_flatness(ctx):
    st = ctx.st
    res = st.flatness_residual()
    top = min(st.valid_to, st.N) - 1
    bad = res.select(lambda slot, key: sum(key[0]) <= top)
    return _zero(bad, f"through y-degree {top}: ")


def id_D_squared(ctx):
    from formality.fedosov import fedosov_D
    from formality.probes import rand_section, rand_vec

    st, rng = ctx.st, ctx.rng
    for n in range(12):
        if n % 2:
            a = rand_vec(rng, st.d, st.N, rng.randint(0, st.d - 1), ydeg=3, q=rng.randint(0, 1))
        else:
            a = rand_section(rng, st.d, st.N, ydeg=3, q=rng.randint(0, 1))
        DDa = fedosov_D(fedosov_D(a, st), st)
        bad = DDa.truncated(DDa.valid_to) if DDa.valid_to != float("inf") else DDa
        if not bad.is_zero():
            return _zero(bad)
    return True, ""


def id_sigma_tau(ctx):
    from formality.fedosov import sigma, tau_function
    from formality.graded import FormSection

    st = ctx.st
    for f in ctx.probe_polys():
        diff = sigma(tau_function(st, f)) - sigma(FormSection.from_coeff(st.d, st.N, f))
        if not diff.is_zero():
            return _zero(diff, f"on {f}: ")
    return True, ""


def id_D_tau(ctx):
    from formality.fedosov import fedosov_D, tau_function

    st = ctx.st
    for f in ctx.probe_polys():
        Dt = fedosov_D(tau_function(st, f), st)
        bad = Dt.truncated(Dt.valid_to) if Dt.valid_to != float("inf") else Dt
        if not bad.is_zero():
            return _zero(bad, f"on {f}: ")
    return True, ""


def id_solve_exact(ctx):
    from formality.fedosov import delta_inv, fedosov_D, sigma, solve_exact
    from formality.probes import rand_spoly
    from formality.graded import FormSection

    st, rng = ctx.st, ctx.rng
    for _ in range(15):
        sp = {k: v for k, v in rand_spoly(rng, st.d, 3, 3, q=0).items() if any(k[0])}
        c = FormSection(st.d, st.N, {(): sp} if sp else {})
        a = fedosov_D(c, st)
        if a.is_zero():
            continue
        b = solve_exact(a, st)
        Db = fedosov_D(b, st)
        v = min(Db.valid_to, a.valid_to)
        for label, bad in (("D b - a: ", (Db - a).truncated(v) if v != float("inf") else Db - a),
                           ("sigma b: ", sigma(b)), ("delta_inv b: ", delta_inv(b))):
            if not bad.is_zero():
                return _zero(bad, label)
    return True, ""


# ---------------------------------------------------------------------------
# linfinity and kontsevich_fiber


def _fiber_probe_pair(ctx):
    from formality.probes import rand_vec

    rng, d = ctx.rng, ctx.d
    k1, k2 = rng.choice([(1, 1), (0, 1), (1, 0), (0, 0)])
    if d < 2:
        k1 = k2 = 0
    q1, q2 = rng.randint(0, 1), rng.randint(0, 1)
    a = rand_vec(rng, d, None, k1, ydeg=2, q=q1, nterms=2)
    b = rand_vec(rng, d, None, k2, ydeg=2, q=q2, nterms=2)
    return a, b


def id_linf_defects(ctx):
    from formality.kontsevich import assemble_fiber_morphism
    from formality.linfinity import linf_defect

    for de_rham in (False, True):
        F = assemble_fiber_morphism(2, de_rham=de_rham)
        for _ in range(6):
            a, b = _fiber_probe_pair(ctx)
            for n, args in ((1, [a]), (2, [a, b])):
                bad = linf_defect(F, n, args)
                if not bad.is_zero():
                    return _zero(bad, f"arity {n}: ")
    return True, ""


def id_rhs_closed(ctx):
    from formality.brackets import PolyMap, d_hom
    from formality.kontsevich import assemble_fiber_morphism
    from formality.linfinity import rhs2

    F = assemble_fiber_morphism(2)
    R = PolyMap(lambda a, b: rhs2(F, a, b), 2, 0, "rhs")
    dR = d_hom(R, F.source.differential, F.target.differential, F.source.degree_of)
    for _ in range(6):
        a, b = _fiber_probe_pair(ctx)
        bad = dR(a, b)
        if not bad.is_zero():
            return _zero(bad)
    return True, ""


def _contraction_V1(ctx):
    """A seeded degree -1 map: contract theta_1 against a random y-polynomial, then hkr."""
    from formality import kernels as K
    from formality.brackets import PolyMap, hkr
    from formality.graded import FiberPolyVec
    from formality.probes import rand_spoly

    d = ctx.d
    c = rand_spoly(ctx.rng, d, 1, 2, q=0)
    j = 1 if d > 1 else 0

    def v1(g):
        if g.kind == "sec":
            g = g.as_vec()
        out = {}
        for slot, sp in g.data.items():
            if j in slot:
                pos = slot.index(j)
                rest = slot[:pos] + slot[pos + 1:]
                K.add_into(out.setdefault(rest, {}), K.mul(c, sp, None), -1 if pos % 2 else 1)
        return hkr(FiberPolyVec(d, None, out))

    return PolyMap(v1, 1, -1, "V1")


def id_shift_preserves(ctx):
    from formality.kontsevich import assemble_fiber_morphism
    from formality.linfinity import linf_defect, shift

    F = assemble_fiber_morphism(2)
    G = shift(F, 1, _contraction_V1(ctx))
    for _ in range(6):
        a, b = _fiber_probe_pair(ctx)
        for n, args in ((1, [a]), (2, [a, b])):
            bad = linf_defect(G, n, args)
            if not bad.is_zero():
                return _zero(bad, f"arity {n}: ")
    return True, ""


def id_weights(ctx):
    from formality.kontsevich import WeightTable, solve_weights

    t = solve_weights()
    again = WeightTable.from_json(t.to_json())
    if again != t or again.dumps() != t.dumps():
        return False, "weight table does not round-trip"
    return True, ""


def id_vector_fields(ctx):
    """U_2 vanishes when one argument is a vector field; U_1 of an affine vector field is itself."""
    from formality.brackets import hkr
    from formality.kontsevich import assemble_fiber_morphism
    from formality.probes import rand_vec

    F = assemble_fiber_morphism(2)
    rng, d = ctx.rng, ctx.d
    for _ in range(10):
        v = rand_vec(rng, d, None, 0, ydeg=1, q=rng.randint(0, 1), nterms=2)
        a, _ = _fiber_probe_pair(ctx)
        for val in (F(v, a), F(a, v)):
            if not val.is_zero():
                return _zero(val, "U2 with a vector field: ")
        bad = F(v) - hkr(v)
        if not bad.is_zero():
            return _zero(bad, "U1 of a vector field: ")
    return True, ""


# ---------------------------------------------------------------------------
# star product


def id_star_first_order(ctx):
    sp = ctx.star
    if sp.order < 1:
        return True, "hbar_order 0"
    from formality.pipeline import probe_functions

    probes = probe_functions(ctx.d, ctx.spec.probe_degree)
    for f in probes:
        for g in probes:
            bad = sp.first_order_defect(f, g)
            if not bad.is_zero():
                return _zero(bad, f"on ({f}, {g}): ")
    return True, ""


def id_star_associative(ctx):
    from formality.pipeline import probe_functions

    sp = ctx.star
    probes = probe_functions(ctx.d, min(ctx.spec.probe_degree, 3))
    for f in probes:
        for g in probes:
            for h in probes:
                for n, bad in enumerate(sp.associativity_defect(f, g, h)):
                    if not bad.is_zero():
                        return _zero(bad, f"hbar^{n} on ({f}, {g}, {h}): ")
    return True, ""


def id_moyal(ctx):
    from formality.pipeline import moyal_coefficients

    spec = ctx.spec
    if not spec.conn.is_flat() or any(p.degree() > 0 for p in spec.poisson.values()):
        return True, "not applicable (needs flat connection and constant alpha)"
    sp = ctx.star
    oracle = moyal_coefficients(spec.alpha, sp.order)
    for n, (C, M) in enumerate(zip(sp.C, oracle)):
        diff = C - M
        if not diff.is_zero():
            return _zero(diff, f"C{n}: ")
    return True, ""


# ---------------------------------------------------------------------------
# equivariance


def _group_elements(ctx):
    return list(ctx.spec.group)


def id_action_law(ctx):
    from formality.equivariance import act

    G = _group_elements(ctx)
    samples = _random_elements(ctx, 6, ydeg=2)
    for g in G:
        for h in G:
            for a in samples:
                bad = act(g, act(h, a)) - act(g * h, a)
                if not bad.is_zero():
                    return _zero(bad, f"({g}, {h}): ")
    return True, ""


def id_action_commutes(ctx):
    from formality.equivariance import act
    from formality.fedosov import delta, delta_inv, sigma

    for g in _group_elements(ctx):
        for a in _random_elements(ctx, 6, ydeg=3):
            for name, op in (("delta", delta), ("delta_inv", delta_inv), ("sigma", sigma)):
                bad = act(g, op(a)) - op(act(g, a))
                if not bad.is_zero():
                    return _zero(bad, f"{name} under {g}: ")
    return True, ""


def id_B_transform(ctx):
    """Tensor-law action on B minus B of the transformed connection is y-linear."""
    from formality.equivariance import act
    from formality.fedosov import solve_A

    st = ctx.st
    for g in _group_elements(ctx):
        other = solve_A(act(g, st.conn), st.N)
        diff = act(g, st.B()) - other.B()
        bad = diff.select(lambda slot, key: sum(key[0]) > 1)
        if not bad.is_zero():
            return _zero(bad, f"{g}: ")
    return True, ""


def id_equivariance(ctx):
    from formality.equivariance import act, check_equivariance

    spec, st = ctx.spec, ctx.st
    probes = ctx.probe_polys(min(spec.probe_degree, 3))
    morphism = star = None
    tuples, pairs = {}, []
    if spec.has_poisson():
        star = ctx.star
        if any(act(g, spec.alpha) != spec.alpha for g in spec.group):
            star = None
        else:
            from formality.pipeline import global_morphism

            morphism = global_morphism(st, max(1, min(2, spec.hbar_order)))
            al = spec.alpha
            tuples = {n: [tuple([al] * n)] for n in range(1, morphism.arity_cap + 1)}
            polys = ctx.probe_polys(2)
            pairs = [(f, g) for f in polys for g in polys]
    res = check_equivariance(spec.group, st, probes, morphism, star, tuples, pairs)
    for name, (ok, detail) in sorted(res.items()):
        if not ok:
            return False, f"{name}: {detail}"
    return True, ", ".join(sorted(res))


# ---------------------------------------------------------------------------
# registry

SUITES = {
    "graded": [("hodge_decomposition", id_hodge), ("delta_nilpotent", id_delta_nilpotent)],
    "brackets": [
        ("schouten_axioms", id_schouten_axioms),
        ("gerstenhaber_axioms", id_gerstenhaber_axioms),
        ("m_bracket_m_zero", id_m_m),
        ("hochschild_squared_zero", id_hochschild_squared),
    ],
    "fedosov": [
        ("flatness_residual", id_flatness),
        ("D_squared_zero", id_D_squared),
        ("sigma_tau_identity", id_sigma_tau),
        ("D_tau_zero", id_D_tau),
        ("solve_exact_inverse", id_solve_exact),
    ],
    "linfinity": [
        ("linf_defects_zero", id_linf_defects),
        ("rhs_dhom_closed", id_rhs_closed),
        ("shift_preserves_defects", id_shift_preserves),
    ],
    "kontsevich": [("weights_round_trip", id_weights), ("vector_field_properties", id_vector_fields)],
    "star": [
        ("first_order_condition", id_star_first_order),
        ("associativity", id_star_associative),
        ("moyal_oracle", id_moyal),
    ],
    "equivariance": [
        ("action_law", id_action_law),
        ("action_commutes_delta_sigma", id_action_commutes),
        ("B_transform_y_linear", id_B_transform),
        ("pipeline_equivariance", id_equivariance),
    ],
}
SUITE_NAMES = ("all",) + tuple(SUITES)


def applicable(spec, suite):
    if suite == "star":
        return spec.has_poisson()
    if suite == "equivariance":
        return spec.group is not None
    return True


def run(spec, suite="all"):
    """{identity name: {"status": pass|fail|capacity|skipped, "detail": str}}."""
    from formality.errors import ValidationError

    if suite not in SUITE_NAMES:
        raise ValidationError(f"unknown suite {suite!r} (choose from {', '.join(SUITE_NAMES)})")
    names = list(SUITES) if suite == "all" else [suite]
    ctx = Context(spec)
    out = {}
    for s in names:
        for name, fn in SUITES[s]:
            key = f"{s}.{name}"
            if not applicable(spec, s):
                reason = "no poisson table" if s == "star" else "no group"
                out[key] = {"status": "skipped", "detail": reason}
                continue
            try:
                ok, detail = fn(ctx)
                out[key] = {"status": "pass" if ok else "fail", "detail": detail}
            except CapacityError as exc:
                out[key] = {"status": "capacity", "detail": str(exc)}
            except PreconditionError as exc:
                out[key] = {"status": "fail", "detail": f"precondition: {exc}"}
    return out


__all__ = ["SUITES", "SUITE_NAMES", "run", "first_term"]
