"""End-to-end orchestration: manifold spec -> Fedosov state -> star product -> reports.

Spec files are YAML with a schema version::

    version: 1
    dimension: 2
    trunc_order: 6
    hbar_order: 2
    probe_degree: 4
    christoffels:          # "k,i,j" (1-based) -> Gamma^k_ij; the (k,j,i) entry may be omitted
      "2,1,1": "x2"
    poisson:               # "i,j" (1-based) -> alpha^ij; the (j,i) entry may be omitted
      "1,2": "1"
    group:                 # optional generators x -> L x + t
      - matrix: [[0, -1], [1, 0]]
        translation: [0, 0]
"""

import json
from math import factorial
from fractions import Fraction

import yaml
from gmpy2 import mpq

from formality.errors import CapacityError, ValidationError
from formality.fedosov import ConnectionData
from formality.graded import CoeffPoly, FiberPolyVec, zero_exp
from formality.polystr import format_rational, parse_terms

SPEC_VERSION = 1
MAX_HBAR_ORDER = 2
_KEYS = ("version", "dimension", "trunc_order", "hbar_order", "probe_degree",
         "christoffels", "poisson", "group", "name")


# ---------------------------------------------------------------------------
# spec loading


class _Located:
    """Plain data from a YAML node tree plus the source line of every field path."""

    def __init__(self, text):
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"line {mark.line + 1}: " if mark is not None else ""
            raise ValidationError(f"spec parse error: {where}{getattr(exc, 'problem', exc)}") from exc
        self.lines = {}
        self.data = self._convert(node, ()) if node is not None else {}

    def _convert(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for knode, vnode in node.value:
                key = knode.value
                if key in out:
                    raise ValidationError(f"spec line {knode.start_mark.line + 1}: duplicate key {key!r}")
                out[key] = self._convert(vnode, path + (key,))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._convert(v, path + (i,)) for i, v in enumerate(node.value)]
        return node.value

    def err(self, path, msg):
        line = None
        for n in range(len(path), -1, -1):
            line = self.lines.get(tuple(path[:n]))
            if line is not None:
                break
        field = ".".join(str(p) for p in path) or "<root>"
        return ValidationError(f"spec line {line}, field {field}: {msg}")


def _int_field(loc, key, lo, default=None):
    raw = loc.data.get(key, default)
    if raw is None:
        raise loc.err((key,), "missing required field")
    try:
        val = int(str(raw))
    except ValueError:
        raise loc.err((key,), f"expected an integer, got {raw!r}") from None
    if val < lo:
        raise loc.err((key,), f"must be >= {lo}")
    return val


def _indices(loc, path, raw, n, d):
    parts = [p.strip() for p in str(raw).split(",")]
    try:
        idx = tuple(int(p) for p in parts)
    except ValueError:
        raise loc.err(path, f"index key {raw!r} must be {n} comma-separated integers") from None
    if len(idx) != n or not all(1 <= i <= d for i in idx):
        raise loc.err(path, f"index key {raw!r} must be {n} integers in 1..{d}")
    return tuple(i - 1 for i in idx)


def _poly(loc, path, raw, d):
    try:
        return CoeffPoly(d, {(x, h): c for (y, m, x, h), c in
                             parse_terms(str(raw), d, allowed=("x",)).items()})
    except ValidationError as exc:
        raise loc.err(path, str(exc)) from None


def _rational(loc, path, raw):
    try:
        return mpq(Fraction(str(raw)))
    except (ValueError, ZeroDivisionError):
        raise loc.err(path, f"expected an exact rational, got {raw!r}") from None


class ManifoldSpec:
    """Validated pipeline input; index tables are stored 0-based."""

    def __init__(self, d, N, hbar_order, probe_degree, christoffels, poisson, group=None,
                 name="", echo=None):
        self.d = d
        self.N = N
        self.hbar_order = hbar_order
        self.probe_degree = probe_degree
        self.name = name
        self.conn = ConnectionData(d, christoffels)
        self.poisson = dict(poisson)
        self.group = group
        self.echo = echo if echo is not None else {}

    @property
    def alpha(self):
        """The Poisson bivector as a base-level FiberPolyVec."""
        data = {}
        for (i, j), poly in self.poisson.items():
            if i < j and poly:
                data[(i, j)] = {(x, 0, zero_exp(self.d), h): c for (x, h), c in poly.items()}
        return FiberPolyVec(self.d, None, data, "x")

    def has_poisson(self):
        return bool(self.poisson)

    def replace(self, **kw):
        new = object.__new__(ManifoldSpec)
        new.__dict__.update(self.__dict__)
        new.__dict__.update(kw)
        if "N" in kw:
            new.echo = dict(self.echo, trunc_order=kw["N"])
        if "hbar_order" in kw:
            new.echo = dict(new.echo, hbar_order=kw["hbar_order"])
        return new


def load_spec(source, require_poisson=False):
    """Parse and validate a spec from a path or from YAML text (if it contains a newline)."""
    if "\n" not in str(source):
        try:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ValidationError(f"cannot read spec file {source}: {exc.strerror}") from exc
    else:
        text = source
    loc = _Located(text)
    if not isinstance(loc.data, dict):
        raise loc.err((), "spec must be a mapping")
    for key in loc.data:
        if key not in _KEYS:
            raise loc.err((key,), "unknown field")
    version = _int_field(loc, "version", 1)
    if version != SPEC_VERSION:
        raise loc.err(("version",), f"unsupported schema version {version} (expected {SPEC_VERSION})")
    d = _int_field(loc, "dimension", 1)
    N = _int_field(loc, "trunc_order", 2, default=6)
    hbar = _int_field(loc, "hbar_order", 0, default=2)
    probe = _int_field(loc, "probe_degree", 0, default=3)

    gamma = {}
    raw = loc.data.get("christoffels") or {}
    if not isinstance(raw, dict):
        raise loc.err(("christoffels",), "expected a mapping of 'k,i,j' keys")
    for key, val in raw.items():
        k, i, j = _indices(loc, ("christoffels", key), key, 3, d)
        gamma[(k, i, j)] = _poly(loc, ("christoffels", key), val, d)
    for (k, i, j), poly in list(gamma.items()):
        other = gamma.get((k, j, i))
        if other is None:
            gamma[(k, j, i)] = poly
        elif other != poly:
            raise loc.err(("christoffels",),
                          f"symmetry violation: Gamma^{k + 1}_{i + 1}{j + 1} = {poly} but "
                          f"Gamma^{k + 1}_{j + 1}{i + 1} = {other}")

    poisson = {}
    raw = loc.data.get("poisson") or {}
    if not isinstance(raw, dict):
        raise loc.err(("poisson",), "expected a mapping of 'i,j' keys")
    for key, val in raw.items():
        i, j = _indices(loc, ("poisson", key), key, 2, d)
        poly = _poly(loc, ("poisson", key), val, d)
        if i == j and poly:
            raise loc.err(("poisson", key), "antisymmetry violation: nonzero diagonal entry")
        poisson[(i, j)] = poly
    for (i, j), poly in list(poisson.items()):
        other = poisson.get((j, i))
        if other is None:
            poisson[(j, i)] = -poly
        elif other != -poly:
            raise loc.err(("poisson",),
                          f"antisymmetry violation: alpha^{i + 1}{j + 1} = {poly} but "
                          f"alpha^{j + 1}{i + 1} = {other}")
    poisson = {k: v for k, v in poisson.items() if v}

    group = None
    raw = loc.data.get("group")
    if raw is not None:
        group = _load_group(loc, raw, d)

    echo = {
        "version": version,
        "dimension": d,
        "trunc_order": N,
        "hbar_order": hbar,
        "probe_degree": probe,
        "christoffels": {f"{k + 1},{i + 1},{j + 1}": str(p) for (k, i, j), p in sorted(gamma.items()) if p},
        "poisson": {f"{i + 1},{j + 1}": str(p) for (i, j), p in sorted(poisson.items()) if i < j},
        "group": None if group is None else [
            {"matrix": [[format_rational(v) for v in row] for row in g.L],
             "translation": [format_rational(v) for v in g.t]} for g in group.elements],
    }
    name = str(loc.data.get("name", ""))
    if name:
        echo["name"] = name
    spec = ManifoldSpec(d, N, hbar, probe, gamma, poisson, group, name, echo)
    if require_poisson:
        check_poisson(spec)
    return spec


def _load_group(loc, raw, d):
    from formality.equivariance import AffineAction, GroupElement

    if not isinstance(raw, list) or not raw:
        raise loc.err(("group",), "expected a nonempty list of generators")
    gens = []
    for n, entry in enumerate(raw):
        path = ("group", n)
        if not isinstance(entry, dict) or "matrix" not in entry:
            raise loc.err(path, "generator needs a 'matrix' entry")
        for key in entry:
            if key not in ("matrix", "translation"):
                raise loc.err(path + (key,), "unknown field")
        M = entry["matrix"]
        if not isinstance(M, list) or len(M) != d or any(not isinstance(r, list) or len(r) != d for r in M):
            raise loc.err(path + ("matrix",), f"expected a {d}x{d} matrix")
        L = [[_rational(loc, path + ("matrix", i, j), v) for j, v in enumerate(row)]
             for i, row in enumerate(M)]
        t = entry.get("translation", [0] * d)
        if not isinstance(t, list) or len(t) != d:
            raise loc.err(path + ("translation",), f"expected {d} entries")
        t = [_rational(loc, path + ("translation", i), v) for i, v in enumerate(t)]
        try:
            gens.append(GroupElement(L, t))
        except ValidationError as exc:
            raise loc.err(path, str(exc)) from None
    try:
        return AffineAction.generated_by(gens)
    except ValidationError as exc:
        raise loc.err(("group",), str(exc)) from None


def check_poisson(spec):
    """Raise ValidationError naming the first nonzero component of [alpha, alpha]."""
    from formality.brackets import schouten

    if not spec.poisson:
        raise ValidationError("a star product needs a nonzero 'poisson' table")
    al = spec.alpha
    sq = schouten(al, al)
    if not sq.is_zero():
        slot = min(sq.data, key=lambda s: s)
        comp = FiberPolyVec(spec.d, None, {slot: sq.data[slot]}, "x")
        idx = "".join(str(i + 1) for i in slot)
        raise ValidationError(f"poisson bivector is not Poisson: [alpha, alpha] has component "
                              f"{idx} = {comp.to_table()[0][1]}")


# ---------------------------------------------------------------------------
# star product


def global_morphism(st, arity_cap=2):
    """Twisted, tau-lifted and contracted morphism T_poly(R^d) -> fiber-zero operators.

    Cached on the Fedosov state.
    """
    from formality.brackets import bracket
    from formality.kontsevich import assemble_fiber_morphism
    from formality.linfinity import (DglaHandle, MaurerCartanElement, compose_lift,
                                     contract_to_fiber_zero, twist)

    cache = st.__dict__.setdefault("_morphisms", {})
    hit = cache.get(arity_cap)
    if hit is None:
        F = assemble_fiber_morphism(arity_cap, de_rham=True)
        tw = twist(F, MaurerCartanElement(st.B(), st.d + 1))
        comp = compose_lift(tw, st, DglaHandle("T_poly(R^d)", None, bracket))
        hit = cache[arity_cap] = contract_to_fiber_zero(comp, st)
    return hit


class StarProduct:
    """f * g = sum_n hbar^n C_n(f, g) with base-level bidifferential operators C_n."""

    def __init__(self, d, coeffs, alpha=None, state=None):
        self.d = d
        self.C = list(coeffs)
        self.alpha = alpha
        self.state = state

    @property
    def order(self):
        return len(self.C) - 1

    def apply(self, f, g):
        """[C_0(f, g), .., C_n(f, g)] for base-level sections f, g."""
        from formality.graded import apply_op

        return [apply_op(C, [f, g]) for C in self.C]

    def star(self, f, g):
        """The truncated product as one section carrying hbar powers."""
        out = None
        for n, val in enumerate(self.apply(f, g)):
            val = val.map_coeffs(lambda sp, _n=n: {(y, m, x, h + _n): c for (y, m, x, h), c in sp.items()})
            out = val if out is None else out + val
        return out

    def associativity_defect(self, f, g, h):
        """Per hbar order n <= order: sum_{i+j=n} C_i(C_j(f, g), h) - C_i(f, C_j(g, h))."""
        from formality.graded import apply_op

        fg = self.apply(f, g)
        gh = self.apply(g, h)
        out = []
        for n in range(self.order + 1):
            acc = None
            for i in range(n + 1):
                j = n - i
                t = apply_op(self.C[i], [fg[j], h]) - apply_op(self.C[i], [f, gh[j]])
                acc = t if acc is None else acc + t
            out.append(acc)
        return out

    def first_order_defect(self, f, g):
        """C_1(f, g) - C_1(g, f) - {f, g}_alpha."""
        from formality.graded import apply_op

        return (apply_op(self.C[1], [f, g]) - apply_op(self.C[1], [g, f])) - poisson_bracket(self.alpha, f, g)

    def tables(self):
        """{"C<n>": {operator slot text: coefficient polynomial}}, e.g. "[d1|d2]": "1/2"."""
        from formality.polystr import format_terms

        return {f"C{n}": {C._slot_text(s): format_terms(sp, yname="x") for s, sp in C.data.items()}
                for n, C in enumerate(self.C)}


def poisson_bracket(alpha, f, g):
    """alpha^ij d_i f d_j g for a base bivector and base functions."""
    from formality.graded import FiberPolyOp, apply_op

    d = alpha.d
    data = {}
    for (i, j), sp in alpha.data.items():
        ei = tuple(1 if t == i else 0 for t in range(d))
        ej = tuple(1 if t == j else 0 for t in range(d))
        for key, c in sp.items():
            data.setdefault((ei, ej), {})[key] = c
            data.setdefault((ej, ei), {})[key] = -c
    return apply_op(FiberPolyOp(d, None, data, "x"), [f, g])


def probe_functions(d, maxdeg):
    from formality.graded import base_function
    from formality.probes import monomials

    return [base_function(d, CoeffPoly(d, {(e, 0): 1})) for e in monomials(d, maxdeg)]


def build_star_product(spec, verify=True, assoc_degree=None):
    """Star product of the spec's Poisson bivector, through hbar^hbar_order.

    With ``verify`` the first-order condition is checked on all probe pairs
    and associativity on all probe triples of degree <= ``assoc_degree``
    (default: the spec's probe degree); failures raise ConsistencyError.
    """
    from formality.equivariance import require_invariant_connection
    from formality.errors import ConsistencyError
    from formality.fedosov import mu_project, solve_A
    from formality.graded import multiplication

    n_max = spec.hbar_order
    if n_max > MAX_HBAR_ORDER:
        raise CapacityError(f"hbar_order {n_max} exceeds the implemented order {MAX_HBAR_ORDER} "
                            f"(needs structure maps of arity {n_max})")
    check_poisson(spec)
    if spec.group is not None:
        require_invariant_connection(spec.group, spec.conn)
    d = spec.d
    coeffs = [multiplication(d, None, "x")]
    st = solve_A(spec.conn, spec.N)
    al = spec.alpha
    if n_max >= 1:
        U = global_morphism(st, max(n_max, 1) if n_max >= 2 else 1)
        for n in range(1, n_max + 1):
            val = U(*([al] * n))
            coeffs.append(mu_project(val, st) * mpq(1, factorial(n)))
    sp = StarProduct(d, coeffs, al, st)
    if verify:
        probes = probe_functions(d, spec.probe_degree)
        if n_max >= 1:
            for f in probes:
                for g in probes:
                    bad = sp.first_order_defect(f, g)
                    if not bad.is_zero():
                        raise ConsistencyError(f"first-order condition fails on ({f}, {g}): {bad}")
        small = probe_functions(d, spec.probe_degree if assoc_degree is None else assoc_degree)
        for f in small:
            for g in small:
                for h in small:
                    for n, bad in enumerate(sp.associativity_defect(f, g, h)):
                        if not bad.is_zero():
                            raise ConsistencyError(
                                f"associativity fails at hbar^{n} on ({f}, {g}, {h}): {bad}")
    return sp


def moyal_coefficients(alpha, order):
    """Closed form for constant alpha: C_n = (1/n!) (1/2)^n alpha^{i1 j1}..alpha^{in jn} d_I (x) d_J."""
    from itertools import product as iproduct

    from formality.graded import FiberPolyOp, multiplication

    d = alpha.d
    full = {}
    for (i, j), sp in alpha.data.items():
        if any(any(k[0]) for k in sp):
            raise ValidationError("the closed form needs a constant bivector")
        c = sum(sp.values())
        full[(i, j)] = c
        full[(j, i)] = -c
    out = [multiplication(d, None, "x")]
    pairs = list(full.items())
    for n in range(1, order + 1):
        data = {}
        for combo in iproduct(pairs, repeat=n):
            c = mpq(1, factorial(n) * 2 ** n)
            a = [0] * d
            b = [0] * d
            for (i, j), v in combo:
                c *= v
                a[i] += 1
                b[j] += 1
            key = (tuple(a), tuple(b))
            z = zero_exp(d)
            sp = data.setdefault(key, {})
            sp[(z, 0, z, 0)] = sp.get((z, 0, z, 0), 0) + c
        data = {k: {kk: vv for kk, vv in sp.items() if vv} for k, sp in data.items()}
        out.append(FiberPolyOp(d, None, {k: v for k, v in data.items() if v}, "x"))
    return out


# ---------------------------------------------------------------------------
# suites and reports


def run_identity_suite(spec, suite="all"):
    """Per-identity status for the named suite (``all`` runs every applicable one)."""
    from formality import suites

    return suites.run(spec, suite)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return "inf" if obj == float("inf") else obj
    if type(obj).__name__ == "mpq" or isinstance(obj, Fraction):
        return format_rational(obj)
    return str(obj)


def emit_report(results, out=None):
    """Deterministic JSON text (sorted keys, rationals as p/q); also written to ``out`` if given."""
    text = json.dumps(_jsonable(results), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    if out is not None:
        try:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise ValidationError(f"cannot write report {out}: {exc.strerror}") from exc
    return text


def weight_audit():
    from formality.kontsevich import solve_weights

    t = solve_weights()
    return t.to_json()


def valid_to_report(st):
    return {"A": st.A.valid_to, "N": st.N, "iterations": st.iterations}
