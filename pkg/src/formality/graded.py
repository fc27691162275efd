"""Exact sparse graded objects.

Every graded element is a map ``slot -> term dict`` (see :mod:`formality.kernels`
for the term-dict layout).  The slot key depends on the kind:

* ``FormSection``: the single slot ``()``;
* ``FiberPolyVec``: a strictly increasing tuple of 0-based indices
  ``(j0, .., jk)`` standing for the wedge of d/dy^{j+1}; ``()`` is degree -1;
* ``FiberPolyOp``: a tuple of k+1 exponent tuples, one derivative multi-index
  per operator slot; ``()`` is degree -1.

Coefficients (the term dicts) carry the dependence on y, dx, x and hbar.  In
the polyvector and operator kinds the dx factor always stands to the left of
the slot symbols.

``family`` is ``"y"`` for fiberwise objects and ``"x"`` for base-level ones.
A base-level object stores its x-dependence in the y position, so that every
fiberwise routine applies verbatim; it has no dx factors and is normally
untruncated (``N=None``).

Values are treated as immutable once constructed.
"""

import math
from itertools import permutations

from gmpy2 import mpq

from formality import kernels as K
from formality.errors import PreconditionError, StructuralError
from formality.polystr import format_rational, format_terms, parse_terms, term_order_key

INF = math.inf

_RATIONAL_TYPES = (int, mpq, type(mpq(1)))


def as_rational(c):
    try:
        return mpq(c)
    except (TypeError, ValueError) as exc:
        raise StructuralError(f"not an exact rational: {c!r}") from exc


def zero_exp(d):
    return (0,) * d


def unit_exp(d, i, e=1):
    return tuple(e if j == i else 0 for j in range(d))


def perm_sign(seq):
    """Sign of the permutation sorting ``seq``; 0 if it has repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    s = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                s = -s
    return s


def _mask(idx):
    m = 0
    for i in idx:
        m |= 1 << i
    return m


def _ydeg(spoly):
    return [sum(k[0]) for k in spoly]


class CoeffPoly:
    """Polynomial in x^1..x^d and hbar with rational coefficients."""

    __slots__ = ("d", "_terms")

    def __init__(self, d, terms=None):
        self.d = d
        out = {}
        for (x, h), c in (terms or {}).items():
            x = tuple(int(e) for e in x)
            if len(x) != d or min(x, default=0) < 0 or h < 0:
                raise StructuralError(f"bad exponent {x}, hbar^{h} for d={d}")
            c = as_rational(c)
            if c:
                out[(x, int(h))] = out.get((x, int(h)), 0) + c
                if not out[(x, int(h))]:
                    del out[(x, int(h))]
        self._terms = out

    @classmethod
    def parse(cls, text, d):
        terms = parse_terms(text, d, allowed=("x", "hbar"))
        return cls.from_spoly(d, terms)

    @classmethod
    def from_spoly(cls, d, spoly):
        """Coefficient part of a term dict without y or dx dependence."""
        out = {}
        for (y, m, x, h), c in spoly.items():
            if any(y) or m:
                raise StructuralError("term dict depends on y or dx")
            out[(x, h)] = c
        return cls(d, out)

    @classmethod
    def const(cls, d, c):
        return cls(d, {(zero_exp(d), 0): c})

    def to_spoly(self):
        z = zero_exp(self.d)
        return {(z, 0, x, h): c for (x, h), c in self._terms.items()}

    def items(self):
        return self._terms.items()

    def __bool__(self):
        return bool(self._terms)

    def __eq__(self, other):
        if isinstance(other, _RATIONAL_TYPES):
            other = CoeffPoly.const(self.d, other)
        return isinstance(other, CoeffPoly) and self.d == other.d and self._terms == other._terms

    def __hash__(self):
        return hash((self.d, frozenset(self._terms.items())))

    def _lift(self, other):
        if isinstance(other, CoeffPoly):
            if other.d != self.d:
                raise StructuralError("dimension mismatch")
            return other
        return CoeffPoly.const(self.d, other)

    def __add__(self, other):
        other = self._lift(other)
        return CoeffPoly.from_spoly(self.d, K.add_into(self.to_spoly(), other.to_spoly()))

    __radd__ = __add__

    def __neg__(self):
        return CoeffPoly(self.d, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        return CoeffPoly.from_spoly(self.d, K.mul(self.to_spoly(), other.to_spoly(), None))

    __rmul__ = __mul__

    def diff(self, i):
        return CoeffPoly.from_spoly(self.d, K.dx(self.to_spoly(), i))

    def substitute(self, images):
        """Compose with x^i -> images[i] (CoeffPolys)."""
        out = CoeffPoly(self.d)
        for (x, h), c in self._terms.items():
            t = CoeffPoly(self.d, {(zero_exp(self.d), h): c})
            for i, e in enumerate(x):
                for _ in range(e):
                    t = t * images[i]
            out = out + t
        return out

    def degree(self):
        return max((sum(x) for x, _ in self._terms), default=-1)

    def __str__(self):
        return format_terms(self.to_spoly())

    def __repr__(self):
        return f"CoeffPoly({self.d}, {str(self)!r})"


class Graded:
    """Common behaviour of the three kinds of graded element."""

    kind = None
    __slots__ = ("d", "N", "family", "_data", "valid_to")

    def __init__(self, d, N=None, data=None, family="y", valid_to=None):
        if family not in ("x", "y"):
            raise StructuralError(f"unknown family {family!r}")
        self.d = d
        self.N = N
        self.family = family
        clean = {}
        dropped = False
        for slot, sp in (data or {}).items():
            kept = {k: c for k, c in sp.items() if c and (N is None or sum(k[0]) <= N)}
            if N is not None and not dropped:
                dropped = any(c and sum(k[0]) > N for k, c in sp.items())
            sp = kept
            if sp:
                clean[slot] = sp
        self._data = clean
        # valid_to: every term of y-degree <= valid_to is exact; INF means no
        # truncation loss at all
        v = INF if valid_to is None else valid_to
        self.valid_to = min(v, N) if dropped else v

    # -- construction helpers -------------------------------------------

    def _new(self, data, valid_to=None):
        return type(self)(self.d, self.N, data, self.family, valid_to)

    def zero(self):
        return self._new({})

    def with_valid_to(self, v):
        return self._new(self._data, min(v, self.valid_to))

    @property
    def data(self):
        return self._data

    def slot_degree(self, slot):
        return -1 if self.kind == "sec" else len(slot) - 1

    # -- structural checks -----------------------------------------------

    def _check(self, other, same_kind=True):
        if not isinstance(other, Graded):
            raise StructuralError(f"expected a graded element, got {type(other).__name__}")
        if self.d != other.d:
            raise StructuralError(f"dimension mismatch: {self.d} vs {other.d}")
        if self.N != other.N:
            raise StructuralError(f"truncation mismatch: {self.N} vs {other.N}")
        if self.family != other.family:
            raise StructuralError("fiber/base family mismatch")
        if same_kind and self.kind != other.kind:
            raise StructuralError(f"kind mismatch: {self.kind} vs {other.kind}")

    # -- linear structure --------------------------------------------------

    def __add__(self, other):
        self._check(other)
        data = {s: dict(sp) for s, sp in self._data.items()}
        for s, sp in other._data.items():
            K.add_into(data.setdefault(s, {}), sp)
        return self._new(data, min(self.valid_to, other.valid_to))

    def __neg__(self):
        return self._new({s: K.scale(sp, -1) for s, sp in self._data.items()}, self.valid_to)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        if isinstance(c, CoeffPoly):
            sp = c.to_spoly()
            return self._new({s: K.mul(sp, v, self.N) for s, v in self._data.items()}, self.valid_to)
        if isinstance(c, Graded):
            return NotImplemented
        c = as_rational(c)
        return self._new({s: K.scale(v, c) for s, v in self._data.items()}, self.valid_to)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, int) and other == 0:
            return not self._data
        return (
            isinstance(other, Graded)
            and self.kind == other.kind
            and self.d == other.d
            and self.N == other.N
            and self.family == other.family
            and self._data == other._data
        )

    def __hash__(self):
        return hash((self.kind, self.d, self.N, self.family,
                     frozenset((s, frozenset(sp.items())) for s, sp in self._data.items())))

    def __bool__(self):
        return bool(self._data)

    def is_zero(self):
        return not self._data

    # -- term-level maps ---------------------------------------------------

    def map_coeffs(self, fn, valid_to=None):
        """Apply a linear term-dict map to every slot coefficient."""
        data = {}
        for s, sp in self._data.items():
            r = fn(sp)
            if r:
                data[s] = r
        return self._new(data, self.valid_to if valid_to is None else valid_to)

    def select(self, pred):
        """Keep terms with ``pred(slot, key)`` true."""
        data = {}
        for s, sp in self._data.items():
            r = {k: c for k, c in sp.items() if pred(s, k)}
            if r:
                data[s] = r
        return self._new(data, self.valid_to)

    def truncated(self, v):
        """Drop y-degrees above v (returned element is exact through v)."""
        if v == INF:
            return self
        out = self.select(lambda s, k: sum(k[0]) <= v)
        if self.max_ydeg() > v:
            out.valid_to = min(self.valid_to, v)
        return out

    def ydeg_part(self, p):
        return self.select(lambda s, k: sum(k[0]) == p)

    def form_part(self, q):
        return self.select(lambda s, k: bin(k[1]).count("1") == q)

    def degree_part(self, k):
        return self._new({s: sp for s, sp in self._data.items() if self.slot_degree(s) == k},
                         self.valid_to)

    def form_degrees(self):
        return sorted({bin(k[1]).count("1") for sp in self._data.values() for k in sp})

    def degrees(self):
        return sorted({self.slot_degree(s) for s in self._data})

    def min_ydeg(self):
        return min((sum(k[0]) for sp in self._data.values() for k in sp), default=INF)

    def max_ydeg(self):
        return max((sum(k[0]) for sp in self._data.values() for k in sp), default=-1)

    def max_hbar(self):
        return max((k[3] for sp in self._data.values() for k in sp), default=0)

    def slot_order(self, slot):
        return 0

    def max_order(self):
        return max((self.slot_order(s) for s in self._data), default=0)

    def homogeneous_degree(self):
        ks = self.degrees()
        if len(ks) > 1:
            raise PreconditionError(f"element is not homogeneous: degrees {ks}")
        return ks[0] if ks else None

    def equal_through(self, other, v=None):
        """Equality of all terms of y-degree at most v (default: common valid_to)."""
        self._check(other)
        if v is None:
            v = min(self.valid_to, other.valid_to)
        diff = self - other
        return diff.truncated(v).is_zero() if v != INF else diff.is_zero()

    def terms(self):
        """Flat view: ``(y, dx_indices, slot) -> CoeffPoly``.

        ``dx_indices`` is a 0-based increasing tuple.
        """
        out = {}
        for s, sp in self._data.items():
            for (y, m, x, h), c in sp.items():
                dxs = tuple(i for i in range(self.d) if m >> i & 1)
                key = (y, dxs, s)
                poly = out.setdefault(key, {})
                poly[(x, h)] = c
        return {k: CoeffPoly(self.d, v) for k, v in out.items()}

    # -- text --------------------------------------------------------------

    def _slot_text(self, s):
        return ""

    def __str__(self):
        if not self._data:
            return "0"
        yname = "x" if self.family == "x" else "y"
        parts = []
        for s in sorted(self._data, key=lambda s: (self.slot_degree(s), s)):
            coeff = format_terms(self._data[s], yname=yname)
            st = self._slot_text(s)
            if not st:
                parts.append(coeff)
            elif coeff == "1":
                parts.append(st)
            else:
                parts.append(f"({coeff})*{st}")
        return " + ".join(parts)

    def __repr__(self):
        return f"{type(self).__name__}(d={self.d}, N={self.N}, {self})"

    def to_table(self):
        """Deterministic JSON-ready list of ``[slot, coefficient string]``."""
        yname = "x" if self.family == "x" else "y"
        rows = []
        for s in sorted(self._data, key=lambda s: (self.slot_degree(s), s)):
            rows.append([self._slot_json(s), format_terms(self._data[s], yname=yname)])
        return rows

    def _slot_json(self, s):
        return []


class FormSection(Graded):
    """Element of Omega(M, SM): forms with values in formal power series in y."""

    kind = "sec"
    __slots__ = ()

    @classmethod
    def parse(cls, d, N, text, family="y"):
        if family == "x":
            return base_function(d, text)
        return cls(d, N, {(): parse_terms(text, d)}, family)

    @classmethod
    def const(cls, d, N, c, family="y"):
        z = zero_exp(d)
        return cls(d, N, {(): {(z, 0, z, 0): as_rational(c)}}, family)

    @classmethod
    def from_coeff(cls, d, N, poly, family="y"):
        return cls(d, N, {(): poly.to_spoly()}, family)

    @property
    def spoly(self):
        return self._data.get((), {})

    def as_vec(self):
        return FiberPolyVec(self.d, self.N, dict(self._data), self.family, self.valid_to)

    def as_op(self):
        return FiberPolyOp(self.d, self.N, dict(self._data), self.family, self.valid_to)


class FiberPolyVec(Graded):
    """Form-valued fiberwise polyvector field."""

    kind = "vec"
    __slots__ = ()

    @classmethod
    def from_terms(cls, d, N, terms, family="y"):
        """Build from ``{index tuple: coefficient}``.

        Index tuples are 0-based and need not be sorted; the permutation sign
        is absorbed into the coefficient and repeated indices give zero.
        Coefficients may be strings, rationals or :class:`CoeffPoly`.
        """
        data = {}
        for idx, c in terms.items():
            idx = tuple(idx)
            if any(not 0 <= i < d for i in idx):
                raise StructuralError(f"polyvector index out of range: {idx}")
            s = perm_sign(idx)
            if not s:
                continue
            K.add_into(data.setdefault(tuple(sorted(idx)), {}), _coeff_spoly(c, d, family), s)
        return cls(d, N, data, family)

    def slot_order(self, slot):
        return 1 if slot else 0

    def function_part(self):
        return FormSection(self.d, self.N, {(): self._data[()]} if () in self._data else {},
                           self.family, self.valid_to)

    def _slot_text(self, s):
        if not s:
            return ""
        return "^".join(f"d{i + 1}" for i in s)

    def _slot_json(self, s):
        return [i + 1 for i in s]


class FiberPolyOp(Graded):
    """Form-valued fiberwise polydifferential operator."""

    kind = "op"
    __slots__ = ()

    @classmethod
    def from_terms(cls, d, N, terms, family="y"):
        """Build from ``{(alpha_0, .., alpha_k): coefficient}`` with alpha_i exponent tuples."""
        data = {}
        for slots, c in terms.items():
            slots = tuple(tuple(int(e) for e in a) for a in slots)
            if any(len(a) != d or min(a) < 0 for a in slots):
                raise StructuralError(f"bad operator slot multi-index {slots}")
            K.add_into(data.setdefault(slots, {}), _coeff_spoly(c, d, family))
        return cls(d, N, data, family)

    def slot_order(self, slot):
        return max((sum(a) for a in slot), default=0)

    def function_part(self):
        return FormSection(self.d, self.N, {(): self._data[()]} if () in self._data else {},
                           self.family, self.valid_to)

    def _slot_text(self, s):
        if not s:
            return ""
        pieces = []
        for a in s:
            fac = [f"d{i + 1}" if e == 1 else f"d{i + 1}^{e}" for i, e in enumerate(a) if e]
            pieces.append("*".join(fac) if fac else "1")
        return "[" + " | ".join(pieces) + "]"

    def _slot_json(self, s):
        return [list(a) for a in s]


def _coeff_spoly(c, d, family="y"):
    if isinstance(c, dict):
        return dict(c)
    if isinstance(c, CoeffPoly):
        sp = c.to_spoly()
    elif isinstance(c, str):
        sp = parse_terms(c, d, allowed=("x", "hbar") if family == "x" else ("x", "y", "dx", "hbar"))
    else:
        z = zero_exp(d)
        c = as_rational(c)
        return {(z, 0, z, 0): c} if c else {}
    if family == "x":
        # base-level elements keep their x-dependence in the y position
        z = zero_exp(d)
        sp = {(x, 0, z, h): v for (y, m, x, h), v in sp.items()}
    return sp


# ---------------------------------------------------------------------------
# standard elements


def multiplication(d, N=None, family="y"):
    z = zero_exp(d)
    return FiberPolyOp(d, N, {(z, z): {(z, 0, z, 0): mpq(1)}}, family)


def y_var(d, N, i, family="y"):
    z = zero_exp(d)
    return FormSection(d, N, {(): {(unit_exp(d, i), 0, z, 0): mpq(1)}}, family)


def dx_var(d, N, i):
    z = zero_exp(d)
    return FormSection(d, N, {(): {(z, 1 << i, z, 0): mpq(1)}})


def partial(d, N, i, family="y"):
    """The vector field d/dy^{i+1} as an operator."""
    z = zero_exp(d)
    return FiberPolyOp(d, N, {(unit_exp(d, i),): {(z, 0, z, 0): mpq(1)}}, family)


# ---------------------------------------------------------------------------
# operations


def add(a, b):
    return a + b


def _mindeg(a):
    return a.min_ydeg() if a else INF


def truncation_cap(N, max_out_degree):
    """N if a result of the given possible y-degree may have lost terms, else INF."""
    if N is None or max_out_degree <= N:
        return INF
    return N


def _prod_valid(a, b, N):
    if not a or not b:
        return INF
    va = a.valid_to + b.min_ydeg()
    vb = b.valid_to + a.min_ydeg()
    return min(va, vb, truncation_cap(N, a.max_ydeg() + b.max_ydeg()))


def wedge_mul(a, b):
    """Graded-commutative product of two form-valued sections."""
    a._check(b)
    if a.kind != "sec" or b.kind != "sec":
        raise StructuralError("wedge_mul expects two FormSections")
    r = K.mul(a.spoly, b.spoly, a.N)
    return FormSection(a.d, a.N, {(): r}, a.family, _prod_valid(a, b, a.N))


def lmul(s, P):
    """Left multiplication of any graded element by a form-valued section."""
    if not isinstance(s, FormSection):
        raise StructuralError("left factor must be a FormSection")
    s._check(P, same_kind=False)
    data = {slot: K.mul(s.spoly, sp, P.N) for slot, sp in P.data.items()}
    return P._new(data, _prod_valid(s, P, P.N))


def apply_op(P, args):
    """Evaluate a homogeneous operator on k+1 form-valued sections.

    The operator's dx factor stays on the left and every argument's form
    factor is multiplied in order, so odd arguments pick up the Koszul sign of
    passing the earlier odd arguments only through the wedge product.
    """
    if P.kind != "op":
        raise StructuralError("apply_op expects a FiberPolyOp")
    args = list(args)
    for a in args:
        P._check(a, same_kind=False)
        if a.kind != "sec":
            raise StructuralError("operator arguments must be FormSections")
    if P.is_zero():
        return FormSection(P.d, P.N, {}, P.family)
    k = P.homogeneous_degree()
    if len(args) != k + 1:
        raise StructuralError(f"operator of degree {k} needs {k + 1} arguments, got {len(args)}")
    N = P.N
    out = {}
    cache = {}
    for slots, coeff in P.data.items():
        acc = coeff
        for i, alpha in enumerate(slots):
            key = (i, alpha)
            da = cache.get(key)
            if da is None:
                da = cache[key] = K.dy(args[i].spoly, alpha)
            acc = K.mul(acc, da, N)
            if not acc:
                break
        K.add_into(out, acc)
    valid = min(P.valid_to, truncation_cap(N, P.max_ydeg() + sum(a.max_ydeg() for a in args)))
    for i, a in enumerate(args):
        ordi = max((sum(s[i]) for s in P.data), default=0)
        valid = min(valid, a.valid_to - ordi)
    return FormSection(P.d, N, {(): out}, P.family, valid)


def grade_of(a):
    """Set of ``(q, k, p)`` triples of the terms present."""
    out = set()
    for s, sp in a.data.items():
        k = a.slot_degree(s)
        for (y, m, x, h) in sp:
            out.add((bin(m).count("1"), k, sum(y)))
    return out


def hkr_slots(idx, d):
    """Signed slot assignments of the HKR map for a sorted index tuple."""
    out = []
    for perm in permutations(range(len(idx))):
        sign = perm_sign(perm)
        out.append((tuple(unit_exp(d, idx[p]) for p in perm), sign))
    return out


def to_base(a):
    """Reinterpret a y- and dx-free fiberwise element as a base-level one."""
    data = {}
    for s, sp in a.data.items():
        new = {}
        for (y, m, x, h), c in sp.items():
            if any(y) or m:
                raise PreconditionError("to_base needs coefficients free of y and dx")
            new[(x, 0, zero_exp(a.d), h)] = c
        data[s] = new
    return type(a)(a.d, None, data, "x")


def from_base(a, N):
    """Embed a base-level element as a y-independent fiberwise element."""
    if a.family != "x":
        raise StructuralError("from_base expects a base-level element")
    data = {}
    for s, sp in a.data.items():
        data[s] = {(zero_exp(a.d), 0, y, h): c for (y, m, x, h), c in sp.items()}
    return type(a)(a.d, N, data, "y")


def base_function(d, text_or_poly):
    """Base-level section (family ``x``) from a polynomial string or CoeffPoly."""
    if isinstance(text_or_poly, CoeffPoly):
        spoly = text_or_poly.to_spoly()
    else:
        spoly = parse_terms(text_or_poly, d, allowed=("x", "hbar"))
    return to_base(FormSection(d, None, {(): spoly}))


def sorted_terms(spoly):
    return sorted(spoly.items(), key=lambda kv: term_order_key(kv[0]))


__all__ = [
    "INF",
    "CoeffPoly",
    "Graded",
    "FormSection",
    "FiberPolyVec",
    "FiberPolyOp",
    "add",
    "wedge_mul",
    "lmul",
    "apply_op",
    "grade_of",
    "multiplication",
    "y_var",
    "dx_var",
    "partial",
    "perm_sign",
    "hkr_slots",
    "to_base",
    "from_base",
    "base_function",
    "format_rational",
    "unit_exp",
    "zero_exp",
]
