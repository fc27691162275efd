"""Seeded generators of probe elements for identity checks."""

import random

from gmpy2 import mpq

from formality.graded import FiberPolyOp, FiberPolyVec, FormSection


def rand_exp(rng, d, maxdeg):
    deg = rng.randint(0, maxdeg)
    e = [0] * d
    for _ in range(deg):
        e[rng.randrange(d)] += 1
    return tuple(e)


def rand_spoly(rng, d, ydeg, nterms=3, q=None, xdeg=1, hbar=False):
    out = {}
    for _ in range(nterms):
        y = rand_exp(rng, d, ydeg)
        if q is None:
            m = rng.randrange(1 << d)
        else:
            idx = rng.sample(range(d), q)
            m = sum(1 << i for i in idx)
        x = rand_exp(rng, d, xdeg)
        h = rng.randint(0, 1) if hbar else 0
        c = mpq(rng.randint(-5, 5), rng.randint(1, 3))
        if c:
            out[(y, m, x, h)] = out.get((y, m, x, h), 0) + c
    return {k: v for k, v in out.items() if v}


def rand_section(rng, d, N, ydeg=None, q=None, nterms=3, xdeg=1):
    return FormSection(d, N, {(): rand_spoly(rng, d, N if ydeg is None else ydeg, nterms, q, xdeg)})


def rand_vec(rng, d, N, k, ydeg=None, q=None, nterms=3, xdeg=1):
    data = {}
    for _ in range(nterms):
        idx = tuple(sorted(rng.sample(range(d), k + 1)))
        sp = rand_spoly(rng, d, N if ydeg is None else ydeg, 1, q, xdeg)
        for key, c in sp.items():
            data.setdefault(idx, {})
            data[idx][key] = data[idx].get(key, 0) + c
    return FiberPolyVec(d, N, data)


def rand_op(rng, d, N, k, ydeg=None, q=None, nterms=3, order=2, xdeg=1):
    data = {}
    for _ in range(nterms):
        slots = tuple(rand_exp(rng, d, order) for _ in range(k + 1))
        sp = rand_spoly(rng, d, N if ydeg is None else ydeg, 1, q, xdeg)
        for key, c in sp.items():
            data.setdefault(slots, {})
            data[slots][key] = data[slots].get(key, 0) + c
    return FiberPolyOp(d, N, data)


def make_rng(seed):
    return random.Random(seed)


def monomials(d, maxdeg):
    """Exponent tuples of total degree <= maxdeg in graded-lex order."""
    out = []

    def rec(prefix, left, pos):
        if pos == d - 1:
            out.append(tuple(prefix + [left]))
            return
        for e in range(left, -1, -1):
            rec(prefix + [e], left - e, pos + 1)

    for deg in range(maxdeg + 1):
        rec([], deg, 0)
    return out
