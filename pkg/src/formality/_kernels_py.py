"""Pure-Python sparse term kernels.

A *term dict* maps ``(y, dx, x, h)`` to an exact rational, where ``y`` and ``x``
are exponent tuples of length d, ``dx`` is a bitmask of the odd generators
(bit i set means dx^{i+1} present, stored in increasing order) and ``h`` is the
power of the formal parameter.  Every function returns a fresh dict and never
stores zero coefficients.

The compiled module ``_kernels`` implements the same functions with the same
signatures; ``formality.kernels`` picks whichever is available.
"""

from gmpy2 import mpq

_SIGN_CACHE = {}


def wedge_sign(ma, mb):
    """Sign of dx^A ^ dx^B relative to the sorted union (0 if they overlap)."""
    key = (ma, mb)
    s = _SIGN_CACHE.get(key)
    if s is not None:
        return s
    if ma & mb:
        s = 0
    else:
        n = 0
        b = mb
        while b:
            low = b & -b
            # bits of A strictly above this bit of B
            n += bin(ma & ~((low << 1) - 1)).count("1")
            b ^= low
        s = -1 if n & 1 else 1
    _SIGN_CACHE[key] = s
    return s


def add_into(acc, a, scale=1):
    """acc += scale * a, in place."""
    for k, c in a.items():
        v = acc.get(k)
        v = c * scale if v is None else v + c * scale
        if v:
            acc[k] = v
        else:
            acc.pop(k, None)
    return acc


def scale(a, c):
    if not c:
        return {}
    return {k: v * c for k, v in a.items()}


def mul(a, b, ntrunc):
    """Graded-commutative product a*b, dropping y-degree above ntrunc (None: keep)."""
    out = {}
    if not a or not b:
        return out
    for (ya, ma, xa, ha), ca in a.items():
        da = sum(ya)
        for (yb, mb, xb, hb), cb in b.items():
            if ma & mb:
                continue
            if ntrunc is not None and da + sum(yb) > ntrunc:
                continue
            s = wedge_sign(ma, mb)
            k = (
                tuple(p + q for p, q in zip(ya, yb)),
                ma | mb,
                tuple(p + q for p, q in zip(xa, xb)),
                ha + hb,
            )
            v = ca * cb if s > 0 else -(ca * cb)
            w = out.get(k)
            v = v if w is None else w + v
            if v:
                out[k] = v
            else:
                del out[k]
    return out


def dy(a, beta):
    """Multi-derivative d^beta/dy^beta (beta an exponent tuple)."""
    if not any(beta):
        return dict(a)
    out = {}
    for (y, m, x, h), c in a.items():
        f = 1
        ny = []
        ok = True
        for e, b in zip(y, beta):
            if b > e:
                ok = False
                break
            for t in range(b):
                f *= e - t
            ny.append(e - b)
        if not ok:
            continue
        k = (tuple(ny), m, x, h)
        v = out.get(k)
        v = c * f if v is None else v + c * f
        if v:
            out[k] = v
        else:
            del out[k]
    return out


def dx(a, i):
    """Partial derivative in the base coordinate x^{i+1}."""
    out = {}
    for (y, m, x, h), c in a.items():
        e = x[i]
        if not e:
            continue
        nx = x[:i] + (e - 1,) + x[i + 1:]
        k = (y, m, nx, h)
        v = out.get(k)
        v = c * e if v is None else v + c * e
        if v:
            out[k] = v
        else:
            del out[k]
    return out


def dx_wedge(i, a):
    """dx^{i+1} ^ a (form generator multiplied from the left)."""
    bit = 1 << i
    below = bit - 1
    out = {}
    for (y, m, x, h), c in a.items():
        if m & bit:
            continue
        v = -c if bin(m & below).count("1") & 1 else c
        out[(y, m | bit, x, h)] = v
    return out


def interior(a, i):
    """Left contraction with the vector field d/dx^{i+1}."""
    bit = 1 << i
    below = bit - 1
    out = {}
    for (y, m, x, h), c in a.items():
        if not m & bit:
            continue
        v = -c if bin(m & below).count("1") & 1 else c
        out[(y, m ^ bit, x, h)] = v
    return out


def y_times(a, i, ntrunc):
    """Multiply by y^{i+1}."""
    out = {}
    for (y, m, x, h), c in a.items():
        if ntrunc is not None and sum(y) + 1 > ntrunc:
            continue
        ny = y[:i] + (y[i] + 1,) + y[i + 1:]
        out[(ny, m, x, h)] = c
    return out


def delta_inv(a, d, ntrunc):
    """Homotopy operator: y^k i(d/dx^k) a, divided by p+q on each (p, q) component."""
    out = {}
    for (y, m, x, h), c in a.items():
        if not m:
            continue
        p = sum(y)
        if ntrunc is not None and p + 1 > ntrunc:
            continue
        q = bin(m).count("1")
        w = mpq(1, p + q)
        b = m
        while b:
            low = b & -b
            i = low.bit_length() - 1
            sign = -1 if bin(m & (low - 1)).count("1") & 1 else 1
            ny = y[:i] + (y[i] + 1,) + y[i + 1:]
            k = (ny, m ^ low, x, h)
            v = c * w * sign
            old = out.get(k)
            v = v if old is None else old + v
            if v:
                out[k] = v
            else:
                del out[k]
            b ^= low
    return out


def truncate(a, ntrunc):
    return {k: c for k, c in a.items() if sum(k[0]) <= ntrunc}
