# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sparse term kernels (same semantics as ``_kernels_py``)."""

from cpython.dict cimport PyDict_GetItem, PyDict_SetItem, PyDict_DelItem
from cpython.object cimport PyObject
from cpython.ref cimport Py_INCREF
from cpython.tuple cimport PyTuple_New, PyTuple_SET_ITEM, PyTuple_GET_ITEM

from gmpy2 import mpq

cdef dict _SIGN_CACHE = {}


cdef inline int _popcount(unsigned long v):
    cdef int n = 0
    while v:
        v &= v - 1
        n += 1
    return n


cdef int _wedge_sign(unsigned long ma, unsigned long mb):
    cdef unsigned long b, low
    cdef int n = 0
    if ma & mb:
        return 0
    b = mb
    while b:
        low = b & (~b + 1)
        n += _popcount(ma & ~((low << 1) - 1))
        b ^= low
    return -1 if n & 1 else 1


def wedge_sign(ma, mb):
    """Sign of dx^A ^ dx^B relative to the sorted union (0 if they overlap)."""
    return _wedge_sign(ma, mb)


cdef inline tuple _tadd(tuple a, tuple b):
    cdef Py_ssize_t i, n = len(a)
    cdef tuple out = PyTuple_New(n)
    cdef object v
    for i in range(n):
        v = <long>(<object>PyTuple_GET_ITEM(a, i)) + <long>(<object>PyTuple_GET_ITEM(b, i))
        Py_INCREF(v)
        PyTuple_SET_ITEM(out, i, v)
    return out


cdef inline int _tsum(tuple a):
    cdef Py_ssize_t i
    cdef int s = 0
    for i in range(len(a)):
        s += <long>(<object>PyTuple_GET_ITEM(a, i))
    return s


cdef inline void _acc(dict out, object k, object v):
    cdef PyObject* old = PyDict_GetItem(out, k)
    if old is not NULL:
        v = <object>old + v
    if v:
        PyDict_SetItem(out, k, v)
    elif old is not NULL:
        PyDict_DelItem(out, k)


def add_into(dict acc, dict a, scale=1):
    """acc += scale * a, in place."""
    cdef object k, c
    for k, c in a.items():
        _acc(acc, k, c * scale)
    return acc


def scale(dict a, c):
    if not c:
        return {}
    return {k: v * c for k, v in a.items()}


def mul(dict a, dict b, ntrunc):
    """Graded-commutative product a*b, dropping y-degree above ntrunc (None: keep)."""
    cdef dict out = {}
    cdef list bl
    cdef tuple ka, kb, ya, yb, xa, xb
    cdef unsigned long ma, mb
    cdef int da, s, ha, hb, n, cap
    cdef bint trunc = ntrunc is not None
    cdef Py_ssize_t j, nb
    cdef list bdeg
    if not a or not b:
        return out
    cap = ntrunc if trunc else 0
    bl = list(b.items())
    nb = len(bl)
    bdeg = [_tsum(<tuple>(<tuple>bl[j][0])[0]) for j in range(nb)]
    for ka, ca in a.items():
        ya = <tuple>ka[0]
        ma = ka[1]
        xa = <tuple>ka[2]
        ha = ka[3]
        da = _tsum(ya)
        for j in range(nb):
            kb = <tuple>(<tuple>bl[j])[0]
            mb = kb[1]
            if ma & mb:
                continue
            if trunc and da + <int>bdeg[j] > cap:
                continue
            cb = (<tuple>bl[j])[1]
            s = _wedge_sign(ma, mb)
            yb = <tuple>kb[0]
            xb = <tuple>kb[2]
            hb = kb[3]
            k = (_tadd(ya, yb), ma | mb, _tadd(xa, xb), ha + hb)
            v = ca * cb
            if s < 0:
                v = -v
            _acc(out, k, v)
    return out


def dy(dict a, tuple beta):
    """Multi-derivative d^beta/dy^beta (beta an exponent tuple)."""
    cdef dict out = {}
    cdef Py_ssize_t i, n = len(beta)
    cdef long e, bb, t
    cdef tuple y, ny
    cdef bint ok, nonzero = False
    for i in range(n):
        if <long>beta[i]:
            nonzero = True
    if not nonzero:
        return dict(a)
    for key, c in a.items():
        y = <tuple>key[0]
        f = 1
        ok = True
        ny = PyTuple_New(n)
        for i in range(n):
            e = <long>(<object>PyTuple_GET_ITEM(y, i))
            bb = <long>beta[i]
            if bb > e:
                ok = False
                break
            for t in range(bb):
                f *= e - t
            v = e - bb
            Py_INCREF(v)
            PyTuple_SET_ITEM(ny, i, v)
        if not ok:
            # fill remaining slots so the partially built tuple is valid before release
            for i in range(i, n):
                v = 0
                Py_INCREF(v)
                PyTuple_SET_ITEM(ny, i, v)
            continue
        _acc(out, (ny, key[1], key[2], key[3]), c * f)
    return out


def dx(dict a, int i):
    """Partial derivative in the base coordinate x^{i+1}."""
    cdef dict out = {}
    cdef tuple x
    cdef long e
    for key, c in a.items():
        x = <tuple>key[2]
        e = x[i]
        if not e:
            continue
        nx = x[:i] + (e - 1,) + x[i + 1:]
        _acc(out, (key[0], key[1], nx, key[3]), c * e)
    return out


def dx_wedge(int i, dict a):
    """dx^{i+1} ^ a (form generator multiplied from the left)."""
    cdef unsigned long bit = 1UL << i
    cdef unsigned long below = bit - 1
    cdef unsigned long m
    cdef dict out = {}
    for key, c in a.items():
        m = key[1]
        if m & bit:
            continue
        out[(key[0], m | bit, key[2], key[3])] = -c if _popcount(m & below) & 1 else c
    return out


def interior(dict a, int i):
    """Left contraction with the vector field d/dx^{i+1}."""
    cdef unsigned long bit = 1UL << i
    cdef unsigned long below = bit - 1
    cdef unsigned long m
    cdef dict out = {}
    for key, c in a.items():
        m = key[1]
        if not m & bit:
            continue
        out[(key[0], m ^ bit, key[2], key[3])] = -c if _popcount(m & below) & 1 else c
    return out


def y_times(dict a, int i, ntrunc):
    """Multiply by y^{i+1}."""
    cdef dict out = {}
    cdef tuple y
    cdef bint trunc = ntrunc is not None
    cdef int cap = ntrunc if trunc else 0
    for key, c in a.items():
        y = <tuple>key[0]
        if trunc and _tsum(y) + 1 > cap:
            continue
        out[(y[:i] + (y[i] + 1,) + y[i + 1:], key[1], key[2], key[3])] = c
    return out


def delta_inv(dict a, int d, ntrunc):
    """Homotopy operator: y^k i(d/dx^k) a, divided by p+q on each (p, q) component."""
    cdef dict out = {}
    cdef tuple y
    cdef unsigned long m, b, low
    cdef int p, q, i
    cdef bint trunc = ntrunc is not None
    cdef int cap = ntrunc if trunc else 0
    for key, c in a.items():
        m = key[1]
        if not m:
            continue
        y = <tuple>key[0]
        p = _tsum(y)
        if trunc and p + 1 > cap:
            continue
        q = _popcount(m)
        cw = c * mpq(1, p + q)
        b = m
        while b:
            low = b & (~b + 1)
            i = 0
            while (low >> i) != 1:
                i += 1
            v = -cw if _popcount(m & (low - 1)) & 1 else cw
            _acc(out, (y[:i] + (y[i] + 1,) + y[i + 1:], m ^ low, key[2], key[3]), v)
            b ^= low
    return out


def truncate(dict a, int ntrunc):
    return {k: c for k, c in a.items() if _tsum(<tuple>k[0]) <= ntrunc}
