"""Parsing and printing of polynomial strings.

Grammar: rational literals (``3``, ``1/2``), variables ``x1..xd``, ``y1..yd``,
odd generators ``dx1..dxd``, the formal parameter ``hbar``, operators
``+ - * ^`` with nonnegative integer exponents, and parentheses.  Division is
only allowed between literals.  Whitespace is ignored.
"""

import re

from gmpy2 import mpq

from formality import kernels as K
from formality.errors import ValidationError

_TOKEN = re.compile(r"\s*(?:(\d+)|(dx|x|y)(\d+)|(hbar)|(.))")


def _tokenize(text):
    pos = 0
    out = []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        pos = m.end()
        num, var, idx, hbar, op = m.groups()
        if num is not None:
            out.append(("num", int(num)))
        elif var is not None:
            out.append(("var", (var, int(idx))))
        elif hbar is not None:
            out.append(("hbar", None))
        elif op is not None and not op.isspace():
            if op not in "+-*^/()":
                raise ValidationError(f"unexpected character {op!r} in {text!r}")
            out.append(("op", op))
    out.append(("end", None))
    return out


class _Parser:
    def __init__(self, text, d, allowed):
        self.text = text
        self.d = d
        self.allowed = allowed
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg):
        raise ValidationError(f"{msg} in polynomial {self.text!r}")

    def parse(self):
        if self.peek()[0] == "end":
            self.fail("empty expression")
        val = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return val

    def expr(self):
        sign = 1
        if self.peek() == ("op", "-"):
            self.take()
            sign = -1
        elif self.peek() == ("op", "+"):
            self.take()
        acc = K.scale(self.term(), sign)
        while self.peek() in (("op", "+"), ("op", "-")):
            s = 1 if self.take()[1] == "+" else -1
            K.add_into(acc, self.term(), s)
        return acc

    def term(self):
        acc = self.power()
        while True:
            t = self.peek()
            if t == ("op", "*"):
                self.take()
                acc = K.mul(acc, self.power(), None)
            elif t == ("op", "/"):
                self.take()
                den = self.power()
                c = _constant(den)
                if c is None:
                    self.fail("division by a non-constant")
                if c == 0:
                    self.fail("division by zero")
                acc = K.scale(acc, 1 / mpq(c))
            elif t[0] in ("num", "var", "hbar") or t == ("op", "("):
                acc = K.mul(acc, self.power(), None)
            else:
                return acc

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            t = self.take()
            if t[0] != "num":
                self.fail("exponent must be a nonnegative integer")
            out = {((0,) * self.d, 0, (0,) * self.d, 0): mpq(1)}
            for _ in range(t[1]):
                out = K.mul(out, base, None)
            return out
        return base

    def atom(self):
        t = self.take()
        z = (0,) * self.d
        if t[0] == "num":
            return {(z, 0, z, 0): mpq(t[1])} if t[1] else {}
        if t[0] == "hbar":
            if "hbar" not in self.allowed:
                self.fail("hbar not allowed")
            return {(z, 0, z, 1): mpq(1)}
        if t[0] == "var":
            name, idx = t[1]
            if name not in self.allowed:
                self.fail(f"variable {name}{idx} not allowed")
            if not 1 <= idx <= self.d:
                self.fail(f"variable {name}{idx} out of range for d={self.d}")
            e = tuple(1 if j == idx - 1 else 0 for j in range(self.d))
            if name == "x":
                return {(z, 0, e, 0): mpq(1)}
            if name == "y":
                return {(e, 0, z, 0): mpq(1)}
            return {(z, 1 << (idx - 1), z, 0): mpq(1)}
        if t == ("op", "("):
            v = self.expr()
            if self.take() != ("op", ")"):
                self.fail("missing ')'")
            return v
        self.fail(f"unexpected token {t[1]!r}")


def _constant(spoly):
    if not spoly:
        return 0
    if len(spoly) != 1:
        return None
    (y, m, x, h), c = next(iter(spoly.items()))
    if any(y) or m or any(x) or h:
        return None
    return c


def parse_terms(text, d, allowed=("x", "y", "dx", "hbar")):
    """Parse a string into a term dict over d coordinates."""
    return _Parser(str(text), d, set(allowed)).parse()


def format_rational(c):
    c = mpq(c)
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


def _monomial(y, m, x, h, yname="y"):
    parts = []
    if h:
        parts.append("hbar" if h == 1 else f"hbar^{h}")
    for i, e in enumerate(x):
        if e:
            parts.append(f"x{i + 1}" if e == 1 else f"x{i + 1}^{e}")
    for i, e in enumerate(y):
        if e:
            parts.append(f"{yname}{i + 1}" if e == 1 else f"{yname}{i + 1}^{e}")
    i = 0
    while m >> i:
        if (m >> i) & 1:
            parts.append(f"dx{i + 1}")
        i += 1
    return "*".join(parts)


def term_order_key(key):
    y, m, x, h = key
    return (sum(y) + sum(x), h, bin(m).count("1"), tuple(-e for e in x), tuple(-e for e in y), m)


def format_terms(spoly, yname="y"):
    """Deterministic string for a term dict (inverse of :func:`parse_terms`)."""
    if not spoly:
        return "0"
    out = []
    for key in sorted(spoly, key=term_order_key):
        c = spoly[key]
        mono = _monomial(*key, yname=yname)
        neg = c < 0
        a = -c if neg else c
        if mono:
            body = mono if a == 1 else f"{format_rational(a)}*{mono}"
        else:
            body = format_rational(a)
        if not out:
            out.append(f"-{body}" if neg else body)
        else:
            out.append(f" - {body}" if neg else f" + {body}")
    return "".join(out)
