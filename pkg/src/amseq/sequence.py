"""Evaluatable sequences and the elementary transforms.

Two numeric paths are kept side by side:

* exact: values as ``gmpy2.mpq`` rationals, used whenever every ingredient is
  rational (prefixes, geometric ratios, integer powers, piecewise rules);
* log-space: ``ln xi_n`` as numpy ``longdouble`` arrays (64-bit significand),
  used for long windows. Working with logarithms keeps geometric sequences
  from underflowing.

Tail remainders past a truncation point are returned as brackets computed
with mpmath at 113 bits.
"""
from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence as Seq, Tuple

import mpmath
import numpy as np
from gmpy2 import mpq

from . import rules
from .expr import (
    Ampliation,
    Dilution,
    Kernel,
    Max,
    Min,
    PiecewiseConstant,
    PrefixOverride,
    Product,
    Scale,
    SeqExpr,
    Sum,
    kernel_of,
    log_weighted_summability,
)

LD = np.longdouble
PREC = 113
TAIL_CAP = 2 ** 26
_LN2 = np.log(LD(2))
NEG_INF = LD(-np.inf)

EXACT, BRACKETED, UNAVAILABLE = "exact", "bracketed", "unavailable"


class SummabilityError(ValueError):
    """Raised when an operation needs a summable input."""


class TailUnavailable(ValueError):
    """Raised when no certified tail bracket can be produced."""


def to_mpq(x) -> mpq:
    if isinstance(x, type(mpq(0))):
        return x
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    if isinstance(x, int):
        return mpq(x)
    return mpq(Fraction(x))


def to_fraction(x) -> Fraction:
    return Fraction(int(x.numerator), int(x.denominator))


def _mpf(x):
    if isinstance(x, type(mpq(0))) or isinstance(x, Fraction):
        return mpmath.mpf(int(x.numerator)) / int(x.denominator)
    return mpmath.mpf(x)


def _ld_log_int(a: int) -> LD:
    b = a.bit_length()
    if b <= 63:
        return np.log(LD(a))
    s = b - 63
    return np.log(LD(a >> s)) + LD(s) * _LN2


def ld_log(x) -> LD:
    """ln of a nonnegative rational or mpf as longdouble (-inf for zero)."""
    if isinstance(x, mpmath.mpf):
        if x == 0:
            return NEG_INF
        with mpmath.workprec(PREC):
            # round first: mpmath's log misbehaves on long mantissas near powers of two
            return LD(mpmath.nstr(mpmath.log(+x), 24, strip_zeros=False))
    x = to_mpq(x)
    if x == 0:
        return NEG_INF
    if x < 0:
        raise ValueError("logarithm of a negative value")
    return _ld_log_int(int(x.numerator)) - _ld_log_int(int(x.denominator))


def _ld(x) -> LD:
    return LD(x.numerator) / LD(x.denominator)


@dataclass(frozen=True)
class TailSum:
    """Bracket [lo, hi] for sum_{j>n} xi_j; lo == hi when exact."""

    n: int
    lo: object
    hi: object
    exact: bool

    @property
    def value(self):
        if self.exact:
            return self.lo
        with mpmath.workprec(PREC):
            return (_mpf(self.lo) + _mpf(self.hi)) / 2

    @property
    def width(self):
        if self.exact:
            return 0
        with mpmath.workprec(PREC):
            return _mpf(self.hi) - _mpf(self.lo)

    def contains(self, x) -> bool:
        with mpmath.workprec(PREC):
            return _mpf(self.lo) <= _mpf(x) <= _mpf(self.hi)


class Sequence:
    """Nonnegative nonincreasing sequence indexed from 1."""

    exact_values: bool = False
    tail_mode: str = UNAVAILABLE
    summable: str = "unknown"
    support: Optional[int] = None  # last index with a nonzero value, None if infinite
    expr: Optional[SeqExpr] = None
    label: str = "sequence"

    def __init__(self):
        self._lock = threading.RLock()
        self._log_cache = None
        self._exact_cache: List = []
        self._ltail_cache = None
        self._etail_cache = None

    # ---- to be provided by subclasses
    def _value(self, n: int):
        raise NotImplementedError

    def _log_block(self, hi: int) -> np.ndarray:
        raise NotImplementedError

    def _exact_block(self, hi: int) -> List:
        return [to_mpq(self._value(n)) for n in range(1, hi + 1)]

    def _remainder(self, W: int):
        """Bracket (lo, hi) for sum_{j>W} xi_j, or None."""
        return None

    def _am_inf_remainder(self, W: int):
        """Bracket for sum_{j>W} (xi_{a,oo})_j, or None."""
        if self.support is not None and self.exact_values:
            return self._finite_am_inf_remainder(W)
        return None

    def has_second_order(self) -> bool:
        """Whether tails of the mean at infinity can be bracketed."""
        return self.support is not None and self.exact_values

    def _finite_am_inf_remainder(self, W: int):
        s = self.support
        if W >= s:
            return mpq(0), mpq(0)
        T = self.exact_tails(s)
        v = sum((T[j] / j for j in range(W + 1, s + 1)), mpq(0))
        return v, v

    # ---- public evaluation
    def value(self, n: int):
        if n < 1:
            raise ValueError("sequences are indexed from 1")
        return self._value(int(n))

    def __call__(self, n: int):
        return self.value(n)

    def exact_prefix(self, hi: int) -> List:
        if not self.exact_values:
            raise TypeError(f"{self.label} has no exact values")
        c = self._exact_cache
        if len(c) < hi:
            with self._lock:
                if len(self._exact_cache) < hi:
                    self._exact_cache = self._exact_block(hi)
            c = self._exact_cache
        return c[:hi]

    def log_prefix(self, hi: int) -> np.ndarray:
        c = self._log_cache
        if c is None or len(c) < hi:
            with self._lock:
                c = self._log_cache
                if c is None or len(c) < hi:
                    with np.errstate(divide="ignore", invalid="ignore"):
                        c = np.asarray(self._log_block(hi), dtype=LD)
                    c.setflags(write=False)
                    self._log_cache = c
        return c[:hi]

    def remainder(self, W: int):
        if self.summable == "no":
            raise SummabilityError(f"{self.label} is not summable")
        if self.support is not None and self.exact_values:
            return (self.exact_remainder(W),) * 2
        br = self._remainder(W)
        if br is None:
            raise TailUnavailable(f"no tail bracket for {self.label}")
        return br

    def exact_remainder(self, W: int):
        if self.support is not None and self.exact_values:
            if W >= self.support:
                return mpq(0)
            vals = self.exact_prefix(self.support)
            return sum(vals[W:], mpq(0))
        if self.tail_mode != EXACT:
            raise TailUnavailable(f"{self.label} has no exact tails")
        lo, hi = self._remainder(W)
        return lo

    def exact_tails(self, hi: int) -> List:
        """[T_0, ..., T_hi] with T_n = sum_{j>n} xi_j, exactly."""
        c = self._etail_cache
        if c is None or len(c) < hi + 1:
            with self._lock:
                c = self._etail_cache
                if c is None or len(c) < hi + 1:
                    vals = self.exact_prefix(hi)
                    T = [None] * (hi + 1)
                    acc = to_mpq(self.exact_remainder(hi))
                    T[hi] = acc
                    for n in range(hi - 1, -1, -1):
                        acc = acc + vals[n]
                        T[n] = acc
                    c = T
                    self._etail_cache = c
        return c[: hi + 1]

    def log_tails(self, hi: int) -> Tuple[np.ndarray, np.ndarray]:
        """(lower, upper) arrays of ln T_n for n = 1..hi."""
        c = self._ltail_cache
        if c is None or len(c[0]) < hi:
            with self._lock:
                c = self._ltail_cache
                if c is None or len(c[0]) < hi:
                    lo, up = self.remainder(hi)
                    lx = self.log_prefix(hi)
                    out = []
                    for r in (lo, up):
                        arr = np.empty(hi, dtype=LD)
                        arr[0] = ld_log(r)
                        arr[1:] = lx[:0:-1][: hi - 1]
                        with np.errstate(invalid="ignore"):
                            acc = np.logaddexp.accumulate(arr)
                        out.append(acc[::-1].copy())
                    if lo == up:
                        out[1] = out[0]
                    for a in out:
                        a.setflags(write=False)
                    c = (out[0], out[1])
                    self._ltail_cache = c
        return c[0][:hi], c[1][:hi]

    def log_bounds(self, hi: int) -> Tuple[np.ndarray, np.ndarray]:
        lx = self.log_prefix(hi)
        return lx, lx

    def approx(self, n: int):
        """Value as an mpf (exact values converted)."""
        with mpmath.workprec(PREC):
            return _mpf(self.value(n))

    def far_log(self, n: int):
        """ln xi_n at indices far past any window, or None if not available."""
        return None

    def __repr__(self):
        return f"<{type(self).__name__} {self.label}>"


# --------------------------------------------------------------------------
# closed-form kernels


def _quad_roots(a, b, c):
    disc = b * b - 4 * a * c
    if a == 0:
        return [-c / b] if b != 0 else []
    if disc < 0:
        return []
    s = math.sqrt(disc)
    return [(-b - s) / (2 * a), (-b + s) / (2 * a)]


class KernelSeq(Sequence):
    def __init__(self, k: Kernel, expr: Optional[SeqExpr] = None):
        super().__init__()
        if not k.is_null:
            raise ValueError(f"closed form {k} does not tend to zero")
        self.k = k
        self.n0 = k.n0()
        self.expr = expr
        self.label = _label(expr) if expr is not None else repr(k)
        self.exact_values = k.exact_values
        summ = k.log_weighted_summable(0)
        self.summable = "yes" if summ else "no"
        if k.pure_geom:
            self.tail_mode = EXACT
        elif summ:
            self.tail_mode = BRACKETED
        self._c = to_mpq(k.c)
        self._q = to_mpq(k.q)

    def _f(self, x):
        k = self.k
        v = _mpf(k.c) * mpmath.power(_mpf(k.q), x) * mpmath.power(x, -_mpf(k.p))
        if k.r:
            v *= mpmath.power(mpmath.log(x), _mpf(k.r))
        return v

    def _value(self, n):
        m = max(n, self.n0)
        if self.exact_values:
            return self._c * self._q ** m * mpq(m) ** (-int(self.k.p))
        with mpmath.workprec(PREC):
            return self._f(mpmath.mpf(m))

    def far_log(self, n):
        k = self.k
        m = mpmath.mpf(max(int(n), self.n0))
        lm = mpmath.log(m)
        v = mpmath.log(_mpf(k.c)) - _mpf(k.p) * lm
        if k.q != 1:
            v += m * mpmath.log(_mpf(k.q))
        if k.r:
            v += _mpf(k.r) * mpmath.log(lm)
        return v

    def _exact_block(self, hi):
        out = []
        k = self.k
        pw = -int(k.p)
        qm = self._q ** self.n0
        for n in range(1, hi + 1):
            m = max(n, self.n0)
            if n > self.n0:
                qm = qm * self._q
            out.append(self._c * qm * mpq(m) ** pw)
        return out

    def _log_block(self, hi):
        k = self.k
        idx = np.arange(1, hi + 1, dtype=LD)
        m = np.maximum(idx, LD(self.n0))
        lm = np.log(m)
        out = np.full(hi, ld_log(to_mpq(k.c)), dtype=LD)
        if k.q != 1:
            out += m * ld_log(to_mpq(k.q))
        if k.p != 0:
            out -= _ld(k.p) * lm
        if k.r != 0:
            out += _ld(k.r) * np.log(lm)
        return out

    # -- tails
    def _integral(self, a):
        """int_a^oo f(x) dx for q == 1."""
        k = self.k
        c, p, r = _mpf(k.c), _mpf(k.p), _mpf(k.r)
        a = mpmath.mpf(a)
        if p > 1:
            if r == 0:
                return c * mpmath.power(a, 1 - p) / (p - 1)
            return c * mpmath.gammainc(r + 1, (p - 1) * mpmath.log(a)) / mpmath.power(p - 1, r + 1)
        return c * mpmath.power(mpmath.log(a), r + 1) / (-(r + 1))

    def _convex_from(self) -> int:
        k = self.k
        p, r = float(k.p), float(k.r)
        roots = _quad_roots(p * (p + 1), -(2 * p + 1) * r, r * (r - 1))
        t = max([0.0] + roots)
        return max(self.n0 + 1, int(math.ceil(math.exp(min(t, 700)))) + 1)

    def _explicit(self, a: int, b: int):
        """sum_{j=a}^{b} f(max(j, n0)) at working precision."""
        if b < a:
            return mpmath.mpf(0)
        if b - a > 200000:
            raise TailUnavailable("explicit summation range too long")
        return mpmath.fsum(self._f(mpmath.mpf(max(j, self.n0))) for j in range(a, b + 1))

    def _remainder(self, W):
        k = self.k
        if self.summable != "yes":
            return None
        if k.pure_geom:
            v = self._c * self._q ** (W + 1) / (1 - self._q)
            return v, v
        with mpmath.workprec(PREC):
            if k.q == 1 and k.r == 0:
                N = max(W, self.n0)
                head = self._explicit(W + 1, N)
                v = _mpf(k.c) * mpmath.zeta(_mpf(k.p), N + 1)
                err = abs(v) * mpmath.ldexp(1, -PREC + 10)
                return head + v - err, head + v + err
            if k.q == 1:
                N = max(W, self._convex_from())
                head = self._explicit(W + 1, N)
                lo = head + self._integral(N + 1) + self._f(mpmath.mpf(N + 1)) / 2
                hi = head + self._integral(mpmath.mpf(N) + mpmath.mpf(0.5))
                return lo, hi
            # geometric factor with powers/logs: sum explicitly until the
            # integral bracket is negligible
            N = max(W, self.n0 + 1)
            step = max(16, int(math.ceil(40 / -math.log(float(k.q)))))
            while True:
                head = self._explicit(W + 1, N)
                lo = mpmath.quad(self._f, [N + 1, mpmath.inf])
                hi = mpmath.quad(self._f, [N, mpmath.inf])
                if hi - lo <= mpmath.ldexp(head + lo, -PREC + 12) or N - W > 150000:
                    return head + lo, head + hi
                N += step
                step *= 2

    def has_second_order(self):
        return self.summable == "yes" and (self.k.pure_geom or self.k.q == 1)

    def _am_inf_remainder(self, W):
        """Bracket for sum_{j>W} T_j / j with T_j the tail after j."""
        k = self.k
        if not self.has_second_order() or W < self.n0 + 1:
            return None
        with mpmath.workprec(PREC):
            if k.pure_geom:
                c, q = _mpf(k.c), _mpf(k.q)
                lam = -mpmath.log(q)
                L = int(math.ceil(200 / float(lam)))
                head = mpmath.fsum(c * q ** (j + 1) / ((1 - q) * j) for j in range(W + 1, W + L + 1))
                N = W + L
                g = c * q / (1 - q)
                lo = g * mpmath.e1(lam * (N + 1))
                hi = g * mpmath.e1(lam * N)
                return head + lo, head + hi
            if k.q == 1 and k.r == 0:
                # T_j lies between I(j+1) and I(j), I(x) = c x^{1-p}/(p-1)
                c, p = _mpf(k.c), _mpf(k.p)
                N = W
                lo = c * mpmath.quad(lambda x: mpmath.power(x + 1, 1 - p) / x, [N + 1, mpmath.inf]) / (p - 1)
                hi = c * mpmath.power(N, 1 - p) / (p - 1) ** 2
                return lo, hi
            if k.q == 1:
                N = max(W, self._convex_from())
                if N - W > 20000:
                    return None
                # T_j for W < j <= N from the tail bracket at N
                tlo, thi = self._remainder(N)
                head_lo = head_hi = mpmath.mpf(0)
                for j in range(N, W, -1):
                    head_lo += tlo / j
                    head_hi += thi / j
                    fj = self._f(mpmath.mpf(max(j, self.n0)))
                    tlo += fj
                    thi += fj
                lo = mpmath.quad(lambda x: self._integral(x + 1) / x, [N + 1, mpmath.inf])
                hi = mpmath.quad(lambda x: self._integral(x) / x, [N, mpmath.inf])
                return head_lo + lo, head_hi + hi
        return None


# --------------------------------------------------------------------------
# structural nodes


class ScaleSeq(Sequence):
    def __init__(self, c, child: Sequence, expr=None):
        super().__init__()
        self.c = to_mpq(c)
        self.child = child
        self.expr = expr
        self.label = _label(expr) if expr is not None else f"{c}*{child.label}"
        self.exact_values = child.exact_values
        self.tail_mode = child.tail_mode
        self.summable = child.summable
        self.support = child.support

    def _value(self, n):
        v = self.child.value(n)
        return self.c * v if self.exact_values else _mpf(self.c) * v

    def _log_block(self, hi):
        return self.child.log_prefix(hi) + ld_log(self.c)

    def far_log(self, n):
        v = self.child.far_log(n)
        return None if v is None else v + mpmath.log(_mpf(self.c))

    def _exact_block(self, hi):
        return [self.c * v for v in self.child.exact_prefix(hi)]

    def _scale(self, br):
        if br is None:
            return None
        lo, hi = br
        if self.tail_mode == EXACT and lo == hi:
            return self.c * lo, self.c * hi
        with mpmath.workprec(PREC):
            return _mpf(self.c) * _mpf(lo), _mpf(self.c) * _mpf(hi)

    def _remainder(self, W):
        return self._scale(self.child._remainder(W))

    def _am_inf_remainder(self, W):
        return self._scale(self.child._am_inf_remainder(W))

    def has_second_order(self):
        return self.child.has_second_order()


class AmpliationSeq(Sequence):
    def __init__(self, m: int, child: Sequence, expr=None):
        super().__init__()
        if m < 1:
            raise ValueError("ampliation factor must be >= 1")
        self.m = int(m)
        self.child = child
        self.expr = expr if expr is not None else (Ampliation(m, child.expr) if child.expr is not None else None)
        self.label = _label(self.expr) if self.expr is not None else f"D{m}({child.label})"
        self.exact_values = child.exact_values
        self.tail_mode = child.tail_mode
        self.summable = child.summable
        self.support = None if child.support is None else child.support * self.m

    def _value(self, n):
        return self.child.value(-(-n // self.m))

    def far_log(self, n):
        return self.child.far_log(-(-int(n) // self.m))

    def _log_block(self, hi):
        u = -(-hi // self.m)
        return np.repeat(self.child.log_prefix(u), self.m)[:hi]

    def _exact_block(self, hi):
        u = -(-hi // self.m)
        base = self.child.exact_prefix(u)
        out = []
        for v in base:
            out.extend([v] * self.m)
        return out[:hi]

    def _remainder(self, W):
        m = self.m
        u = -(-W // m)
        br = self.child._remainder(u) if self.child.support is None or not self.child.exact_values else (self.child.exact_remainder(u),) * 2
        if br is None:
            return None
        xu = self.child.value(u)
        extra = m * u - W
        if self.tail_mode == EXACT:
            return extra * xu + m * br[0], extra * xu + m * br[1]
        with mpmath.workprec(PREC):
            base = extra * _mpf(xu)
            return base + m * _mpf(br[0]), base + m * _mpf(br[1])


class DilutionSeq(Sequence):
    def __init__(self, m: int, child: Sequence, expr=None):
        super().__init__()
        if m < 1:
            raise ValueError("dilution factor must be >= 1")
        self.m = int(m)
        self.child = child
        self.expr = expr if expr is not None else (Dilution(m, child.expr) if child.expr is not None else None)
        self.label = _label(self.expr) if self.expr is not None else f"Dinv{m}({child.label})"
        self.exact_values = child.exact_values
        self.summable = child.summable
        self.support = None if child.support is None else child.support // self.m
        if child.tail_mode != UNAVAILABLE:
            self.tail_mode = BRACKETED
        if self.support is not None and self.exact_values:
            self.tail_mode = EXACT

    def _value(self, n):
        return self.child.value(self.m * n)

    def far_log(self, n):
        return self.child.far_log(self.m * int(n))

    def _log_block(self, hi):
        return self.child.log_prefix(self.m * hi)[self.m - 1 :: self.m][:hi]

    def _exact_block(self, hi):
        return self.child.exact_prefix(self.m * hi)[self.m - 1 :: self.m][:hi]

    def _remainder(self, W):
        m = self.m
        ch = self.child
        try:
            lo = ch.remainder(m * W + m - 1)[0]
            hi = ch.remainder(m * W)[1]
        except (TailUnavailable, SummabilityError):
            return None
        with mpmath.workprec(PREC):
            return _mpf(lo) / m, _mpf(hi) / m


class CombineSeq(Sequence):
    """Pointwise sum, minimum or maximum."""

    def __init__(self, kind: str, children: Seq[Sequence], expr=None):
        super().__init__()
        if kind not in ("sum", "min", "max"):
            raise ValueError(kind)
        if not children:
            raise ValueError("empty combination")
        self.kind = kind
        self.children_ = list(children)
        self.expr = expr
        self.label = _label(expr) if expr is not None else f"{kind}(...)"
        self.exact_values = all(c.exact_values for c in children)
        sups = [c.support for c in children]
        if kind == "min":
            fin = [s for s in sups if s is not None]
            self.support = min(fin) if fin else None
        else:
            self.support = None if any(s is None for s in sups) else max(sups)
        if expr is not None:
            self.summable = log_weighted_summability(expr, 0)
        else:
            self.summable = _combine_summable(kind, [c.summable for c in children])
        if self.support is not None:
            self.summable = "yes"
        modes = [c.tail_mode for c in children]
        if self.support is not None and self.exact_values:
            self.tail_mode = EXACT
        elif kind == "sum":
            if all(m == EXACT for m in modes):
                self.tail_mode = EXACT
            elif all(m != UNAVAILABLE for m in modes):
                self.tail_mode = BRACKETED
        elif self.summable == "yes":
            self.tail_mode = BRACKETED
        self._cross = None

    def _value(self, n):
        vals = [c.value(n) for c in self.children_]
        if self.kind == "sum":
            if self.exact_values:
                return sum(vals, mpq(0))
            with mpmath.workprec(PREC):
                return mpmath.fsum(_mpf(v) for v in vals)
        if self.exact_values:
            return min(vals) if self.kind == "min" else max(vals)
        with mpmath.workprec(PREC):
            vals = [_mpf(v) for v in vals]
            return min(vals) if self.kind == "min" else max(vals)

    def _log_block(self, hi):
        arrs = [c.log_prefix(hi) for c in self.children_]
        out = arrs[0].copy()
        for a in arrs[1:]:
            if self.kind == "sum":
                out = np.logaddexp(out, a)
            elif self.kind == "min":
                out = np.minimum(out, a)
            else:
                out = np.maximum(out, a)
        return out

    def _exact_block(self, hi):
        arrs = [c.exact_prefix(hi) for c in self.children_]
        if self.kind == "sum":
            return [sum(t, mpq(0)) for t in zip(*arrs)]
        f = min if self.kind == "min" else max
        return [f(t) for t in zip(*arrs)]

    def far_log(self, n):
        vals = [c.far_log(n) for c in self.children_]
        if any(v is None for v in vals):
            return None
        if self.kind == "min":
            return min(vals)
        if self.kind == "max":
            return max(vals)
        top = max(vals)
        if top == mpmath.ninf:
            return top
        return top + mpmath.log(mpmath.fsum(mpmath.exp(v - top) for v in vals))

    def _crossover(self):
        """Index after which one kernel child is the pointwise min/max."""
        if self._cross is None:
            ks = [c for c in self.children_ if isinstance(c, KernelSeq)]
            if len(ks) != len(self.children_):
                self._cross = (None, None)
            else:
                pick = min if self.kind == "min" else max
                win = pick(ks, key=lambda s: s.k.growth_key())
                last = max(s.n0 for s in ks)
                for other in ks:
                    if other is win:
                        continue
                    last = max(last, _last_crossing(win, other, self.kind))
                self._cross = (win, last + 1)
        return self._cross

    def _remainder(self, W):
        if self.kind == "sum":
            brs = [c._remainder(W) if not (c.support is not None and c.exact_values) else (c.exact_remainder(W),) * 2
                   for c in self.children_]
            if any(b is None for b in brs):
                return None
            if self.tail_mode == EXACT:
                s = sum((b[0] for b in brs), mpq(0))
                return s, s
            with mpmath.workprec(PREC):
                return (mpmath.fsum(_mpf(b[0]) for b in brs), mpmath.fsum(_mpf(b[1]) for b in brs))
        win, start = self._crossover()
        if win is not None and start - W <= 200000:
            with mpmath.workprec(PREC):
                head = mpmath.fsum(_mpf(self.value(j)) for j in range(W + 1, start + 1)) if start > W else 0
                lo, hi = win._remainder(max(W, start))
                return head + _mpf(lo), head + _mpf(hi)
        # loose bracket from the children
        brs = []
        for c in self.children_:
            try:
                brs.append(c.remainder(W))
            except (TailUnavailable, SummabilityError):
                brs.append(None)
        with mpmath.workprec(PREC):
            known = [b for b in brs if b is not None]
            if self.kind == "min":
                if not known:
                    return None
                return mpmath.mpf(0), min(_mpf(b[1]) for b in known)
            if len(known) != len(brs):
                return None
            return max(_mpf(b[0]) for b in known), mpmath.fsum(_mpf(b[1]) for b in known)


def _combine_summable(kind, verdicts):
    if kind == "min":
        return "yes" if "yes" in verdicts else "unknown"
    if "no" in verdicts:
        return "no"
    return "yes" if all(v == "yes" for v in verdicts) else "unknown"


def _last_crossing(win: KernelSeq, other: KernelSeq, kind: str) -> int:
    """Last index where ``other`` beats ``win`` (is smaller for min, larger for max)."""

    def g(x):
        lx = mpmath.log(x)
        a = win._f(x)
        b = other._f(x)
        return (b - a) if kind == "min" else (a - b)

    last = 1
    x = float(max(win.n0, other.n0))
    with mpmath.workprec(PREC):
        prev = x
        while x < 1e15:
            if g(mpmath.mpf(x)) < 0:
                last = int(math.ceil(x * 1.1 + 2))
            prev = x
            x = x * 1.1 + 1
    return last


class ProductSeq(Sequence):
    def __init__(self, factors: Seq[Sequence], expr=None):
        super().__init__()
        self.factors = list(factors)
        self.expr = expr
        self.label = _label(expr) if expr is not None else "product"
        self.exact_values = all(f.exact_values for f in factors)
        fin = [f.support for f in factors if f.support is not None]
        self.support = min(fin) if fin else None
        self.summable = log_weighted_summability(expr, 0) if expr is not None else "unknown"
        if self.support is not None:
            self.summable = "yes"
        if self.support is not None and self.exact_values:
            self.tail_mode = EXACT
        elif self.summable == "yes":
            self.tail_mode = BRACKETED

    def _value(self, n):
        vals = [f.value(n) for f in self.factors]
        if self.exact_values:
            out = mpq(1)
            for v in vals:
                out *= v
            return out
        with mpmath.workprec(PREC):
            return mpmath.fprod(_mpf(v) for v in vals)

    def _log_block(self, hi):
        out = self.factors[0].log_prefix(hi).copy()
        for f in self.factors[1:]:
            out = out + f.log_prefix(hi)
        return out

    def far_log(self, n):
        vals = [f.far_log(n) for f in self.factors]
        return None if any(v is None for v in vals) else mpmath.fsum(vals)

    def _exact_block(self, hi):
        arrs = [f.exact_prefix(hi) for f in self.factors]
        out = []
        for t in zip(*arrs):
            v = mpq(1)
            for x in t:
                v *= x
            out.append(v)
        return out

    def _remainder(self, W):
        # bounded nonincreasing cofactors times a summable kernel
        summ = [f for f in self.factors if f.summable == "yes" and f.tail_mode != UNAVAILABLE]
        if not summ:
            return None
        base = summ[0]
        br = base._remainder(W)
        if br is None:
            return None
        with mpmath.workprec(PREC):
            bound = mpmath.fprod(_mpf(f.value(W + 1)) for f in self.factors if f is not base)
            return mpmath.mpf(0), bound * _mpf(br[1])


class PrefixSeq(Sequence):
    """Explicit leading values followed by ``child`` (or zeros)."""

    def __init__(self, values, child: Optional[Sequence] = None, expr=None, check=True):
        super().__init__()
        self.vals = [to_mpq(v) for v in values]
        self.child = child
        self.expr = expr
        self.label = _label(expr) if expr is not None else f"prefix[{len(self.vals)}]"
        L = len(self.vals)
        if check:
            for i, v in enumerate(self.vals):
                if v < 0:
                    raise ValueError(f"negative entry at index {i + 1}")
                if i and v > self.vals[i - 1]:
                    raise ValueError(f"prefix increases at index {i + 1}")
            if child is not None and L:
                nxt = child.value(L + 1)
                if _mpf(nxt) > _mpf(self.vals[-1]):
                    raise ValueError(f"continuation exceeds prefix at index {L + 1}")
        if child is None:
            nz = [i for i, v in enumerate(self.vals) if v != 0]
            self.support = (nz[-1] + 1) if nz else 0
            self.exact_values = True
            self.summable = "yes"
            self.tail_mode = EXACT
        else:
            self.exact_values = child.exact_values
            self.summable = child.summable
            self.tail_mode = child.tail_mode
            self.support = None if child.support is None else max(child.support, L)

    def _value(self, n):
        if n <= len(self.vals):
            return self.vals[n - 1]
        if self.child is None:
            return mpq(0)
        return self.child.value(n)

    def far_log(self, n):
        if n <= len(self.vals):
            return mpmath.log(_mpf(self.vals[n - 1]))
        return mpmath.ninf if self.child is None else self.child.far_log(n)

    def _log_block(self, hi):
        L = len(self.vals)
        head = np.array([ld_log(v) for v in self.vals[:hi]], dtype=LD)
        if hi <= L:
            return head
        if self.child is None:
            return np.concatenate([head, np.full(hi - L, NEG_INF, dtype=LD)])
        return np.concatenate([head, self.child.log_prefix(hi)[L:]])

    def _exact_block(self, hi):
        L = len(self.vals)
        if hi <= L:
            return self.vals[:hi]
        if self.child is None:
            return self.vals + [mpq(0)] * (hi - L)
        return self.vals + self.child.exact_prefix(hi)[L:]

    def _remainder(self, W):
        L = len(self.vals)
        if self.child is None:
            v = sum(self.vals[W:], mpq(0))
            return v, v
        if W >= L:
            return self.child._remainder(W)
        br = self.child._remainder(L)
        if br is None:
            return None
        head = sum(self.vals[W:], mpq(0))
        if self.tail_mode == EXACT:
            return head + br[0], head + br[1]
        with mpmath.workprec(PREC):
            return _mpf(head) + _mpf(br[0]), _mpf(head) + _mpf(br[1])


class PiecewiseSeq(Sequence):
    def __init__(self, node: PiecewiseConstant):
        super().__init__()
        self.node = node
        self.expr = node
        self.label = _label(node)
        self.exact_values = True
        if node.rule is None:
            self.rule = None
            self._bps = list(node.breakpoints)
            self._vals = [to_mpq(v) for v in node.values]
            nz = [b for b, v in zip(self._bps, self._vals) if v != 0]
            self.support = nz[-1] if nz else 0
            self.summable = "yes"
            self.tail_mode = EXACT
        else:
            self.rule = rules.get(node.rule)
            self._bps = []
            self._vals = []
            self.summable = self.rule.log_weighted_summable(0)
            self.tail_mode = BRACKETED if self.summable == "yes" else UNAVAILABLE

    def _ensure(self, n):
        if self.rule is None:
            return
        if self._bps and self._bps[-1] >= n:
            return
        bl = self.rule.blocks_until(n)
        with self._lock:
            for b, v in bl[len(self._bps):]:
                self._bps.append(b)
                self._vals.append(to_mpq(v))

    def _ensure_k(self, K):
        if self.rule is None:
            return
        bl = self.rule.blocks(K)
        with self._lock:
            for b, v in bl[len(self._bps):]:
                self._bps.append(b)
                self._vals.append(to_mpq(v))

    def block_of(self, n: int) -> int:
        """0-based block index containing n (len(blocks) past the end)."""
        self._ensure(n)
        return bisect.bisect_left(self._bps, n)

    def blocks(self, K: int):
        self._ensure_k(K)
        return list(zip(self._bps[:K], self._vals[:K]))

    def _value(self, n):
        k = self.block_of(n)
        if k >= len(self._bps):
            return mpq(0)
        return self._vals[k]

    def far_log(self, n):
        v = self._value(int(n))
        return mpmath.ninf if v == 0 else mpmath.log(_mpf(v))

    def _log_block(self, hi):
        self._ensure(hi)
        out = np.full(hi, NEG_INF, dtype=LD)
        prev = 0
        for b, v in zip(self._bps, self._vals):
            if prev >= hi:
                break
            out[prev : min(b, hi)] = ld_log(v)
            prev = b
        return out

    def _exact_block(self, hi):
        self._ensure(hi)
        out = []
        prev = 0
        for b, v in zip(self._bps, self._vals):
            if prev >= hi:
                break
            out.extend([v] * (min(b, hi) - prev))
            prev = b
        out.extend([mpq(0)] * (hi - len(out)))
        return out

    def _remainder(self, W):
        if self.rule is None:
            v = self.exact_remainder(W)
            return v, v
        k0 = self.block_of(W)
        s = self._vals[k0] * (self._bps[k0] - W)
        k = k0 + 1
        while True:
            self._ensure_k(k + 1)
            s += self._vals[k] * (self._bps[k] - self._bps[k - 1])
            k += 1
            bound = to_mpq(self.rule.mass_after(k))
            if bound == 0 or bound * mpq(2) ** 200 <= s:
                return s, s + bound
            if k - k0 > 400:
                return s, s + bound



# --------------------------------------------------------------------------
# derived sequences


class MeanSeq(Sequence):
    """Arithmetic (Cesaro) mean."""

    def __init__(self, child: Sequence):
        super().__init__()
        self.child = child
        self.label = f"({child.label})_a"
        self.exact_values = child.exact_values
        self.summable = "yes" if child.support == 0 else "no"

    def _value(self, n):
        if self.exact_values:
            return self.exact_prefix(n)[n - 1]
        with mpmath.workprec(PREC):
            return mpmath.fsum(_mpf(self.child.value(j)) for j in range(1, n + 1)) / n

    def _exact_block(self, hi):
        vals = self.child.exact_prefix(hi)
        out, acc = [], mpq(0)
        for i, v in enumerate(vals, 1):
            acc += v
            out.append(acc / i)
        return out

    def _log_block(self, hi):
        lx = self.child.log_prefix(hi)
        with np.errstate(invalid="ignore"):
            acc = np.logaddexp.accumulate(lx)
        return acc - np.log(np.arange(1, hi + 1, dtype=LD))


class AmInfSeq(Sequence):
    """Arithmetic mean at infinity: (1/n) sum_{j>n} xi_j."""

    def __init__(self, child: Sequence, tol=1e-30):
        super().__init__()
        if child.summable != "yes":
            raise SummabilityError(
                f"arithmetic mean at infinity needs a summable input; {child.label} has summable={child.summable}"
            )
        if child.tail_mode == UNAVAILABLE:
            raise TailUnavailable(f"no tail sums for {child.label}")
        self.child = child
        self.tol = tol
        self.label = f"({child.label})_aoo"
        self.exact_values = child.exact_values and child.tail_mode == EXACT
        if child.support is not None:
            self.support = max(child.support - 1, 0)
            self.summable = "yes"
        elif child.expr is not None:
            self.summable = log_weighted_summability(child.expr, 1)
        if self.summable == "yes":
            if self.support is not None and self.exact_values:
                self.tail_mode = EXACT
            elif child.has_second_order():
                self.tail_mode = BRACKETED

    def _value(self, n):
        if self.exact_values:
            return to_mpq(self.child.exact_remainder(n)) / n
        ts = tail_sum(self.child, n, self.tol)
        with mpmath.workprec(PREC):
            return ts.value / n

    def bracket(self, n):
        ts = tail_sum(self.child, n, self.tol)
        with mpmath.workprec(PREC):
            return _mpf(ts.lo) / n, _mpf(ts.hi) / n

    def _exact_block(self, hi):
        T = self.child.exact_tails(hi)
        return [T[n] / n for n in range(1, hi + 1)]

    def _log_block(self, hi):
        lo, up = self.child.log_tails(hi)
        ln = np.log(np.arange(1, hi + 1, dtype=LD))
        with np.errstate(invalid="ignore"):
            mid = np.where(np.isneginf(up), up, 0.5 * (lo + up))
        return mid - ln

    def log_bounds(self, hi):
        lo, up = self.child.log_tails(hi)
        ln = np.log(np.arange(1, hi + 1, dtype=LD))
        return lo - ln, up - ln

    def _remainder(self, W):
        return self.child._am_inf_remainder(W)


class GeoMeanSeq(Sequence):
    """Geometric mean (xi_1 ... xi_n)^(1/n), computed from logarithms."""

    def __init__(self, child: Sequence):
        super().__init__()
        self.child = child
        self.label = f"({child.label})_g"

    def _value(self, n):
        lx = self.child.log_prefix(n)
        if np.isneginf(lx).any():
            raise ValueError(f"zero entry at index {int(np.argmax(np.isneginf(lx))) + 1}")
        with mpmath.workprec(PREC):
            s = mpmath.fsum(mpmath.log(_mpf(self.child.value(j))) for j in range(1, n + 1))
            return mpmath.exp(s / n)

    def _log_block(self, hi):
        lx = self.child.log_prefix(hi)
        if np.isneginf(lx).any():
            raise ValueError(f"zero entry at index {int(np.argmax(np.isneginf(lx))) + 1}")
        return np.cumsum(lx) / np.arange(1, hi + 1, dtype=LD)


# --------------------------------------------------------------------------
# compilation and public operations


def _label(e) -> str:
    from .spec_lang import to_string

    try:
        return to_string(e)
    except Exception:  # pragma: no cover - labels are cosmetic
        return type(e).__name__


_COMPILED = {}
_COMPILE_LOCK = threading.Lock()


def compile_expr(e: SeqExpr) -> Sequence:
    """Build (and memoize) the evaluator for an expression."""
    try:
        cached = _COMPILED.get(e)
    except TypeError:
        cached = None
    if cached is not None:
        return cached
    seq = _compile(e)
    try:
        with _COMPILE_LOCK:
            _COMPILED.setdefault(e, seq)
            seq = _COMPILED[e]
    except TypeError:
        pass
    return seq


def _compile(e: SeqExpr) -> Sequence:
    k = kernel_of(e)
    if k is not None:
        return KernelSeq(k, e)
    if isinstance(e, Scale):
        return ScaleSeq(e.c, compile_expr(e.child), e)
    if isinstance(e, Ampliation):
        return AmpliationSeq(e.m, compile_expr(e.child), e)
    if isinstance(e, Dilution):
        return DilutionSeq(e.m, compile_expr(e.child), e)
    if isinstance(e, Sum):
        return CombineSeq("sum", [compile_expr(t) for t in e.terms], e)
    if isinstance(e, Min):
        return CombineSeq("min", [compile_expr(t) for t in e.terms], e)
    if isinstance(e, Max):
        return CombineSeq("max", [compile_expr(t) for t in e.terms], e)
    if isinstance(e, Product):
        closed = Kernel()
        rest = []
        for f in e.factors:
            kf = kernel_of(f)
            if kf is None:
                rest.append(compile_expr(f))
            else:
                closed = closed.times(kf)
        parts = rest
        if closed != Kernel():
            parts = [KernelSeq(closed)] + rest
        return ProductSeq(parts, e)
    if isinstance(e, PrefixOverride):
        child = compile_expr(e.child) if e.child is not None else None
        return PrefixSeq(e.values, child, e)
    if isinstance(e, PiecewiseConstant):
        return PiecewiseSeq(e)
    raise TypeError(f"cannot compile {e!r}")


def as_sequence(x) -> Sequence:
    if isinstance(x, Sequence):
        return x
    if isinstance(x, SeqExpr):
        return compile_expr(x)
    if isinstance(x, str):
        from .spec_lang import parse

        return compile_expr(parse(x))
    if isinstance(x, (list, tuple)):
        return PrefixSeq(x)
    raise TypeError(f"cannot interpret {x!r} as a sequence")


def eval_at(seq, n: int):
    """xi_n (exact rational when available)."""
    if int(n) < 1:
        raise ValueError("index must be >= 1")
    return as_sequence(seq).value(int(n))


def arithmetic_mean(seq) -> Sequence:
    return MeanSeq(as_sequence(seq))


def am_infinity(seq, tol=1e-30) -> Sequence:
    return AmInfSeq(as_sequence(seq), tol)


def ampliation(seq, m: int) -> Sequence:
    if int(m) < 1:
        raise ValueError("ampliation factor must be >= 1")
    s = as_sequence(seq)
    return s if m == 1 else AmpliationSeq(int(m), s)


def dilution(seq, m: int) -> Sequence:
    if int(m) < 1:
        raise ValueError("dilution factor must be >= 1")
    s = as_sequence(seq)
    return s if m == 1 else DilutionSeq(int(m), s)


def geometric_mean(seq) -> Sequence:
    return GeoMeanSeq(as_sequence(seq))


def monotonize(raw) -> Sequence:
    """Nonincreasing rearrangement of a finite list, zero padded."""
    vals = [to_mpq(Fraction(v) if isinstance(v, str) else v) for v in raw]
    for i, v in enumerate(vals):
        if v < 0:
            raise ValueError(f"negative entry at position {i + 1}")
    order = sorted(range(len(vals)), key=lambda i: (-vals[i], i))
    return PrefixSeq([vals[i] for i in order])


def upper_envelope(raw, tail: Optional[Sequence] = None) -> Sequence:
    """Smallest nonincreasing majorant sup_{j>=n} g_j.

    ``raw`` lists g_1..g_L; ``tail`` (a nonincreasing sequence) supplies
    g_n for n > L, or zeros when omitted.
    """
    vals = [to_mpq(Fraction(v) if isinstance(v, str) else v) for v in raw]
    for i, v in enumerate(vals):
        if v < 0:
            raise ValueError(f"negative entry at position {i + 1}")
    if tail is not None and not vals:
        return tail
    L = len(vals)
    env = [None] * L
    cur = None
    for i in range(L - 1, -1, -1):
        cur = vals[i] if cur is None or vals[i] > cur else cur
        env[i] = cur
    if tail is None:
        return PrefixSeq(env, None, check=False)
    return EnvelopeSeq(env, tail)


class EnvelopeSeq(Sequence):
    """max(suffix maxima of a finite head, first tail value), then the tail."""

    def __init__(self, head, tail: Sequence):
        super().__init__()
        self.head = head
        self.tail = tail
        L = len(head)
        self.label = f"uni({tail.label})"
        self.exact_values = tail.exact_values
        self.summable = tail.summable
        self.tail_mode = tail.tail_mode if tail.tail_mode != EXACT else EXACT
        self._t = tail.value(L + 1)

    def _value(self, n):
        L = len(self.head)
        if n > L:
            return self.tail.value(n)
        h = self.head[n - 1]
        if self.exact_values:
            return max(h, to_mpq(self._t))
        with mpmath.workprec(PREC):
            return max(_mpf(h), _mpf(self._t))

    def _log_block(self, hi):
        L = len(self.head)
        lt = ld_log(self._t)
        head = np.array([max(ld_log(v), lt) for v in self.head[:hi]], dtype=LD)
        if hi <= L:
            return head
        return np.concatenate([head, self.tail.log_prefix(hi)[L:]])

    def _remainder(self, W):
        L = len(self.head)
        if W >= L:
            return self.tail._remainder(W)
        br = self.tail._remainder(L)
        if br is None:
            return None
        with mpmath.workprec(PREC):
            head = mpmath.fsum(_mpf(self.value(j)) for j in range(W + 1, L + 1))
            return head + _mpf(br[0]), head + _mpf(br[1])


def tail_sum(seq, n: int, tol=1e-12, cap: int = TAIL_CAP) -> TailSum:
    """Bracket for sum_{j>n} xi_j with width at most tol."""
    s = as_sequence(seq)
    if s.summable != "yes":
        raise SummabilityError(f"{s.label}: summability is {s.summable}")
    if n < 0:
        raise ValueError("index must be >= 0")
    if s.support is not None and s.exact_values:
        v = s.exact_remainder(n)
        return TailSum(n, v, v, True)
    if s.tail_mode == EXACT:
        lo, hi = s._remainder(n)
        return TailSum(n, lo, hi, True)
    N = n
    prev = None
    with mpmath.workprec(PREC):
        tol_m = _mpf(to_mpq(Fraction(tol))) if not isinstance(tol, mpmath.mpf) else tol
        while True:
            br = s._remainder(N)
            if br is None:
                if N >= cap or s.tail_mode == UNAVAILABLE:
                    raise TailUnavailable(f"no tail bracket for {s.label}")
                N = min(cap, max(2 * N, n + 64))
                continue
            head = _explicit_sum(s, n + 1, N)
            lo = head[0] + _mpf(br[0])
            hi = head[1] + _mpf(br[1])
            width = hi - lo
            if width <= tol_m:
                return TailSum(n, lo, hi, False)
            if N >= cap:
                raise TailUnavailable(f"tail of {s.label} not resolved to {tol} within {cap} terms")
            nxt = min(cap, max(2 * N, n + 64))
            if prev is not None and N >= 1 << 12:
                # extrapolate the narrowing rate; give up before materialising huge prefixes
                rate = prev[1] / width if width > 0 else mpmath.inf
                steps = mpmath.log(width / tol_m) / mpmath.log(rate) if rate > 1 else mpmath.inf
                if N * mpmath.power(2, steps) > 4 * cap:
                    raise TailUnavailable(f"tail of {s.label} would not reach {tol} within {cap} terms")
            prev = (N, width)
            N = nxt


def _explicit_sum(s: Sequence, a: int, b: int):
    """Bracket for sum_{j=a}^{b} xi_j."""
    if b < a:
        return mpmath.mpf(0), mpmath.mpf(0)
    if b - a <= 5000:
        if s.exact_values:
            v = _mpf(sum((to_mpq(s.value(j)) for j in range(a, b + 1)), mpq(0)))
            return v, v
        v = mpmath.fsum(_mpf(s.value(j)) for j in range(a, b + 1))
        err = abs(v) * mpmath.ldexp(1, -PREC + 16)
        return v - err, v + err
    lx = s.log_prefix(b)[a - 1 : b]
    tot = np.exp(lx).sum(dtype=LD)
    bound = float(b - a + 4 + np.max(np.abs(lx[np.isfinite(lx)]), initial=0)) * 2.0 ** -62
    v = mpmath.mpf(str(tot))
    return v * (1 - bound), v * (1 + bound)
