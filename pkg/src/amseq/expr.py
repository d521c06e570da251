"""Symbolic sequence expressions.

Every node describes a nonnegative, nonincreasing sequence indexed from 1.
Closed-form factors (powers of n, powers of ln n, geometric ratios and a
rational scale) are gathered into a single :class:`Kernel` when a sequence
is compiled; the kernel carries the flat-extension index that keeps log
factors monotone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Tuple, Union

Number = Union[int, Fraction]


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x)
    try:
        return Fraction(x)
    except TypeError:
        return Fraction(int(x.numerator), int(x.denominator))


class SeqExpr:
    """Base class of expression nodes (immutable, hashable)."""

    __slots__ = ()

    def children(self) -> Tuple["SeqExpr", ...]:
        return ()


@dataclass(frozen=True)
class OmegaPow(SeqExpr):
    p: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "p", as_fraction(self.p))


@dataclass(frozen=True)
class LogPow(SeqExpr):
    r: Fraction

    def __post_init__(self):
        object.__setattr__(self, "r", as_fraction(self.r))


@dataclass(frozen=True)
class Geom(SeqExpr):
    q: Fraction

    def __post_init__(self):
        object.__setattr__(self, "q", as_fraction(self.q))


@dataclass(frozen=True)
class Ampliation(SeqExpr):
    m: int
    child: SeqExpr

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError("ampliation factor must be >= 1")

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Dilution(SeqExpr):
    m: int
    child: SeqExpr

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError("dilution factor must be >= 1")

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Scale(SeqExpr):
    c: Fraction
    child: SeqExpr

    def __post_init__(self):
        object.__setattr__(self, "c", as_fraction(self.c))
        if self.c <= 0:
            raise ValueError("scale factor must be positive")

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Sum(SeqExpr):
    terms: Tuple[SeqExpr, ...]

    def children(self):
        return self.terms


@dataclass(frozen=True)
class Min(SeqExpr):
    terms: Tuple[SeqExpr, ...]

    def children(self):
        return self.terms


@dataclass(frozen=True)
class Max(SeqExpr):
    terms: Tuple[SeqExpr, ...]

    def children(self):
        return self.terms


@dataclass(frozen=True)
class Product(SeqExpr):
    """Pointwise product; produced by ``*`` and ``/`` chains."""

    factors: Tuple[SeqExpr, ...]

    def children(self):
        return self.factors


@dataclass(frozen=True)
class PrefixOverride(SeqExpr):
    """Explicit leading values; ``child`` (or zero when None) continues the sequence."""

    values: Tuple[Fraction, ...]
    child: Optional[SeqExpr] = None
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(as_fraction(v) for v in self.values))

    def children(self):
        return () if self.child is None else (self.child,)


@dataclass(frozen=True)
class PiecewiseConstant(SeqExpr):
    """Value ``values[k]`` on ``(breakpoints[k-1], breakpoints[k]]``.

    With ``rule`` set the blocks come from the named generator in
    :mod:`amseq.rules` and ``breakpoints``/``values`` are ignored.
    """

    breakpoints: Tuple[int, ...] = ()
    values: Tuple[Fraction, ...] = ()
    rule: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(int(b) for b in self.breakpoints))
        object.__setattr__(self, "values", tuple(as_fraction(v) for v in self.values))
        if self.rule is None:
            if len(self.breakpoints) != len(self.values):
                raise ValueError("breakpoints and values differ in length")
            prev = 0
            for b in self.breakpoints:
                if b <= prev:
                    raise ValueError("breakpoints must strictly increase")
                prev = b
            for a, b in zip(self.values, self.values[1:]):
                if not b < a:
                    raise ValueError("piecewise values must strictly decrease")
            if self.values and self.values[-1] < 0:
                raise ValueError("piecewise values must be nonnegative")


# --------------------------------------------------------------------------
# closed-form kernels


@dataclass(frozen=True)
class Kernel:
    """c * q**n * n**(-p) * ln(n)**r evaluated at max(n, n0)."""

    c: Fraction = Fraction(1)
    q: Fraction = Fraction(1)
    p: Fraction = Fraction(0)
    r: Fraction = Fraction(0)

    @property
    def is_null(self) -> bool:
        return self.q < 1 or self.p > 0 or (self.p == 0 and self.r < 0)

    @property
    def exact_values(self) -> bool:
        return self.r == 0 and self.p.denominator == 1

    @property
    def pure_geom(self) -> bool:
        return self.p == 0 and self.r == 0 and self.q < 1

    def times(self, other: "Kernel") -> "Kernel":
        return Kernel(self.c * other.c, self.q * other.q, self.p + other.p, self.r + other.r)

    def growth_key(self):
        # larger key means asymptotically larger sequence
        return (self.q, -self.p, self.r, self.c)

    def n0(self) -> int:
        return kernel_n0(self)

    def log_weighted_summable(self, m: int) -> bool:
        if self.q < 1:
            return True
        if self.p > 1:
            return True
        if self.p == 1:
            return self.r + m < -1
        return False


def _log_slope(k: Kernel, x: float) -> float:
    # x * d/dx ln f(x)
    lx = math.log(x)
    return x * math.log(k.q) - float(k.p) + (float(k.r) / lx if k.r else 0.0)


def _kernel_log(k: Kernel, n: int) -> float:
    v = float(n) * math.log(k.q) - float(k.p) * math.log(n)
    if k.r:
        v += float(k.r) * math.log(math.log(n))
    return v


def kernel_n0(k: Kernel) -> int:
    """Smallest index from which the kernel is nonincreasing."""
    start = 2 if k.r != 0 else 1
    if k.r == 0 and k.p >= 0:
        return 1
    # scan for the last sign change of the log-slope on a geometric grid
    last_pos = None
    x = 1.0 + 1e-9
    hi = 1.0
    grid = []
    while hi < 1e300:
        grid.append(hi)
        hi = hi * 1.25 + 1
    for g in grid:
        xx = max(g, 1.0 + 1e-9)
        if _log_slope(k, xx) > 0:
            last_pos = xx
    if last_pos is None:
        n = start
    else:
        lo_x, hi_x = last_pos, last_pos * 1.25 + 1
        for _ in range(200):
            mid = 0.5 * (lo_x + hi_x)
            if _log_slope(k, mid) > 0:
                lo_x = mid
            else:
                hi_x = mid
        n = max(start, int(math.ceil(hi_x)))
    while n > start and _kernel_log(k, n - 1) >= _kernel_log(k, n):
        n -= 1
    return n


def kernel_of(e: SeqExpr) -> Optional[Kernel]:
    """Collapse a closed-form product into a kernel, or None."""
    if isinstance(e, OmegaPow):
        return Kernel(p=e.p)
    if isinstance(e, LogPow):
        return Kernel(r=e.r)
    if isinstance(e, Geom):
        return Kernel(q=e.q)
    if isinstance(e, Scale):
        inner = kernel_of(e.child)
        if inner is None:
            return None
        return Kernel(e.c, Fraction(1), Fraction(0), Fraction(0)).times(inner)
    if isinstance(e, Product):
        acc = Kernel()
        for f in e.factors:
            kf = kernel_of(f)
            if kf is None:
                return None
            acc = acc.times(kf)
        return acc
    if isinstance(e, Dilution):
        inner = kernel_of(e.child)
        if inner is None or inner.r != 0 or inner.p.denominator != 1:
            return None
        # (c q^{mn} (mn)^{-p}) = c m^{-p} (q^m)^n n^{-p}
        m = int(e.m)
        return Kernel(inner.c * Fraction(m) ** (-int(inner.p)), inner.q ** m, inner.p, Fraction(0))
    return None


# --------------------------------------------------------------------------
# symbolic summability with logarithmic weights

YES, NO, UNKNOWN = "yes", "no", "unknown"


def log_weighted_summability(e: SeqExpr, m: int = 0) -> str:
    """Decide sum_n e_n * ln(n)**m < oo by integral-test rules."""
    from . import rules

    k = kernel_of(e)
    if k is not None:
        return YES if k.log_weighted_summable(m) else NO
    if isinstance(e, (Scale, Ampliation, Dilution)):
        return log_weighted_summability(e.child, m)
    if isinstance(e, PrefixOverride):
        return YES if e.child is None else log_weighted_summability(e.child, m)
    if isinstance(e, PiecewiseConstant):
        if e.rule is None:
            return YES
        return rules.get(e.rule).log_weighted_summable(m)
    if isinstance(e, Sum):
        verdicts = [log_weighted_summability(t, m) for t in e.terms]
        if NO in verdicts:
            return NO
        return YES if all(v == YES for v in verdicts) else UNKNOWN
    if isinstance(e, (Min, Max)):
        ks = [kernel_of(t) for t in e.terms]
        if all(x is not None for x in ks):
            pick = (min if isinstance(e, Min) else max)(ks, key=Kernel.growth_key)
            return YES if pick.log_weighted_summable(m) else NO
        verdicts = [log_weighted_summability(t, m) for t in e.terms]
        if isinstance(e, Min):
            return YES if YES in verdicts else UNKNOWN
        if NO in verdicts:
            return NO
        return YES if all(v == YES for v in verdicts) else UNKNOWN
    if isinstance(e, Product):
        kern = [kernel_of(f) for f in e.factors]
        closed = Kernel()
        others = 0
        for kf in kern:
            if kf is None:
                others += 1
            else:
                closed = closed.times(kf)
        # the remaining factors are bounded nonincreasing, so summability of
        # the closed part is enough
        if closed.is_null and closed.r <= 0 and closed.log_weighted_summable(m):
            return YES
        return UNKNOWN
    return UNKNOWN


def am_infinity_class(e: SeqExpr) -> Optional[SeqExpr]:
    """An expression asymptotically equivalent (up to constants) to e_{a,oo}.

    Only closed forms and the operations that commute with the transform up to
    constants are handled; returns None otherwise.
    """
    k = kernel_of(e)
    if k is not None:
        if not k.log_weighted_summable(0):
            return None
        if k.q < 1:
            # tail of c q^n n^-p ln^r n is comparable to the first term
            return _kernel_expr(Kernel(k.c, k.q, k.p + 1, k.r))
        if k.p > 1:
            return _kernel_expr(Kernel(k.c, k.q, k.p, k.r))
        # p == 1, r < -1: tail ~ ln^{r+1} n / |r+1|
        return _kernel_expr(Kernel(k.c, k.q, k.p, k.r + 1))
    if isinstance(e, Scale):
        inner = am_infinity_class(e.child)
        return None if inner is None else Scale(e.c, inner)
    if isinstance(e, Ampliation):
        inner = am_infinity_class(e.child)
        return None if inner is None else Ampliation(e.m, inner)
    if isinstance(e, Sum):
        parts = [am_infinity_class(t) for t in e.terms]
        if any(p is None for p in parts):
            return None
        return Sum(tuple(parts))
    return None


def _kernel_expr(k: Kernel) -> SeqExpr:
    factors = []
    if k.p != 0:
        factors.append(OmegaPow(k.p))
    if k.r != 0:
        factors.append(LogPow(k.r))
    if k.q != 1:
        factors.append(Geom(k.q))
    if not factors:
        raise ValueError("constant kernel is not a null sequence")
    body = factors[0] if len(factors) == 1 else Product(tuple(factors))
    return body if k.c == 1 else Scale(k.c, body)


def walk(e: SeqExpr):
    yield e
    for ch in e.children():
        yield from walk(ch)


def is_symbolic(e: SeqExpr) -> bool:
    """True when no node depends on explicit data files or inline prefixes."""
    return not any(isinstance(x, PrefixOverride) for x in walk(e))
