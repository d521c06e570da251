"""Principal ideals described by their generators.

Membership follows the characteristic-set rule: eta lies in (xi) iff
eta = O(D_m xi) for some m.  Only finitely many m and a finite window can be
probed, so every answer is a ClassReport with a three-valued verdict.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import mpmath
import numpy as np

from . import classify as C
from .classify import FAILS, HOLDS, INCONCLUSIVE, ClassReport
from .expr import LogPow, OmegaPow, Product, SeqExpr, is_symbolic, log_weighted_summability
from .sequence import AmInfSeq, AmpliationSeq, MeanSeq, Sequence, as_sequence

M_MAX = 64


@dataclass
class PrincipalIdeal:
    generator: Sequence
    m_max: int = M_MAX
    window: Optional[int] = None

    def __init__(self, generator, m_max: int = M_MAX, window: Optional[int] = None):
        self.generator = as_sequence(generator)
        self.m_max = m_max
        self.window = window

    @property
    def expr(self) -> Optional[SeqExpr]:
        return self.generator.expr

    @property
    def label(self) -> str:
        return f"({self.generator.label})"

    def contains(self, eta) -> ClassReport:
        return member(eta, self, self.m_max, self.window)

    def equal_at_depth(self, other: "PrincipalIdeal") -> str:
        """holds / fails / inconclusive for mutual membership of the generators."""
        a = member(other.generator, self, self.m_max, self.window).verdict
        b = member(self.generator, other, other.m_max, other.window).verdict
        if a == HOLDS and b == HOLDS:
            return HOLDS
        if FAILS in (a, b):
            return FAILS
        return INCONCLUSIVE

    def __eq__(self, other):
        if not isinstance(other, PrincipalIdeal):
            return NotImplemented
        return self.equal_at_depth(other) == HOLDS

    __hash__ = None

    def __repr__(self):
        return f"PrincipalIdeal{self.label}"


@dataclass(frozen=True)
class SeOmegaMarker:
    """The soft interior se(omega); not a principal ideal."""

    label: str = "se(omega)"


SE_OMEGA = SeOmegaMarker()


@dataclass
class TraceVerdict:
    value: str  # zero | one | uncountable | unknown
    chain: List[Tuple[str, str]] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "chain": [{"rule": r, "verdict": v} for r, v in self.chain],
            "notes": list(self.notes),
            "details": self.details,
        }


@dataclass
class LorentzLevel:
    """Lorentz sequence space with weight log^m."""

    m: int

    def contains(self, e) -> str:
        return lorentz_member(e, self.m)

    def __str__(self):
        return f"L(sigma(log^{self.m}))"


@dataclass
class ThreeWay:
    value: str  # small | large | intermediate | unknown-at-depth
    depth: int
    caveat: bool = True
    small_evidence: List[str] = field(default_factory=list)
    large_evidence: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "depth": self.depth,
            "caveat": self.caveat,
            "small_evidence": self.small_evidence,
            "large_evidence": self.large_evidence,
        }


def _ideal(x) -> PrincipalIdeal:
    return x if isinstance(x, PrincipalIdeal) else PrincipalIdeal(x)


def _m_ladder(m_max: int) -> List[int]:
    out, m = [], 1
    while m <= m_max:
        out.append(m)
        m *= 2
    if out[-1] != m_max:
        out.append(m_max)
    return out


def _far_ratio(eta: Sequence, xi: Sequence, m: int, N: int):
    pe, px = C.far_points(eta, N), C.far_points(xi, N)
    pts = sorted(set(pe) | set(px))
    if pe and px:
        # past the last probe of either side its features go unsampled
        top = min(max(pe), max(px))
        pts = [n for n in pts if n <= top]
    out = []
    with mpmath.workdps(30):
        for n in pts:
            a = eta.far_log(n)
            b = xi.far_log(-(-n // m))
            if a is None or b is None:
                return []
            if a == mpmath.ninf:
                v = math.nan if b == mpmath.ninf else 0.0
            elif b == mpmath.ninf:
                v = math.inf
            else:
                d = float(a - b)
                v = math.exp(d) if d < 700 else math.inf
            out.append((n, v))
    return out


def _ratio_stat(eta: Sequence, xi: Sequence, m: int, N: int):
    le = eta.log_prefix(N)
    lx = AmpliationSeq(m, xi).log_prefix(N)
    return C.ratio(le, lx), _far_ratio(eta, xi, m, N)


def _member_at(eta: Sequence, xi: Sequence, m: int, N: int, to_zero: bool) -> C.Trend:
    st, far = _ratio_stat(eta, xi, m, N)
    if to_zero:
        return C.trend_to_zero(st, far=far)
    tr = C.trend_of(st, far=far)
    if tr.kind == "bounded":
        tr.sup = max(float(np.nanmax(st)) if np.any(~np.isnan(st)) else 0.0, tr.sup)
    return tr


def _search(eta, ideal, m_max, window, to_zero: bool, prop: str) -> ClassReport:
    eta = as_sequence(eta)
    ideal = _ideal(ideal)
    xi = ideal.generator
    N = C._window(xi, window if window is not None else ideal.window)
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    good = "diverging" if to_zero else "bounded"
    tried = {}
    first = None
    for m in _m_ladder(m_max):
        tr = _member_at(eta, xi, m, N, to_zero)
        tried[m] = tr.kind
        if tr.kind == good:
            first = m
            break
    if first is None:
        kinds = set(tried.values())
        last = max(tried)
        if kinds == {"bounded" if to_zero else "diverging"}:
            tr = _member_at(eta, xi, last, N, to_zero)
            return ClassReport(
                prop, FAILS, (1, N), witness=tr.witness, notes=[f"no m <= {m_max} works"],
                stats={"tried": tried},
            )
        return ClassReport(prop, INCONCLUSIVE, (1, N), notes=["trend unsettled for some m"], stats={"tried": tried})
    # smallest working m below the dyadic hit (ampliation is monotone in m)
    lo, hi = first // 2, first
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _member_at(eta, xi, mid, N, to_zero).kind == good:
            hi = mid
        else:
            lo = mid
    tr = _member_at(eta, xi, hi, N, to_zero)
    rep = ClassReport(prop, HOLDS, (1, N), stats={"m": hi, "tried": tried})
    rep.constant = tr.sup if not to_zero else None
    return rep


def member(eta, ideal, m_max: int = M_MAX, window=None) -> ClassReport:
    """eta = O(D_m xi) for some m <= m_max; stats['m'] and constant record the witness pair."""
    return _search(eta, ideal, m_max, window, False, "member")


def se_member(eta, ideal, m_max: int = M_MAX, window=None) -> ClassReport:
    """Soft-interior test: eta / D_m xi -> 0 for some m <= m_max."""
    return _search(eta, ideal, m_max, window, True, "se_member")


def principal_am(ideal) -> PrincipalIdeal:
    ideal = _ideal(ideal)
    return PrincipalIdeal(MeanSeq(ideal.generator), ideal.m_max, ideal.window)


def principal_am_infty(ideal):
    ideal = _ideal(ideal)
    g = ideal.generator
    s = g.summable
    if s == "unknown" and g.expr is not None:
        s = log_weighted_summability(g.expr, 0)
    if s == "unknown":
        raise ValueError(
            f"summability of {g.label} is undecided; settle it with symbolic_summability or supply a summable form"
        )
    if s == "no":
        return SE_OMEGA
    return PrincipalIdeal(AmInfSeq(g), ideal.m_max, ideal.window)


def lorentz_member(e, m: int) -> str:
    """Symbolic decision of sum xi_n log^m n < infinity."""
    if m < 0:
        raise ValueError("m must be >= 0")
    if isinstance(e, str):
        from .spec_lang import parse

        e = parse(e)
    if isinstance(e, Sequence):
        if e.expr is None:
            return "unknown"
        e = e.expr
    return log_weighted_summability(e, m)


def _omega_log(m: int) -> SeqExpr:
    return OmegaPow(1) if m == 0 else Product((OmegaPow(1), LogPow(m)))


def stabilizer_tower(kind: str, depth: int):
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if kind == "am_upper":
        return [_omega_log(m) for m in range(depth + 1)]
    if kind == "am_infty_lower":
        return [LorentzLevel(m) for m in range(depth + 1)]
    raise ValueError(f"unknown tower {kind!r}")


def three_way_class(ideal, depth: int = 3, window=None) -> ThreeWay:
    ideal = _ideal(ideal)
    g = ideal.expr
    if g is None or not is_symbolic(g):
        raise ValueError("three-way classification needs a symbolic generator")
    small = [lorentz_member(g, m) for m in range(depth + 1)]
    large = [member(_omega_log(m), ideal, ideal.m_max, window).verdict for m in range(depth + 1)]
    out = ThreeWay(
        "unknown-at-depth",
        depth,
        small_evidence=[f"log^{m}: {v}" for m, v in enumerate(small)],
        large_evidence=[f"omega*log^{m}: {v}" for m, v in enumerate(large)],
    )
    if all(v == "yes" for v in small):
        out.value = "small"
    elif all(v == HOLDS for v in large):
        out.value = "large"
    elif "no" in small and FAILS in large:
        out.value = "intermediate"
    return out


def trace_dimension(ideal, window=None, m_max: int = M_MAX) -> TraceVerdict:
    ideal = _ideal(ideal)
    g = ideal.generator
    tv = TraceVerdict("unknown")
    if g.support is not None:
        # the finite-rank ideal: the usual trace is the only one up to scalars
        if g.support == 0:
            raise ValueError("the zero sequence generates the zero ideal")
        tv.chain.append(("finite_support", HOLDS))
        tv.value = "one"
        tv.notes.append(f"finitely supported generator (last nonzero index {g.support})")
        return tv
    om = member(OmegaPow(1), ideal, m_max, window)
    tv.chain.append(("omega_membership", om.verdict))
    tv.details["omega_membership"] = om.to_dict()
    if om.verdict == HOLDS:
        reg = C.check_regular(g, window)
        tv.chain.append(("regularity", reg.verdict))
        tv.details["regularity"] = reg.to_dict()
        if reg.verdict == HOLDS:
            tv.value = "zero"
            tv.notes.append("am-stable ideal containing omega: no nonzero trace")
        elif reg.verdict == FAILS:
            tv.value = "uncountable"
            tv.notes.append("omega in the ideal but the generator is irregular")
        return tv
    if om.verdict == INCONCLUSIVE:
        return tv
    summ = g.summable
    if summ == "unknown" and g.expr is not None:
        summ = log_weighted_summability(g.expr, 0)
    tv.chain.append(("summability", {"yes": HOLDS, "no": FAILS}.get(summ, INCONCLUSIVE)))
    if summ == "no":
        tv.value = "uncountable"
        tv.notes.append("non-summable generator outside the trace class is not am-infinity stable")
        return tv
    if summ != "yes":
        return tv
    cc = C.cross_check_412(g, window)
    v = cc.verdict if cc.agreement else INCONCLUSIVE
    tv.chain.append(("infty_regularity", v))
    tv.details["infty_regularity"] = cc.to_dict()
    if v == HOLDS:
        tv.value = "one"
        bad = [m for m in range(4) if g.expr is not None and lorentz_member(g.expr, m) == "no"]
        if bad:
            tv.notes.append(f"inconsistent: Lorentz membership fails at log^{bad[0]}")
    elif v == FAILS:
        tv.value = "uncountable"
    return tv
