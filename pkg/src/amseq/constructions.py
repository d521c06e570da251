"""Constructive procedures with finite-horizon certificates.

Every builder returns the sequences it produced together with a
ConstructionCertificate that lists each defining condition it verified.
A certificate with a failing entry is raised as ConstructionError unless the
caller passes ``allow_partial=True``.

Several constructions run far past any materialisable window (block indices
around 2^200 are routine).  For closed-form inputs of the shape
c * n^-p * ln(n)^r, partial sums over huge ranges come from an
Euler-Maclaurin expansion with analytic derivatives, evaluated with mpmath at
a precision tied to the index budget.  Whenever the construction says "choose
large enough" the smallest qualifying index is taken.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Tuple

import mpmath
import numpy as np
from gmpy2 import mpq

from . import classify as C
from . import rules
from .classify import FAILS, HOLDS, INCONCLUSIVE, ClassReport
from .expr import LogPow, OmegaPow, PiecewiseConstant, Product, log_weighted_summability
from .sequence import (
    BRACKETED,
    LD,
    NEG_INF,
    KernelSeq,
    PrefixSeq,
    Sequence,
    _mpf,
    as_sequence,
    compile_expr,
    ld_log,
    to_mpq,
)

INDEX_BUDGET = 10 ** 6  # materialised prefixes never grow past this
LAZY_CAP = 1 << 256  # default index cap for closed-form inputs
LEVELS = 20


class ConstructionError(ValueError):
    def __init__(self, msg: str, certificate: "Optional[ConstructionCertificate]" = None):
        super().__init__(msg)
        self.certificate = certificate


class IndexBudgetError(ConstructionError):
    pass


@dataclass
class Check:
    holds: bool
    witness: Any = None
    detail: str = ""


def _plain(x):
    if isinstance(x, mpmath.mpf):
        return mpmath.nstr(x, 17)
    if isinstance(x, type(mpq(0))) or isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else int(x.numerator)
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, Sequence):
        return x.label
    return C._jsonable(x)


@dataclass
class ConstructionCertificate:
    name: str
    horizon: Any
    checklist: Dict[str, Check] = field(default_factory=dict)
    sequences: Dict[str, Any] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)
    stats: Dict[str, Any] = field(default_factory=dict)

    def check(self, name: str, holds: bool, witness=None, detail: str = "") -> bool:
        self.checklist[name] = Check(bool(holds), witness, detail)
        return bool(holds)

    @property
    def ok(self) -> bool:
        return all(c.holds for c in self.checklist.values())

    @property
    def failures(self) -> List[str]:
        return [k for k, c in self.checklist.items() if not c.holds]

    def to_dict(self) -> dict:
        return {
            "construction": self.name,
            "horizon": _plain(self.horizon),
            "ok": self.ok,
            "checklist": {
                k: {"verdict": HOLDS if c.holds else FAILS, "witness": _plain(c.witness), "detail": c.detail}
                for k, c in self.checklist.items()
            },
            "sequences": {k: _plain(v) for k, v in self.sequences.items()},
            "notes": list(self.notes),
            "stats": _plain(self.stats),
        }


def _finish(cert: ConstructionCertificate, allow_partial: bool) -> ConstructionCertificate:
    if not cert.ok and not allow_partial:
        bad = cert.failures[0]
        raise ConstructionError(
            f"{cert.name}: condition {bad!r} fails (witness {_plain(cert.checklist[bad].witness)})", cert
        )
    return cert


def _dps_for(cap: int) -> int:
    # sums grow at most like the index while single terms shrink like its
    # inverse, so twice the decimal length resolves one term against a sum
    return 40 + 2 * (int(cap).bit_length() * 30103 // 100000 + 1)


# --------------------------------------------------------------------------
# partial sums at arbitrary indices

# B_{2i} / (2i)! for the Euler-Maclaurin corrections
_EM_TERMS = 10


def _em_coefficients():
    out = []
    for i in range(1, _EM_TERMS + 1):
        out.append(mpmath.bernoulli(2 * i) / mpmath.factorial(2 * i))
    return out


class _KernelSums:
    """Sums of c * x^-p * ln(x)^r (evaluated at max(n, n0)) over integer ranges."""

    HEAD = 1 << 14

    def __init__(self, seq: KernelSeq, dps: int):
        k = seq.k
        if k.q != 1:
            raise ValueError("lazy sums need a power/log closed form without geometric factor")
        self.seq = seq
        self.dps = dps
        self.n0 = seq.n0
        self.A = max(self.HEAD, self.n0 + 1)
        with mpmath.workdps(dps):
            self.c = _mpf(k.c)
            self.p = _mpf(k.p)
            self.r = _mpf(k.r)
            self.lnc = mpmath.log(self.c)
            self.em = _em_coefficients()
        self.pq, self.rq = Fraction(k.p), Fraction(k.r)
        # derivative of order d: x^-(p+d) * sum_b coef_b ln(x)^(r-b)
        ders = [{0: mpmath.mpf(1)}]
        with mpmath.workdps(dps):
            for d in range(1, 2 * _EM_TERMS):
                prev = ders[-1]
                a = self.p + (d - 1)
                nxt: Dict[int, Any] = {}
                for b, coef in prev.items():
                    nxt[b] = nxt.get(b, 0) - a * coef
                    e = self.r - b
                    if e != 0:
                        nxt[b + 1] = nxt.get(b + 1, 0) + e * coef
                ders.append(nxt)
        self.ders = ders
        self._head: Optional[List] = None
        self._corr_cache: Dict[int, Tuple] = {}

    # values
    def log_real(self, x):
        x = mpmath.mpf(x)
        if x < self.n0:
            x = mpmath.mpf(self.n0)
        v = self.lnc - self.p * mpmath.log(x)
        if self.r:
            v += self.r * mpmath.log(mpmath.log(x))
        return v

    def log_value(self, n: int):
        return self.log_real(max(int(n), self.n0))

    def value(self, n: int):
        return mpmath.exp(self.log_value(n))

    def _f(self, x):
        return mpmath.exp(self.log_real(x))

    def _corrections(self, x):
        """f(x) and sum_i B_2i/(2i)! f^(2i-1)(x), sharing one log evaluation."""
        key = x if isinstance(x, int) else None
        if key is not None and key in self._corr_cache:
            return self._corr_cache[key]
        x = mpmath.mpf(x)
        lx = mpmath.log(x)
        L = lx
        base = mpmath.exp(self.lnc - self.p * lx + (self.r * mpmath.log(L) if self.r else 0))
        invx, invL = 1 / x, 1 / L
        s = mpmath.mpf(0)
        xd = mpmath.mpf(1)
        for i, coef in enumerate(self.em, 1):
            d = 2 * i - 1
            xd = invx if d == 1 else xd * invx * invx
            inner = mpmath.mpf(0)
            for b, cb in self.ders[d].items():
                inner += cb * invL ** b
            s += coef * inner * xd
        out = (base, s * base)
        if key is not None:
            if len(self._corr_cache) > 256:
                self._corr_cache.clear()
            self._corr_cache[key] = out
        return out

    def _integral(self, a, b):
        if self.pq == 1:
            la, lb = mpmath.log(a), mpmath.log(b)
            if self.rq == -1:
                return self.c * (mpmath.log(lb) - mpmath.log(la))
            e = self.r + 1
            return self.c * (mpmath.power(lb, e) - mpmath.power(la, e)) / e
        if self.rq == 0:
            e = 1 - self.p
            return self.c * (mpmath.power(b, e) - mpmath.power(a, e)) / e
        return self.c * mpmath.quad(
            lambda t: mpmath.exp((1 - self.p) * t) * mpmath.power(t, self.r), [mpmath.log(a), mpmath.log(b)]
        )

    def _em(self, a, b):
        """sum_{j=a}^{b} f(j) for a >= A; b may be real (continuous extension)."""
        fa, ca = self._corrections(a)
        fb, cb = self._corrections(b)
        return self._integral(mpmath.mpf(a), mpmath.mpf(b)) + (fa + fb) / 2 + cb - ca

    def _head_sums(self):
        if self._head is None:
            acc = mpmath.mpf(0)
            out = [acc]
            for j in range(1, self.A):
                acc += self._f(max(j, self.n0))
                out.append(acc)
            self._head = out
        return self._head

    def sum(self, a: int, b) -> Any:
        """sum_{j=a}^{b} xi_j; b may be a real number >= A."""
        if b < a:
            return mpmath.mpf(0)
        if a >= self.A:
            return self._em(a, b)
        h = self._head_sums()
        if b < self.A:
            if isinstance(b, int):
                return h[b] - h[a - 1]
            bi = int(mpmath.floor(b))
            return h[bi] - h[a - 1] + (b - bi) * self._f(bi + 1)
        return h[self.A - 1] - h[a - 1] + self._em(self.A, b)


class _ArraySums:
    """Materialised fallback for sequences without a closed form."""

    def __init__(self, seq: Sequence, budget: int):
        self.seq = seq
        self.budget = budget
        self._vals = None
        self._cum = None

    def _grow(self, n: int):
        if n > self.budget:
            raise IndexBudgetError(f"index {n} exceeds the materialisation budget {self.budget} for {self.seq.label}")
        if self._vals is None or len(self._vals) < n:
            hi = min(self.budget, max(n, 1 << 12, 2 * (0 if self._vals is None else len(self._vals))))
            lx = self.seq.log_prefix(hi)
            self._log = lx
            self._vals = np.exp(lx.astype(np.float64))
            self._cum = np.concatenate([[0.0], np.cumsum(self._vals)])

    def log_value(self, n: int):
        far = self.seq.far_log(n)
        if far is not None:
            return far
        self._grow(n)
        v = self._log[n - 1]
        return mpmath.ninf if np.isneginf(v) else mpmath.mpf(float(v))

    def value(self, n: int):
        return mpmath.exp(self.log_value(n))

    def sum(self, a: int, b) -> Any:
        b = int(b)
        if b < a:
            return mpmath.mpf(0)
        self._grow(b)
        return mpmath.mpf(float(self._cum[b] - self._cum[a - 1]))


def _sums(seq: Sequence, dps: int, budget: int = INDEX_BUDGET):
    if isinstance(seq, KernelSeq) and seq.k.q == 1:
        return _KernelSums(seq, dps)
    return _ArraySums(seq, budget)


def _first_hit(pred: Callable[[int], bool], lo: int, cap: int, cont=None) -> Optional[int]:
    """Smallest n in [lo, cap] with pred(n), assuming pred switches once from false to true.

    ``cont = (g, target)`` gives a continuous increasing g with pred(n) == (g(n) >= target);
    it is used to jump near the crossing before the integer bisection.
    """
    if pred(lo):
        return lo
    prev, step = lo, 1
    while True:
        hi = lo + step
        if hi >= cap:
            if not pred(cap):
                return None
            hi = cap
            break
        if pred(hi):
            break
        prev = hi
        step *= 2
    if cont is not None and hi - prev > 64:
        g, target = cont
        try:
            x = mpmath.findroot(
                lambda t: g(t) - target, (mpmath.mpf(prev), mpmath.mpf(hi)), solver="illinois", verify=False, maxsteps=400
            )
            guess = int(mpmath.ceil(x))
        except (ValueError, ZeroDivisionError):
            guess = None
        if guess is not None and prev < guess < hi:
            d = 1
            if pred(guess):
                hi = guess
                while guess - d > prev and pred(guess - d):
                    hi = guess - d
                    d *= 2
                prev = max(prev, guess - d)
            else:
                prev = guess
                while guess + d < hi and not pred(guess + d):
                    prev = guess + d
                    d *= 2
                hi = min(hi, guess + d)
    while hi - prev > 1:
        mid = (prev + hi) // 2
        if pred(mid):
            hi = mid
        else:
            prev = mid
    return hi


def _probe_points(lo: int, hi: int, count: int) -> List[int]:
    """Endpoints plus roughly log-uniform interior points of [lo, hi]."""
    if hi < lo:
        return []
    pts = {lo, hi}
    if hi - lo > 1 and count > 0:
        span = math.log(hi) - math.log(lo) if lo > 0 else math.log(hi + 1)
        base = math.log(max(lo, 1))
        for i in range(1, count + 1):
            x = base + span * i / (count + 1)
            v = int(math.exp(x)) if x < 700 else int(mpmath.floor(mpmath.exp(x)))
            if lo < v < hi:
                pts.add(v)
    return sorted(pts)


def _summability(seq: Sequence) -> str:
    s = seq.summable
    if s == "unknown" and seq.expr is not None:
        s = log_weighted_summability(seq.expr, 0)
    return s


# --------------------------------------------------------------------------
# block sequences of the form eps_k on (n_{k-1}, n_k]


def example_45_iii(
    n_rule=None, eps_rule=None, K: int = 12, *, weighted_tail=None, name: str = "ex45iii-custom", allow_partial=False
):
    """Block sequence xi = eps_k on (n_{k-1}, n_k] with n_k >= k n_{k-1}.

    ``n_rule`` may be a registered rule name, or a callable (k, n_{k-1}) -> n_k
    paired with ``eps_rule`` (k, n_k) -> eps_k.  Callables also need
    ``weighted_tail(k) = sum_{j>k} eps_j n_j`` in closed form so the weighted
    mass is known to be finite.  With no arguments the superfactorial rule
    n_k = k! n_{k-1}, eps_k = 4^-k / n_k is used.
    """
    if K < 2:
        raise ValueError("need at least two blocks")
    if n_rule is None and eps_rule is None:
        n_rule = "ex45iii"
    if isinstance(n_rule, str):
        rule = rules.get(n_rule)
        br, val, wt = rule.breakpoint, rule.value, rule.weighted_tail
        rule_name = n_rule
    else:
        br = n_rule
        val = eps_rule if eps_rule is not None else (lambda k, nk: Fraction(1, 4 ** k * nk))
        wt = weighted_tail
        rule = None
        rule_name = name
    cert = ConstructionCertificate("example_45_iii", horizon={"blocks": K})
    bl: List[Tuple[int, Fraction]] = []
    prev = 0
    for k in range(1, K + 1):
        nk = int(br(k, prev))
        ek = Fraction(val(k, nk))
        bl.append((nk, ek))
        prev = nk
    ns = [b for b, _ in bl]
    es = [e for _, e in bl]
    cert.check("n_1 = 1", ns[0] == 1, witness=ns[0])
    bad = next((k for k in range(2, K + 1) if ns[k - 1] < k * ns[k - 2]), None)
    cert.check("n_k >= k n_(k-1)", bad is None, witness=bad, detail="" if bad is None else f"n_{bad} = {ns[bad - 1]} < {bad} * {ns[bad - 2]}")
    bad = next((k for k in range(1, K + 1) if es[k - 1] <= 0), None)
    cert.check("eps_k > 0", bad is None, witness=bad)
    bad = next((k for k in range(2, K + 1) if not es[k - 1] < es[k - 2]), None)
    cert.check("eps_k strictly decreasing", bad is None, witness=bad)
    weights = [e * n for n, e in bl]
    cert.stats["weighted_partial_sum"] = sum(weights, Fraction(0))
    if cert.failures:
        # block rules are violated: abort before touching summability
        _finish(cert, allow_partial)
    cert.check("sum eps_k n_k finite", wt is not None, detail="closed-form tail supplied" if wt else "no closed-form tail")
    if wt is not None:
        tails = [Fraction(wt(k)) for k in range(1, K + 1)]
        cert.stats["weighted_tail"] = tails
        ratios = [weights[k] / tails[k] if tails[k] else None for k in range(K)]
        cert.stats["side_ratio"] = [float(r) if r is not None else None for r in ratios]
        fin = [r for r in ratios if r is not None]
        half = max(fin[: max(1, len(fin) // 2)]) if fin else None
        if fin and all(r == fin[0] for r in fin):
            side = HOLDS
        elif fin and max(fin) <= half:
            side = HOLDS
        else:
            side = INCONCLUSIVE
        cert.stats["am_infty_delta_half"] = side
        cert.notes.append(
            "eps_k n_k = O(sum_{j>k} eps_j n_j) "
            + ("holds on the supplied rule" if side == HOLDS else "could not be settled from the supplied rule")
        )
    else:
        cert.stats["am_infty_delta_half"] = "unknown"
    if rule is None and wt is not None:
        rules.register(
            rules.BlockRule(
                name=rule_name,
                breakpoint=br,
                value=val,
                mass_after=lambda k: Fraction(wt(k)),
                weighted_tail=lambda k: Fraction(wt(k)),
                description="user supplied block rule",
            )
        )
    if rule is None and wt is None:
        expr = PiecewiseConstant(tuple(ns), tuple(es))
        cert.notes.append("summability unknown: returning the finite truncation to K blocks")
    else:
        expr = PiecewiseConstant(rule=rule_name)
    cert.sequences["xi"] = expr
    cert.stats["blocks"] = [(n, e) for n, e in bl[: min(K, 6)]]
    return expr, _finish(cert, allow_partial)


def example_422(K: int = 6, probes: int = 1000, allow_partial=False):
    """eta = 1/m_k^2 on (m_{k-1}, m_k], m_k = (k!)^2: touches omega^2 at every m_k."""
    if K < 2:
        raise ValueError("K must be >= 2")
    expr = PiecewiseConstant(rule="ex422")
    eta = compile_expr(expr)
    bl = eta.blocks(K)
    mk = [b for b, _ in bl]
    cert = ConstructionCertificate("example_422", horizon={"blocks": K, "max_index": mk[-1]})
    # eta <= omega^2 at stratified probes, exact rationals
    pts = set(mk) | {b + 1 for b in mk[:-1]}
    strata = probes - len(pts)
    per = max(1, strata // K)
    prev = 0
    for b in mk:
        pts.update(_probe_points(prev + 1, b, per))
        prev = b
    pts = sorted(pts)[:probes] if len(pts) > probes else sorted(pts)
    worst = None
    for j in pts:
        v = to_mpq(eta.value(j))
        if v * j * j > 1:
            worst = j
            break
    cert.check("eta <= omega^2", worst is None, witness=worst, detail=f"{len(pts)} probes up to m_{K} = {mk[-1]}")
    touch = [to_mpq(eta.value(m)) * m * m for m in mk]
    bad = next((k for k, t in enumerate(touch, 1) if t != 1), None)
    cert.check("eta_(m_k) / omega^2_(m_k) = 1", bad is None, witness=bad)
    cert.stats["touch_points"] = mk
    cert.stats["probes"] = len(pts)
    cert.sequences["eta"] = expr
    return expr, _finish(cert, allow_partial)


def remark_42_witness(j: int):
    """Indicator of [1, 2j-1]: (D_2 xi_aoo)_(2j-1) = (j-1)/j < 1 = xi_(2j-1)."""
    if j < 2:
        raise ValueError("j must be >= 2")
    n = 2 * j - 1
    xi = PrefixSeq([1] * n)
    cert = ConstructionCertificate("remark_42_witness", horizon={"j": j, "support": n})
    # (D_2 eta)_n = eta_ceil(n/2) = eta_j and (xi_aoo)_j = (2j-1-j)/j
    tail = xi.exact_remainder(j)
    lhs = to_mpq(tail) / j
    cert.check("(D_2 xi_aoo)_(2j-1) = (j-1)/j", lhs == mpq(j - 1, j), witness=lhs)
    cert.check("(D_2 xi_aoo)_(2j-1) < xi_(2j-1)", lhs < to_mpq(xi.value(n)), witness=lhs)
    aoo = [to_mpq(xi.exact_remainder(m)) / m for m in range(1, n + 2)]
    bad = next((m for m in range(1, n + 2) if aoo[m - 1] != (mpq(n - m, m) if m < n else 0)), None)
    cert.check("(xi_aoo)_n = (2j-1-n)/n", bad is None, witness=bad)
    cert.stats["value"] = lhs
    cert.sequences["xi"] = xi
    return xi, _finish(cert, False)


# --------------------------------------------------------------------------
# block construction of a summable eta <= xi with alpha <= tail(eta)


class BlockEtaSeq(Sequence):
    """eta = xi_(n_k) on (m_(k-1), n_k) and xi on [n_k, m_k]; zero past the last block."""

    def __init__(self, xi: Sequence, sums, blocks: List[dict], total):
        super().__init__()
        self.xi = xi
        self.sums = sums
        self.blocks = blocks
        self.ends = [b["m"] for b in blocks]
        self.support = self.ends[-1]
        self.summable = "yes"
        self.tail_mode = BRACKETED
        self.total = total
        self.label = f"block_eta({xi.label}, {len(blocks)} blocks)"

    def _block(self, n: int):
        k = bisect.bisect_left(self.ends, n)
        return None if k >= len(self.blocks) else self.blocks[k]

    def far_log(self, n):
        b = self._block(int(n))
        if b is None:
            return mpmath.ninf
        if n < b["n"]:
            return b["log_v"]
        return self.sums.log_value(n)

    def _value(self, n):
        v = self.far_log(n)
        return mpmath.mpf(0) if v == mpmath.ninf else mpmath.exp(v)

    def _log_block(self, hi):
        out = np.array(self.xi.log_prefix(hi), dtype=LD)
        prev = 0
        for b in self.blocks:
            if prev >= hi:
                break
            lo, top = prev, min(b["n"] - 1, hi)
            if top > lo:
                out[lo:top] = ld_log(b["v"])
            prev = b["m"]
        if prev < hi:
            out[prev:] = NEG_INF
        return out

    def prefix_sum(self, n: int):
        s = mpmath.mpf(0)
        prev = 0
        for b in self.blocks:
            if n <= prev:
                break
            flat_hi = min(n, b["n"] - 1)
            if flat_hi > prev:
                s += (flat_hi - prev) * b["v"]
            if n >= b["n"]:
                s += self.sums.sum(b["n"], min(n, b["m"]))
            prev = b["m"]
        return s

    def _remainder(self, W):
        v = self.total - self.prefix_sum(W)
        return v, v


def _normalize_nonsummable(seq: Sequence):
    s = _summability(seq)
    if s == "yes":
        raise ValueError(f"{seq.label} is summable; the block construction needs a non-summable input")
    if s != "no":
        raise ValueError(f"summability of {seq.label} is undecided")
    if isinstance(seq, KernelSeq) and seq.k.q == 1:
        k = seq.k
        if k.p < 1 or (k.p == 1 and k.r >= 0):
            work = compile_expr(Product((OmegaPow(1), LogPow(-1))))
            return work, [f"{seq.label} is not o(omega); using omega*log^-1, which is o(min(xi, omega)) and non-summable"]
    return seq, []


def lemma_47_block_eta(
    xi,
    alpha,
    horizon: int = 10 ** 4,
    blocks: int = LEVELS,
    index_cap: int = LAZY_CAP,
    allow_partial=False,
):
    """Summable eta <= xi with alpha_n <= sum_{j>n} eta_j, built block by block.

    ``horizon`` bounds the indices n at which alpha <= tail(eta) is checked;
    ``index_cap`` bounds the block indices themselves.
    """
    xi_in = as_sequence(xi)
    alpha = as_sequence(alpha)
    work, notes = _normalize_nonsummable(xi_in)
    with mpmath.workdps(30):
        a1 = mpmath.mpf(alpha.approx(1))
    if a1 < 1:
        raise ValueError(f"alpha_1 = {mpmath.nstr(a1, 8)} < 1")
    dps = _dps_for(index_cap)
    with mpmath.workdps(dps):
        S = _sums(work, dps)
        A = _sums(alpha, dps)
        ln2 = mpmath.log(2)
        tie = mpmath.mpf(10) ** (-(dps // 2))  # exact ties such as 1024^-0.1 = 1/2
        out: List[dict] = []
        m_prev = 0
        stop_note = None
        for k in range(1, blocks + 1):
            thr = -k * ln2 + tie
            lo = m_prev + 1

            def weighted(n):
                return mpmath.log(n) + S.log_value(n) <= thr

            def small_alpha(n):
                return A.log_value(n) <= thr

            cont_w = (lambda x: -(mpmath.log(x) + S.log_real(x)), -thr) if isinstance(S, _KernelSums) else None
            cont_a = (lambda x: -A.log_real(x), -thr) if isinstance(A, _KernelSums) else None
            try:
                n1 = _first_hit(weighted, lo, index_cap, cont_w)
                n2 = _first_hit(small_alpha, lo, index_cap, cont_a)
            except IndexBudgetError as exc:
                stop_note = str(exc)
                break
            if n1 is None or n2 is None:
                stop_note = f"block {k}: no admissible n_k below the index cap 2^{index_cap.bit_length() - 1}"
                break
            nk = max(n1, n2)
            T = a1 if k == 1 else mpmath.ldexp(1, 1 - k)
            try:
                mk = _first_hit(
                    lambda m: S.sum(nk, m) >= T,
                    nk,
                    index_cap,
                    (lambda x: S.sum(nk, x), T) if isinstance(S, _KernelSums) else None,
                )
            except IndexBudgetError as exc:
                stop_note = str(exc)
                break
            if mk is None:
                stop_note = f"block {k}: block sum does not reach {mpmath.nstr(T, 6)} below the index cap"
                break
            lv = S.log_value(nk)
            out.append({"k": k, "n": nk, "m": mk, "v": mpmath.exp(lv), "log_v": lv, "sum": S.sum(nk, mk), "T": T})
            m_prev = mk
        if len(out) < 3:
            raise IndexBudgetError(
                f"only {len(out)} blocks completed ({stop_note}); raise index_cap or the budget", None
            )
        total = mpmath.mpf(0)
        prev = 0
        for b in out:
            total += (b["n"] - prev - 1) * b["v"] + b["sum"]
            prev = b["m"]
        eta = BlockEtaSeq(work, S, out, total)
        cert = ConstructionCertificate(
            "lemma_47_block_eta", horizon={"alpha_check": horizon, "blocks": len(out), "max_index": out[-1]["m"]}
        )
        cert.notes.extend(notes)
        if stop_note and len(out) < blocks:
            cert.notes.append(f"stopped after {len(out)} blocks: {stop_note}")
        _lemma_47_checks(cert, xi_in, work, alpha, A, S, eta, out, a1, horizon)
        cert.sequences.update({"xi": xi_in, "xi_normalized": work, "alpha": alpha, "eta": eta})
        cert.stats["blocks"] = [
            {"k": b["k"], "n_k": b["n"], "m_k": b["m"], "block_sum": b["sum"]} for b in out
        ]
        cert.stats["eta_total"] = total
    return eta, _finish(cert, allow_partial)


def _lemma_47_checks(cert, xi_in, work, alpha, A, S, eta, out, a1, horizon):
    ln2 = mpmath.log(2)
    tie = mpmath.mpf(10) ** (-(mpmath.mp.dps // 2))
    bad = next((b["k"] for b in out if mpmath.log(b["n"]) + b["log_v"] > -b["k"] * ln2 + tie), None)
    cert.check("n_k xi_(n_k) <= 2^-k", bad is None, witness=bad)
    bad = next((b["k"] for b in out if A.log_value(b["n"]) > -b["k"] * ln2 + tie), None)
    cert.check("alpha_(n_k) <= 2^-k", bad is None, witness=bad)
    bad = next((b["k"] for b in out[1:] if b["n"] <= out[b["k"] - 2]["m"]), None)
    cert.check("m_(k-1) < n_k <= m_k", bad is None and all(b["n"] <= b["m"] for b in out), witness=bad)
    bad = None
    for b in out:
        k = b["k"]
        lo = mpmath.ldexp(1, 1 - k)
        hi = a1 + mpmath.mpf(1) / 2 if k == 1 else mpmath.ldexp(1, 2 - k)
        if not (lo <= b["sum"] <= hi and (k > 1 or b["sum"] >= a1)):
            bad = k
            break
    cert.check("2^(1-k) <= block sum <= 2^(2-k)", bad is None, witness=bad, detail="first block: alpha_1 <= sum <= alpha_1 + 1/2")
    bad = next((b["k"] for b in out if b["m"] > b["n"] and S.sum(b["n"], b["m"] - 1) >= b["T"]), None)
    cert.check("m_k is the first index reaching the block threshold", bad is None, witness=bad)
    # eta <= xi at block ends, junctions and log-spaced interior points
    worst = None
    prev = 0
    for b in out:
        for n in _probe_points(prev + 1, b["m"], 12) + ([b["n"] - 1] if b["n"] - 1 > prev else []):
            e = eta.far_log(n)
            x = S.log_value(n)
            xin = xi_in.far_log(n)
            if e > x or (xin is not None and e > xin + mpmath.mpf(10) ** (-mpmath.mp.dps // 2)):
                worst = n
                break
        if worst is not None:
            break
        prev = b["m"]
    cert.check("eta <= xi", worst is None, witness=worst)
    bad = next(
        (b["k"] for i, b in enumerate(out[1:], 1) if b["log_v"] > S.log_value(out[i - 1]["m"])),
        None,
    )
    cert.check("eta nonincreasing across blocks", bad is None, witness=bad)
    # alpha_n <= sum_{j>n} eta_j for n <= horizon, tails from completed blocks
    H = int(horizon)
    le = np.asarray(eta.log_prefix(H), dtype=np.float64)
    ev = np.exp(le)
    tail = float(eta.total) - np.cumsum(ev)
    av = np.exp(np.asarray(alpha.log_prefix(H), dtype=np.float64))
    slack = tail * (1 + 1e-12) + 1e-300 - av
    viol = np.nonzero(slack < 0)[0]
    cert.check(
        "alpha_n <= tail(eta)_n",
        len(viol) == 0,
        witness=int(viol[0]) + 1 if len(viol) else None,
        detail=f"all n <= {H}",
    )
    bound = a1 + mpmath.mpf(1) / 2 + sum(mpmath.ldexp(1, -b["k"]) + mpmath.ldexp(1, 2 - b["k"]) for b in out[1:]) + mpmath.mpf(1) / 2
    cert.check("eta summable within the block bound", eta.total <= bound, witness=eta.total, detail=f"bound {mpmath.nstr(bound, 8)}")


# --------------------------------------------------------------------------
# the irregular xi under a regular mu, and the eta family built on it


class Theorem78Xi(Sequence):
    """xi <= mu with xi_(p_l) = mu_(p_l) / l, extended level by level on demand."""

    def __init__(self, mu: Sequence, sums, dps: int, index_cap: int):
        super().__init__()
        self.mu = mu
        self.S = sums
        self.dps = dps
        self.index_cap = index_cap
        self.label = f"thm78_xi({mu.label})"
        self.summable = "no"
        with mpmath.workdps(dps):
            mu1 = sums.value(1)
            self.p = [1]
            self.v = [mu1]  # xi at p_l
            self.lv = [mpmath.log(mu1)]
            self.c: List[Optional[int]] = [None]  # first i > p_l with mu_i <= v_l
            self.Px = [mu1]  # sum of xi up to p_l
            self.Pm = [mu1]  # sum of mu up to p_l

    # -- level geometry
    def _crossing(self, L: int) -> int:
        """First i > p_L where mu_i <= v_L (start of the mu-following stretch)."""
        if self.c[L] is None:
            lv = self.lv[L]
            S = self.S
            cont = (lambda x: -S.log_real(x), -lv) if isinstance(S, _KernelSums) else None
            hit = _first_hit(lambda i: S.log_value(i) <= lv, self.p[L] + 1, self.index_cap, cont)
            self.c[L] = hit if hit is not None else self.index_cap + 1
        return self.c[L]

    def _partial_after(self, L: int, b):
        """sum of xi over (p_L, b] assuming no level starts in between."""
        p, v = self.p[L], self.v[L]
        c = self._crossing(L)
        flat_hi = min(b, c - 1)
        s = (flat_hi - p) * v if flat_hi > p else mpmath.mpf(0)
        if b >= c:
            s += self.S.sum(c, b)
        return s

    def _deficit(self, L: int, b):
        """sum_{i<=b} xi - (3/4) sum_{i<=b} mu for p_L <= b < p_(L+1)."""
        return self.Px[L] + self._partial_after(L, b) - mpmath.mpf(3) / 4 * (self.Pm[L] + self.S.sum(self.p[L] + 1, b))

    def add_level(self):
        with mpmath.workdps(self.dps):
            L = len(self.p) - 1
            S = self.S
            b0 = max(self.p[L], 2)
            if self._deficit(L, b0) >= 0:
                b = b0
            else:
                # the deficit falls while mu_i > (4/3) v_L, then rises
                lv43 = self.lv[L] + mpmath.log(mpmath.mpf(4) / 3)
                cont = (lambda x: -S.log_real(x), -lv43) if isinstance(S, _KernelSums) else None
                turn = _first_hit(lambda i: S.log_value(i) <= lv43, self.p[L] + 1, self.index_cap, cont)
                if turn is None:
                    raise IndexBudgetError(f"level {L + 2} lies past the index cap", None)
                start = max(b0, turn - 1)
                cont = (lambda x: self._deficit(L, x), 0) if isinstance(S, _KernelSums) else None
                b = _first_hit(lambda i: self._deficit(L, i) >= 0, start, self.index_cap, cont)
                if b is None:
                    raise IndexBudgetError(f"level {L + 2} lies past the index cap", None)
            p_new = b + 1
            l_new = L + 2
            lmu = S.log_value(p_new)
            v_new = mpmath.exp(lmu) / l_new
            px = self.Px[L] + self._partial_after(L, b) + v_new
            pm = self.Pm[L] + S.sum(self.p[L] + 1, p_new)
            self.p.append(p_new)
            self.v.append(v_new)
            self.lv.append(lmu - mpmath.log(l_new))
            self.c.append(None)
            self.Px.append(px)
            self.Pm.append(pm)
            self._log_cache = None

    def ensure_levels(self, L: int):
        while len(self.p) < L:
            self.add_level()

    def ensure_index(self, n: int):
        while self.p[-1] < n:
            self.add_level()

    def _level_of(self, n: int) -> int:
        self.ensure_index(n)
        return bisect.bisect_right(self.p, n) - 1

    # -- evaluation
    def far_log(self, n):
        n = int(n)
        with mpmath.workdps(self.dps):
            L = self._level_of(n)
            if n == self.p[L]:
                return self.lv[L]
            if n < self._crossing(L):
                return self.lv[L]
            return self.S.log_value(n)

    def _value(self, n):
        with mpmath.workdps(self.dps):
            return mpmath.exp(self.far_log(n))

    def prefix_sum(self, n: int):
        """sum_{i<=n} xi_i."""
        if n < 1:
            return mpmath.mpf(0)
        with mpmath.workdps(self.dps):
            L = self._level_of(n)
            return self.Px[L] + self._partial_after(L, n)

    def mu_prefix(self, n: int):
        with mpmath.workdps(self.dps):
            return self.S.sum(1, n)

    def _log_block(self, hi):
        self.ensure_index(hi)
        out = np.array(self.mu.log_prefix(hi), dtype=LD)
        for L in range(len(self.p)):
            p = self.p[L]
            if p > hi:
                break
            out[p - 1] = ld_log(self.v[L])
            top = min(self._crossing(L) - 1, (self.p[L + 1] - 1) if L + 1 < len(self.p) else hi, hi)
            if top > p:
                out[p:top] = ld_log(self.v[L])
        return out


def theorem_78_xi(mu, L: int = LEVELS, index_cap: int = 1 << 1024, window=None, allow_partial=False):
    """Irregular xi <= mu with xi_(p_l) = mu_(p_l)/l and (xi_a)_(p_l) >= (mu_a)_(p_l)/2."""
    mu = as_sequence(mu)
    if L < 1:
        raise ValueError("L must be >= 1")
    s = _summability(mu)
    if s == "yes":
        raise ValueError(f"{mu.label} is summable; a regular generator is never summable")
    reg = C.check_regular(mu, window)
    if reg.verdict != HOLDS:
        raise ValueError(f"{mu.label} is not regular (check_regular: {reg.verdict})")
    dps = _dps_for(index_cap)
    S = _sums(mu, dps)
    xi = Theorem78Xi(mu, S, dps, index_cap)
    xi.ensure_levels(L)
    cert = ConstructionCertificate("theorem_78_xi", horizon={"levels": L, "max_index": xi.p[L - 1]})
    with mpmath.workdps(dps):
        p = xi.p[:L]
        # (i) xi <= mu at level points, crossings and interior probes
        worst = None
        for l in range(L):
            hi = p[l + 1] - 1 if l + 1 < L else p[l]
            pts = set(_probe_points(p[l], max(hi, p[l]), 6))
            c = xi._crossing(l)
            pts.update(x for x in (c - 1, c) if p[l] <= x <= hi)
            for n in sorted(pts):
                if xi.far_log(n) > S.log_value(n) + mpmath.mpf(10) ** (-dps // 2):
                    worst = n
                    break
            if worst is not None:
                break
        cert.check("(i) xi <= mu", worst is None, witness=worst)
        # (ii) recomputed from mu directly
        bad = None
        for l in range(1, L + 1):
            lhs = mpmath.exp(xi.far_log(p[l - 1])) * l
            # independent evaluation of mu (113-bit when the index is small)
            rhs = _mpf(mu.value(p[l - 1])) if p[l - 1] < INDEX_BUDGET else S.value(p[l - 1])
            if abs(lhs - rhs) > abs(rhs) * mpmath.mpf(10) ** -30:
                bad = l
                break
        cert.check("(ii) xi_(p_l) = mu_(p_l) / l", bad is None, witness=bad)
        ratios = [xi.Px[l] / xi.Pm[l] for l in range(L)]
        bad = next((l + 1 for l, r in enumerate(ratios) if r < mpmath.mpf(1) / 2), None)
        cert.check("(iii) (xi_a)_(p_l) >= (mu_a)_(p_l) / 2", bad is None, witness=bad)
        irr = [xi.v[l] * p[l] / xi.Px[l] for l in range(L)]
        bad = next((l + 1 for l, r in enumerate(irr) if r > mpmath.mpf(2) / (l + 1)), None)
        cert.check("xi_(p_l) / (xi_a)_(p_l) <= 2/l", bad is None, witness=bad, detail="irregular along p_l")
        cert.check("p_l strictly increasing", all(a < b for a, b in zip(p, p[1:])), witness=None)
        cert.stats["p"] = p
        cert.stats["mean_ratio"] = ratios
        cert.stats["irregularity"] = irr
    cert.sequences.update({"mu": mu, "xi": xi})
    return xi, list(p), _finish(cert, allow_partial)


class FamilyEtaSeq(Sequence):
    """One member eta^(j) of the family built on the ladders."""

    def __init__(self, xi: Theorem78Xi, j: int, N: int, regions: List[Tuple[int, int, str, Any]]):
        super().__init__()
        self.xi = xi
        self.j = j
        self.N = N
        self.regions = regions  # (start, end, kind, data), contiguous from 1
        self.starts = [r[0] for r in regions]
        self.label = f"eta^({j})"
        self.summable = "no"

    def far_log(self, n):
        n = int(n)
        with mpmath.workdps(self.xi.dps):
            lx = self.xi.far_log(n)
            k = bisect.bisect_right(self.starts, n) - 1
            if k < 0 or n > self.regions[-1][1]:
                return lx + mpmath.log(min(self.j, self.N))
            start, end, kind, data = self.regions[k]
            if kind == "scaled":
                return lx + mpmath.log(min(self.j, data))
            # gap: min(xi_(k n_k^(1)), j xi_i)
            return min(data, lx + mpmath.log(self.j))

    def _value(self, n):
        with mpmath.workdps(self.xi.dps):
            return mpmath.exp(self.far_log(n))

    def _log_block(self, hi):
        return np.array([ld_log(self._value(n)) for n in range(1, hi + 1)], dtype=LD)


def theorem_78_family(xi: Theorem78Xi, p_list=None, N: int = 3, K: int = 8, allow_partial=False):
    """N sequences xi = eta^(1) <= ... <= eta^(N) <= N xi from the ladders (a)-(d)."""
    if not isinstance(xi, Theorem78Xi):
        raise TypeError("theorem_78_family needs the xi produced by theorem_78_xi")
    if N < 1 or K < 1:
        raise ValueError("N and K must be positive")
    if p_list is not None and list(p_list) != xi.p[: len(p_list)]:
        raise ValueError("p_list does not match the levels of xi")
    cert = ConstructionCertificate("theorem_78_family", horizon={"N": N, "rounds": K})
    if N == 1:
        cert.check("degenerate family", True, detail="N = 1 gives {xi}")
        cert.sequences["eta^(1)"] = xi
        return [xi], _finish(cert, allow_partial)
    dps = xi.dps
    m: Dict[Tuple[int, int], int] = {(1, N): 1}
    n: Dict[Tuple[int, int], int] = {}
    lvl: Dict[Tuple[int, int], int] = {}
    with mpmath.workdps(dps):
        try:
            for k in range(1, K + 1):
                for j in range(N, 0, -1):
                    mk = m[(k, j)]
                    need = 3 * xi.prefix_sum(mk)
                    base = xi.prefix_sum(mk - 1)
                    l = max(k, 1)
                    while True:
                        xi.ensure_levels(l)
                        pl = xi.p[l - 1]
                        if pl > mk and xi.prefix_sum(pl) - base >= need:
                            break
                        l += 1
                    n[(k, j)] = pl
                    lvl[(k, j)] = l
                    if j > 1:
                        m[(k, j - 1)] = k * pl + 1
                top = k * n[(k, 1)]
                lt = xi.far_log(top) - mpmath.log(N)
                hit = _first_hit(lambda i: xi.far_log(i) <= lt, top + 1, xi.index_cap)
                if hit is None:
                    raise IndexBudgetError(f"round {k}: drop index past the cap", None)
                m[(k + 1, N)] = hit
        except IndexBudgetError as exc:
            cert.notes.append(str(exc))
            cert.stats["partial_ladder"] = {"m": {str(a): b for a, b in m.items()}, "n": {str(a): b for a, b in n.items()}}
            raise ConstructionError(f"theorem_78_family: ladder exceeded the index budget ({exc})", cert)
        # regions for eta^(j)
        regions: List[Tuple[int, int, str, Any]] = []
        for k in range(1, K + 1):
            for p in range(N, 0, -1):
                regions.append((m[(k, p)], k * n[(k, p)], "scaled", p))
            top = k * n[(k, 1)]
            if m[(k + 1, N)] - 1 > top:
                regions.append((top + 1, m[(k + 1, N)] - 1, "gap", xi.far_log(top)))
        etas = [FamilyEtaSeq(xi, j, N, regions) for j in range(1, N + 1)]
        _family_checks(cert, xi, etas, m, n, lvl, N, K, regions)
    cert.stats["m"] = {f"{k},{j}": v for (k, j), v in sorted(m.items())}
    cert.stats["n"] = {f"{k},{j}": v for (k, j), v in sorted(n.items())}
    cert.stats["levels_used"] = len(xi.p)
    cert.horizon["max_index"] = m[(K + 1, N)]
    for e in etas:
        cert.sequences[e.label] = e
    return etas, _finish(cert, allow_partial)


def _family_checks(cert, xi, etas, m, n, lvl, N, K, regions):
    pset = {p: i + 1 for i, p in enumerate(xi.p)}
    bad = next(((k, j) for k in range(1, K + 1) for j in range(1, N + 1) if pset.get(n[(k, j)], 0) < k), None)
    cert.check("(a) n_k^(j) = p_l with l >= k", bad is None, witness=bad)
    bad = None
    for k in range(1, K + 1):
        for j in range(1, N + 1):
            a, b = m[(k, j)], n[(k, j)]
            if xi.prefix_sum(b) - xi.prefix_sum(a - 1) < 3 * xi.prefix_sum(a):
                bad = (k, j)
                break
        if bad:
            break
    cert.check("(b) sum_(m..n) xi >= 3 sum_(1..m) xi", bad is None, witness=bad)
    bad = next(((k, j) for k in range(1, K + 1) for j in range(2, N + 1) if m[(k, j - 1)] != k * n[(k, j)] + 1), None)
    cert.check("(c) m_k^(j-1) = k n_k^(j) + 1", bad is None, witness=bad)
    bad = None
    lnN = mpmath.log(N)
    for k in range(1, K + 1):
        t = xi.far_log(k * n[(k, 1)])
        i = m[(k + 1, N)]
        if not (t >= xi.far_log(i) + lnN and t < xi.far_log(i - 1) + lnN):
            bad = k
            break
    cert.check("(d) m_(k+1)^(N) = min{i : xi_(k n_k^(1)) >= N xi_i}", bad is None, witness=bad)
    chain = []
    for k in range(1, K + 1):
        for j in range(N, 0, -1):
            chain += [m[(k, j)], k * n[(k, j)]]
    chain.append(m[(K + 1, N)])
    bad = next((i for i in range(len(chain) - 1) if not chain[i] < chain[i + 1]), None)
    cert.check("ladder strictly increasing", bad is None, witness=None if bad is None else chain[bad])
    bad = next(((k, j) for k in range(1, K + 1) for j in range(1, N + 1) if not m[(k, j)] < n[(k, j)]), None)
    cert.check("m_k^(j) < n_k^(j)", bad is None, witness=bad)
    # pointwise family relations at region ends, neighbours and interior probes
    pts = set()
    for start, end, _, _ in regions:
        pts.update(_probe_points(start, end, 3))
        pts.update(x for x in (start - 1, end + 1) if x >= 1)
    pts = sorted(pts)
    eps = mpmath.mpf(10) ** (-(xi.dps // 2))
    vals = [[e.far_log(i) for i in pts] for e in etas]
    xl = [xi.far_log(i) for i in pts]
    bad = next((pts[t] for t in range(len(pts)) if abs(vals[0][t] - xl[t]) > eps), None)
    cert.check("eta^(1) = xi", bad is None, witness=bad)
    bad = next(
        ((j + 1, pts[t]) for j in range(N - 1) for t in range(len(pts)) if vals[j][t] > vals[j + 1][t] + eps), None
    )
    cert.check("eta^(j) <= eta^(j+1)", bad is None, witness=bad)
    bad = next(
        ((j + 1, pts[t]) for j in range(N) for t in range(len(pts)) if vals[j][t] > xl[t] + mpmath.log(j + 1) + eps),
        None,
    )
    cert.check("eta^(j) <= j xi", bad is None, witness=bad)
    bad = next(
        ((j + 1, pts[t + 1]) for j in range(N) for t in range(len(pts) - 1) if vals[j][t + 1] > vals[j][t] + eps), None
    )
    cert.check("eta^(j) nonincreasing", bad is None, witness=bad)
    cert.stats["probes"] = len(pts)


# --------------------------------------------------------------------------
# Dixmier's gap condition


def dixmier_gap_check(eta, window=None) -> ClassReport:
    """eta = o(eta_a), cross-checked against (eta_a)_(2n) / (eta_a)_n -> 1/2."""
    eta = as_sequence(eta)
    s = _summability(eta)
    if s == "yes":
        raise ValueError(f"{eta.label} is summable; the gap condition concerns non-summable sequences")
    if s != "no":
        raise ValueError(f"summability of {eta.label} is undecided")
    N = C._window(eta, window)
    lx = eta.log_prefix(N)
    la = C._mean(eta).log_prefix(N)
    direct = C.trend_to_zero(C.ratio(lx, la))
    half = N // 2
    r2 = np.exp((la[1::2][:half] - la[:half]).astype(np.float64))
    dev = np.abs(r2 - 0.5)
    doubling = C.trend_to_zero(dev)
    v1 = HOLDS if direct.kind == "diverging" else FAILS if direct.kind == "bounded" else INCONCLUSIVE
    v2 = HOLDS if doubling.kind == "diverging" else FAILS if doubling.kind == "bounded" else INCONCLUSIVE
    notes = []
    if v1 == v2:
        verdict = v1
    else:
        verdict = INCONCLUSIVE
        notes.append(f"routes disagree: eta/eta_a {v1}, doubling ratio {v2}")
    tail = r2[-max(1, half // 4):]
    rep = ClassReport(
        "dixmier_gap",
        verdict,
        (1, N),
        notes=notes,
        stats={
            "ratio_route": v1,
            "doubling_route": v2,
            "eta_over_mean_last": float(np.exp(float(lx[-1] - la[-1]))),
            "doubling_ratio_last": float(tail[-1]),
        },
    )
    if verdict == FAILS:
        rep.witness = direct.witness
    return rep
