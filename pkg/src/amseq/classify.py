"""Finite-window classifiers with three-valued verdicts.

Every classifier reduces its question to a nonnegative statistic indexed by n
and watches the running maximum of that statistic over dyadic sub-windows
[2^i, 2^(i+1)).  A flat or geometrically settling running maximum is read as
"bounded", a steadily growing one as "diverging"; anything else is reported
as inconclusive together with the window maxima that failed to settle.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence as Seq, Tuple

import mpmath
import numpy as np

from .expr import SeqExpr, log_weighted_summability
from .sequence import (
    LD,
    UNAVAILABLE,
    AmInfSeq,
    MeanSeq,
    Sequence,
    SummabilityError,
    TailUnavailable,
    as_sequence,
)

HOLDS = "holds"
FAILS = "fails"
INCONCLUSIVE = "inconclusive"

DEFAULT_WINDOW = 1 << 20
EXACT_WINDOW = 1 << 17
K_CAP = 1 << 12
EXACT_MARGIN = 1e-6
BRACKET_MARGIN = 1e-4

# trend thresholds on r = (e2 + e3) / (e1 + e2), e_i = growth of the running max
# over consecutive groups of sub-windows
BOUNDED_RATIO = 0.45
DIVERGING_RATIO = 0.7
MIN_WINDOWS = 5

# far ladder used by the Potter check: n = 2^j
FAR_EXPONENTS = (24, 32, 48, 64, 96, 128, 192, 256, 384, 512, 768, 1024)


@dataclass
class ClassReport:
    prop: str
    verdict: str
    window: Tuple[int, int]
    witness: Optional[int] = None
    constant: Optional[float] = None
    notes: List[str] = field(default_factory=list)
    stats: Dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    @property
    def fails(self) -> bool:
        return self.verdict == FAILS

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return _jsonable(d)


@dataclass
class IndexEstimate:
    alpha: float
    beta: float
    window: int
    n_max: int
    k_cap: int
    alpha_trend: str = "stable"
    beta_trend: str = "stable"
    alpha_small_k: Optional[float] = None
    beta_small_k: Optional[float] = None
    bounds_applied: bool = False
    alpha_upper: Optional[float] = None
    beta_lower: Optional[float] = None

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


@dataclass
class AnalyticBounds:
    alpha_upper: Optional[float]
    beta_lower: Optional[float]

    def __iter__(self):
        return iter((self.alpha_upper, self.beta_lower))


@dataclass
class CrossCheck:
    reports: Dict[str, ClassReport]
    agreement: bool
    verdict: str

    def to_dict(self) -> dict:
        return {
            "agreement": self.agreement,
            "verdict": self.verdict,
            "conditions": {k: r.to_dict() for k, r in self.reports.items()},
        }


def _jsonable(x):
    if isinstance(x, dict):
        # JSON object keys are strings; convert here so reports round-trip
        return {k if isinstance(k, str) else str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(x, np.integer):
        return int(x)
    return x


# --------------------------------------------------------------------------
# trend machinery


def dyadic_windows(n_lo: int, n_hi: int) -> List[Tuple[int, int]]:
    out = []
    i = max(0, int(n_lo).bit_length() - 1)
    while (1 << i) <= n_hi:
        lo = max(1 << i, n_lo)
        hi = min((1 << (i + 1)) - 1, n_hi)
        out.append((lo, hi))
        i += 1
    # fold a stub last window into its predecessor
    if len(out) > 1 and out[-1][1] - out[-1][0] + 1 < (out[-1][0] + 1) // 2:
        out[-2] = (out[-2][0], out[-1][1])
        out.pop()
    return out


@dataclass
class Trend:
    kind: str  # bounded | diverging | short
    constant: float
    sup: float
    witness: Optional[int]
    window_max: List[float]
    ratio: Optional[float] = None

    def stats(self) -> dict:
        return {
            "trend": self.kind,
            "window_max": [float(v) for v in self.window_max],
            "growth_ratio": self.ratio,
            "sup": self.sup,
        }


def classify_growth(sups: Seq[float]) -> Tuple[str, Optional[float]]:
    """Read a nondecreasing list of running maxima as bounded or diverging."""
    S = [float(v) for v in sups]
    if not S:
        return "short", None
    if math.isinf(S[-1]):
        return "diverging", math.inf
    if len(S) < MIN_WINDOWS:
        return "short", None
    scale = max(1.0, abs(S[-1]))
    if S[-1] - S[-4] <= 1e-9 * scale:
        return "bounded", 0.0
    g = min(6, (len(S) - 1) // 3)
    e1 = S[-1 - 2 * g] - S[-1 - 3 * g]
    e2 = S[-1 - g] - S[-1 - 2 * g]
    e3 = S[-1] - S[-1 - g]
    if e3 <= 1e-7 * scale:
        return "bounded", 0.0
    # r smooths over two groups, q looks at the latest pair only; step-shaped
    # growth can misalign one of them but not both
    r = (e2 + e3) / (e1 + e2) if e1 + e2 > 0 else math.inf
    q = e3 / e2 if e2 > 0 else math.inf
    if max(r, q) <= BOUNDED_RATIO:
        return "bounded", r
    if max(r, q) >= DIVERGING_RATIO and min(r, q) >= BOUNDED_RATIO:
        return "diverging", r
    # step-shaped growth (piecewise-constant inputs): compare the sizes of the
    # latest jumps instead of fixed window groups
    inc = np.diff(S)[(len(S) - 1) // 3 :]
    jumps = inc[inc > 1e-9 * scale]
    if len(jumps) >= 4 and len(jumps) <= 2 * len(inc) / 3:
        s = (jumps[-1] + jumps[-2]) / (jumps[-3] + jumps[-4])
        if s >= DIVERGING_RATIO:
            return "diverging", float(s)
    return "inconclusive", r


def trend_of(stat: np.ndarray, n_lo: int = 1, far: Seq[Tuple[int, float]] = ()) -> Trend:
    """Trend of stat[j] (value at index n = n_lo + j); NaN entries are skipped.

    ``far`` holds (index, value) probes past the window, each treated as one
    more sub-window.
    """
    stat = np.asarray(stat, dtype=np.float64)
    n_hi = n_lo + len(stat) - 1
    inf_at = np.flatnonzero(np.isposinf(stat))
    if len(inf_at):
        w = int(inf_at[0]) + n_lo
        return Trend("diverging", math.inf, math.inf, w, [], math.inf)
    wmax, wit = [], []
    for lo, hi in dyadic_windows(n_lo, n_hi):
        seg = stat[lo - n_lo : hi - n_lo + 1]
        if seg.size == 0 or np.all(np.isnan(seg)):
            continue
        j = int(np.nanargmax(seg))
        wmax.append(float(seg[j]))
        wit.append(lo + j)
    n_win = len(wmax)
    for n, v in far:
        if math.isinf(v) and v > 0:
            return Trend("diverging", math.inf, math.inf, n, wmax, math.inf)
        if not math.isnan(v):
            wmax.append(float(v))
            wit.append(n)
    if not wmax:
        return Trend("short", math.nan, math.nan, None, [])
    S = np.maximum.accumulate(wmax)
    kind, r = classify_growth(S)
    if kind == "diverging":
        # prefer an in-window index where the statistic peaks
        gi = int(np.argmax(wmax[:n_win])) if n_win else int(np.argmax(wmax))
        witness = wit[gi]
    else:
        witness = wit[-1]
    return Trend(kind, wmax[-1], float(S[-1]), witness, wmax, r)


def trend_to_zero(stat: np.ndarray, n_lo: int = 1, far: Seq[Tuple[int, float]] = ()) -> Trend:
    """Decide whether stat -> 0: the reciprocal of the suffix maxima must diverge."""
    stat = np.asarray(stat, dtype=np.float64)
    n_hi = n_lo + len(stat) - 1
    wmax = []
    for lo, hi in dyadic_windows(n_lo, n_hi):
        seg = stat[lo - n_lo : hi - n_lo + 1]
        if seg.size and not np.all(np.isnan(seg)):
            wmax.append(float(np.nanmax(seg)))
    wmax.extend(float(v) for _, v in far if not math.isnan(v))
    if not wmax:
        return Trend("short", math.nan, math.nan, None, [])
    suffix = np.maximum.accumulate(np.array(wmax)[::-1])[::-1]
    with np.errstate(divide="ignore"):
        recip = 1.0 / suffix
    kind, r = classify_growth(recip)
    return Trend(kind, wmax[-1], float(suffix[0]), None, wmax, r)


def _exp(x) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        return np.exp(np.asarray(x, dtype=LD)).astype(np.float64)


def log_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """ln(num/den) with 0/0 -> NaN (skipped) and x/0 -> +inf (witness)."""
    num = np.asarray(num, dtype=LD)
    den = np.asarray(den, dtype=LD)
    with np.errstate(invalid="ignore"):
        out = num - den
    both = np.isneginf(num) & np.isneginf(den)
    out[both] = np.nan
    out[np.isneginf(den) & ~np.isneginf(num)] = np.inf
    return out


def ratio(num, den) -> np.ndarray:
    return _exp(log_ratio(num, den))


# --------------------------------------------------------------------------
# helpers


def _seq(x) -> Sequence:
    return as_sequence(x)


def default_window(seq: Sequence) -> int:
    """2^17 when values are exact rationals, 2^20 on float paths."""
    return EXACT_WINDOW if seq.exact_values else DEFAULT_WINDOW


def _window(seq: Sequence, window) -> int:
    if window is None:
        return default_window(seq)
    if isinstance(window, (tuple, list)):
        window = window[-1]
    w = int(window)
    if w < 16:
        raise ValueError("window must reach at least 16")
    return w


def far_points(seq: Sequence, N: int, limit: int = 8) -> List[int]:
    """Indices past the window where closed-form values are cheap."""
    rule = getattr(seq, "rule", None)
    if rule is not None:
        out = []
        k = seq.block_of(N + 1)
        while len(out) < limit:
            seq._ensure_k(k + 1)
            b = seq._bps[k]
            if b.bit_length() > 4096:
                break
            if b > N:
                out.append(b)
            k += 1
        return out
    if seq.far_log(N + 1) is None:
        return []
    return [1 << j for j in FAR_EXPONENTS if (1 << j) > N]


def _margin(seq: Sequence) -> float:
    return EXACT_MARGIN if seq.exact_values and seq.tail_mode != "bracketed" else BRACKET_MARGIN


def _require_summable(seq: Sequence, what: str):
    if seq.summable != "yes":
        raise SummabilityError(f"{what} needs a summable sequence; {seq.label} has summable={seq.summable}")
    if seq.tail_mode == UNAVAILABLE:
        raise TailUnavailable(f"{what}: no tail sums for {seq.label}")


def _am_inf(seq: Sequence) -> AmInfSeq:
    cached = getattr(seq, "_am_inf_cached", None)
    if cached is None:
        cached = AmInfSeq(seq)
        seq._am_inf_cached = cached
    return cached


def _mean(seq: Sequence) -> MeanSeq:
    cached = getattr(seq, "_mean_cached", None)
    if cached is None:
        cached = MeanSeq(seq)
        seq._mean_cached = cached
    return cached


def _report_from_trend(prop, tr: Trend, window, positive="bounded", notes=None, **stats) -> ClassReport:
    notes = list(notes or [])
    if tr.kind == "short":
        notes.append("too few populated sub-windows to judge a trend")
        verdict = INCONCLUSIVE
    elif tr.kind == "inconclusive":
        notes.append("running maximum did not settle or diverge clearly")
        verdict = INCONCLUSIVE
    else:
        verdict = HOLDS if tr.kind == positive else FAILS
    rep = ClassReport(prop, verdict, window, notes=notes, stats={**tr.stats(), **stats})
    if verdict == HOLDS:
        rep.constant = tr.constant
    elif verdict == FAILS:
        rep.witness = tr.witness
    return rep


def symbolic_summability(e) -> str:
    """'yes' / 'no' / 'unknown' for sum xi_n < infinity, from symbolic rules only."""
    if isinstance(e, str):
        from .spec_lang import parse

        e = parse(e)
    if isinstance(e, Sequence):
        if e.expr is None:
            return e.summable
        e = e.expr
    return log_weighted_summability(e, 0)


# --------------------------------------------------------------------------
# basic conditions


def check_delta_half(seq, window=None) -> ClassReport:
    seq = _seq(seq)
    N = _window(seq, window)
    half = N // 2
    notes = []
    if seq.support is not None:
        if seq.support == 0:
            raise ValueError("sequence vanishes identically")
        half = seq.support // 2
        notes.append(f"finitely supported (last nonzero index {seq.support}); judged on the positive part only")
    lx = seq.log_prefix(2 * max(half, 1))
    if half < 1 or np.all(np.isneginf(lx[:half])):
        raise ValueError("window tail is identically zero")
    st = ratio(lx[:half], lx[1 : 2 * half : 2])
    far = []
    if seq.support is None:
        with mpmath.workdps(30):
            for n in far_points(seq, 2 * half):
                a, b = seq.far_log(n), seq.far_log(2 * n)
                far.append((n, math.inf if b == mpmath.ninf else float(mpmath.exp(a - b))))
    tr = trend_of(st, far=far)
    rep = _report_from_trend("delta_half", tr, (1, 2 * half), notes=notes)
    if seq.support is not None:
        rep.verdict = INCONCLUSIVE
        rep.constant = rep.witness = None
    return rep


def check_regular(seq, window=None) -> ClassReport:
    seq = _seq(seq)
    N = _window(seq, window)
    lx = seq.log_prefix(N)
    la = _mean(seq).log_prefix(N)
    st = ratio(la, lx)
    tr = trend_of(st)
    if seq.support is not None and tr.kind != "diverging":
        # past the support the mean is positive while xi vanishes
        return ClassReport("regular", FAILS, (1, N), witness=seq.support + 1, stats=tr.stats())
    return _report_from_trend("regular", tr, (1, N))


def check_infty_regular(seq, window=None) -> ClassReport:
    seq = _seq(seq)
    _require_summable(seq, "infinity-regularity")
    N = _window(seq, window)
    lx = seq.log_prefix(N)
    _, up = _am_inf(seq).log_bounds(N)
    st = ratio(up, lx)
    tr = trend_of(st)
    if seq.support is not None and tr.kind != "diverging":
        # both sides vanish past the support, so the window max is the sup
        const = float(np.nanmax(st)) if np.any(~np.isnan(st)) else 0.0
        return ClassReport("infty_regular", HOLDS, (1, N), constant=const, notes=["finitely supported"], stats=tr.stats())
    return _report_from_trend("infty_regular", tr, (1, N))


# --------------------------------------------------------------------------
# indices and Potter fits


def _index_scan(lx: np.ndarray, n_max: int, K: int):
    ks = np.arange(1, K + 1)
    base = lx[ks - 1]
    a = np.empty(n_max - 1, dtype=np.float64)
    b = np.empty(n_max - 1, dtype=np.float64)
    for n in range(2, n_max + 1):
        d = lx[ks * n - 1] - base
        ln = math.log(n)
        a[n - 2] = float(np.max(d)) / ln
        b[n - 2] = float(np.min(d)) / ln
    return a, b


def _trend_to_minus_inf(vals: np.ndarray, sign: int) -> str:
    """Flag per-window extremes that keep moving away geometrically."""
    mins = []
    for lo, hi in dyadic_windows(2, len(vals) + 1):
        seg = vals[lo - 2 : hi - 1]
        mins.append(float(seg.min() if sign < 0 else seg.max()))
    if len(mins) >= 4 and all(m < -2 for m in mins[-3:]):
        if all(mins[i + 1] <= 1.3 * mins[i] for i in range(len(mins) - 3, len(mins) - 1)):
            return "-inf"
    return "stable"


def matuszewska_indices(seq, window=None, k_cap: int = K_CAP, with_bounds: bool = True) -> IndexEstimate:
    seq = _seq(seq)
    N = _window(seq, window)
    n_max = N // k_cap
    if n_max < 2:
        raise ValueError(f"window {N} too small for k cap {k_cap}")
    lx = seq.log_prefix(N)
    if np.any(np.isneginf(lx)):
        z = int(np.flatnonzero(np.isneginf(lx))[0]) + 1
        raise ValueError(f"zero entry at index {z} inside the window")
    a, b = _index_scan(lx, n_max, k_cap)
    small = max(k_cap // 16, 2)
    a2, b2 = _index_scan(lx, N // small if N // small < n_max * 16 else n_max * 16, small) if small < k_cap else (a, b)
    est = IndexEstimate(
        alpha=float(a.min()),
        beta=float(b.max()),
        window=N,
        n_max=n_max,
        k_cap=k_cap,
        alpha_trend=_trend_to_minus_inf(a, -1),
        beta_trend=_trend_to_minus_inf(b, +1),
        alpha_small_k=float(a2.min()),
        beta_small_k=float(b2.max()),
    )
    if with_bounds:
        try:
            ab = analytic_bounds(seq, N)
            est.alpha_upper, est.beta_lower = ab.alpha_upper, ab.beta_lower
            est.bounds_applied = True
        except (SummabilityError, TailUnavailable, ValueError):
            pass
    return est


def analytic_bounds(seq, window=None) -> AnalyticBounds:
    """alpha <= -1 - inf xi/xi_aoo (summable input) and beta >= -1 + inf xi/xi_a."""
    seq = _seq(seq)
    N = _window(seq, window)
    lx = seq.log_prefix(N)
    la = _mean(seq).log_prefix(N)
    r = ratio(lx, la)
    if np.any(r[~np.isnan(r)] == 0) and seq.support is not None:
        beta_lower = -1.0
    else:
        beta_lower = -1.0 + float(np.nanmin(r))
    alpha_upper = None
    if seq.summable == "yes" and seq.tail_mode != UNAVAILABLE:
        _, up = _am_inf(seq).log_bounds(N)
        ri = ratio(lx, up)
        if np.any(~np.isnan(ri)):
            alpha_upper = -1.0 - float(np.nanmin(ri))
    return AnalyticBounds(alpha_upper, beta_lower)


def potter_fit(seq, p: float, window=None, far: bool = True) -> ClassReport:
    """C* = sup_{m <= n} xi_n (n/m)^p / xi_m, trend over n, plus far-index probes."""
    seq = _seq(seq)
    if p <= 0:
        raise ValueError("Potter exponent must be positive")
    N = _window(seq, window)
    lx = seq.log_prefix(N)
    pos = ~np.isneginf(lx)
    last = int(np.flatnonzero(pos)[-1]) + 1 if pos.any() else 0
    if last < 16:
        raise ValueError("sequence must be positive on the window")
    lx = lx[:last]
    ln = np.log(np.arange(1, last + 1, dtype=LD))
    A = -lx - LD(p) * ln
    PM = np.maximum.accumulate(A)
    logC = lx + LD(p) * ln + PM
    st = _exp(logC)
    tr = trend_of(st)
    rep = _report_from_trend("potter", tr, (1, last), p=float(p))
    if not far or rep.verdict == FAILS:
        return rep
    far_vals = []
    with mpmath.workdps(30):
        best_m = mpmath.mpf(float(PM[-1]))
        for j in FAR_EXPONENTS:
            n = 1 << j
            v = seq.far_log(n)
            if v is None:
                break
            far_vals.append(float(v + p * j * mpmath.log(2) + best_m))
    rep.stats["far_log_constant"] = far_vals
    if not far_vals:
        rep.notes.append("no closed form past the window; far probes skipped")
        return rep
    base = math.log(max(rep.stats["sup"], 1e-300))
    tail = far_vals[-4:]
    if len(tail) >= 3 and all(tail[i + 1] > tail[i] + 1.0 for i in range(len(tail) - 1)) and tail[-1] > base + 1.0:
        rep.verdict = FAILS
        rep.constant = None
        rep.witness = 1 << FAR_EXPONENTS[len(far_vals) - 1]
        rep.notes.append("Potter ratio keeps growing at far indices")
    elif rep.verdict == HOLDS and max(far_vals) > base + 1e-6:
        rep.verdict = INCONCLUSIVE
        rep.constant = None
        rep.notes.append("far indices exceed the window constant without a clear trend")
    return rep


# --------------------------------------------------------------------------
# Varga-type conditions


def _aoo_logs(seq: Sequence, N: int):
    return _am_inf(seq).log_bounds(N)


def varga_check(seq, k: int, window=None) -> ClassReport:
    """inf_n (xi_aoo)_n / (xi_aoo)_{kn} > k, watched through 1/(ratio - k)."""
    seq = _seq(seq)
    _require_summable(seq, "Varga check")
    if k < 2:
        raise ValueError("k must be an integer > 1")
    N = _window(seq, window)
    M = N // k
    lo, up = _aoo_logs(seq, k * M)
    lr = log_ratio(lo[:M], up[k - 1 : k * M : k])
    r = _exp(lr)
    margin = _margin(seq)
    valid = ~np.isnan(r)
    if not valid.any():
        return ClassReport(
            f"varga_k{k}", HOLDS, (1, M), constant=math.inf, notes=["mean at infinity vanishes on the window"]
        )
    inf_r = float(np.nanmin(r))
    with np.errstate(divide="ignore", invalid="ignore"):
        st = 1.0 / (r - k)
    st[r - k <= margin] = np.inf
    tr = trend_of(st)
    rep = _report_from_trend(f"varga_k{k}", tr, (1, M), inf_ratio=inf_r, k=k)
    if rep.verdict == HOLDS:
        rep.constant = inf_r
    rep.stats["lower_bound_holds"] = bool(inf_r >= 1 - 1e-9)
    rep.stats["positivity"] = varga_positivity(seq, k, N).to_dict()
    return rep


def varga_positivity(seq, k: int, window=None) -> ClassReport:
    """inf_n xi_n / (xi_aoo)_{kn} > 0, watched through the reciprocal."""
    seq = _seq(seq)
    _require_summable(seq, "Varga positivity")
    N = _window(seq, window)
    M = N // k
    lx = seq.log_prefix(M)
    _, up = _aoo_logs(seq, k * M)
    st = ratio(up[k - 1 : k * M : k], lx)
    tr = trend_of(st)
    if seq.support is not None and tr.kind != "diverging":
        return ClassReport(f"varga_pos_k{k}", HOLDS, (1, M), constant=float(np.nanmax(st)) if np.any(~np.isnan(st)) else 0.0)
    rep = _report_from_trend(f"varga_pos_k{k}", tr, (1, M), k=k)
    return rep


def sup_inf_check(seq, window=None, ks=(2, 3, 4)) -> ClassReport:
    """sup_k inf_n (xi_aoo)_n / (k (xi_aoo)_{kn}) = infinity.

    The value is >= 1 and equals 1 whenever it is finite, so the check watches
    G(N) = max_k inf_{n <= N} ratio/k through 1/(G(N) - 1) as N grows.
    """
    seq = _seq(seq)
    _require_summable(seq, "sup-inf check")
    N = _window(seq, window)
    kmax = max(ks)
    M = N // kmax
    lo, up = _aoo_logs(seq, kmax * M)
    margin = _margin(seq)
    G = np.full(M, -np.inf)
    for k in ks:
        r = _exp(log_ratio(lo[:M], up[k - 1 : k * M : k])) / k
        r = np.where(np.isnan(r), np.inf, r)
        G = np.maximum(G, np.minimum.accumulate(r))
    if np.all(np.isinf(G)):
        return ClassReport("sup_inf", HOLDS, (1, M), constant=math.inf, notes=["mean at infinity vanishes on the window"])
    with np.errstate(divide="ignore", invalid="ignore"):
        st = 1.0 / (G - 1.0)
    st[G - 1.0 <= margin] = np.inf
    tr = trend_of(st)
    rep = _report_from_trend("sup_inf", tr, (1, M), ks=list(ks), final_G=float(G[-1]))
    if rep.verdict == HOLDS:
        rep.constant = float(G[-1])
    return rep


# --------------------------------------------------------------------------
# equivalent conditions for infinity-regularity


def _alpha_condition(seq: Sequence, N: int) -> ClassReport:
    est = matuszewska_indices(seq, N, with_bounds=False)
    a = est.alpha
    if a < -1 - BRACKET_MARGIN:
        # probe strictly between -1 and the estimate; capped for fast decay
        p = min(1 + (-a - 1) / 2, 4.0)
    else:
        p = 1 + 0.05
    rep = potter_fit(seq, p, N)
    rep.prop = "alpha_lt_minus1"
    rep.stats["alpha_estimate"] = a
    rep.stats["alpha_trend"] = est.alpha_trend
    return rep


def cross_check_412(seq, window=None) -> CrossCheck:
    seq = _seq(seq)
    _require_summable(seq, "equivalence cross-check")
    N = _window(seq, window)
    reps: Dict[str, ClassReport] = {}
    reps["ii"] = check_infty_regular(seq, N)
    reps["iii"] = _alpha_condition(seq, N)
    aoo = _am_inf(seq)
    if aoo.summable == "yes" and aoo.tail_mode != UNAVAILABLE:
        try:
            r4 = check_infty_regular(aoo, N)
        except (SummabilityError, TailUnavailable) as exc:
            r4 = ClassReport("infty_regular", INCONCLUSIVE, (1, N), notes=[str(exc)])
    else:
        r4 = ClassReport(
            "infty_regular",
            INCONCLUSIVE,
            (1, N),
            notes=["tails of the mean at infinity are not available; condition skipped"],
        )
    if aoo.summable == "no":
        r4 = ClassReport(
            "infty_regular", FAILS, (1, N), notes=["the mean at infinity is not summable, so it cannot be infinity-regular"]
        )
    r4.prop = "aoo_infty_regular"
    reps["iv"] = r4
    vk = {k: varga_check(seq, k, N) for k in (2, 3, 4)}
    reps["v"] = _combine("varga_some_k", list(vk.values()), "any", N)
    reps["v'"] = _combine("varga_all_k", list(vk.values()), "all", N)
    pk = [varga_positivity(seq, k, N) for k in (2, 3, 4)]
    reps["v''"] = _combine("positivity_all_k", pk, "all", N)
    reps["v'''"] = _combine("positivity_some_k", pk, "any", N)
    reps["vi"] = sup_inf_check(seq, N)
    required = ["ii", "iii", "v", "v'", "v''", "v'''", "vi"]
    definite = [reps[k].verdict for k in reps if reps[k].verdict != INCONCLUSIVE]
    agreement = all(reps[k].verdict != INCONCLUSIVE for k in required) and len(set(definite)) == 1
    verdict = definite[0] if agreement else INCONCLUSIVE
    return CrossCheck(reps, agreement, verdict)


def _combine(name: str, parts: List[ClassReport], mode: str, N: int) -> ClassReport:
    vs = [p.verdict for p in parts]
    if mode == "any":
        verdict = HOLDS if HOLDS in vs else (FAILS if all(v == FAILS for v in vs) else INCONCLUSIVE)
    else:
        verdict = FAILS if FAILS in vs else (HOLDS if all(v == HOLDS for v in vs) else INCONCLUSIVE)
    rep = ClassReport(name, verdict, (1, N), stats={p.prop: p.to_dict() for p in parts})
    if verdict == FAILS:
        rep.witness = next(p.witness for p in parts if p.verdict == FAILS)
    elif verdict == HOLDS:
        rep.constant = next(p.constant for p in parts if p.verdict == HOLDS)
    return rep
