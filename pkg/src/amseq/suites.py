"""Runnable property suites behind ``amseq verify``.

Every suite returns a SuiteResult holding named checks.  A check is either
exact (rational arithmetic, zero tolerance) or bracketed, in which case the
comparison is made between the unfavourable ends of the brackets with a
relative slack ``tol``.
"""
from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional

import numpy as np
from gmpy2 import mpq

from . import classify as C
from . import constructions as K
from .classify import FAILS, HOLDS, INCONCLUSIVE
from .expr import am_infinity_class, log_weighted_summability
from .sequence import AmInfSeq, AmpliationSeq, MeanSeq, PrefixSeq, Sequence, compile_expr, to_mpq
from .spec_lang import parse

SKIPPED = "skipped"

SUITES = ("identities", "lemma41", "cor43", "cor44", "thm412", "indices", "lorentz", "constructions")

DEFAULTS = {
    "window": None,
    "tol": 1e-12,
    "horizon": 10 ** 4,
    "seed": 20240601,
}

# summable catalog used by several suites
SUMMABLE = (
    "omega^1.25",
    "omega^1.5",
    "omega^2",
    "omega^3",
    "geom(1/4)",
    "geom(1/2)",
    "geom(3/4)",
    "omega*log^-1.5",
    "omega*log^-2",
    "omega*log^-3",
    "pw(ex45iii-fact)",
    "pw(1:1, 4:1/3, 20:1/10, 100:1/50)",
    "prefix([1, 1/2, 1/3, 1/4])",
)

FINITE = (
    "prefix([1])",
    "prefix([1, 1, 1, 1, 1, 1, 1, 1, 1])",
    "prefix([1, 1/2, 1/3, 1/4])",
    "pw(1:1, 4:1/3, 20:1/10, 100:1/50)",
    "pw(2:3/4, 7:1/2, 30:1/9)",
)

# ground truth for the infinity-regularity equivalences
THM412_TRUTH = (
    ("omega^1.25", HOLDS),
    ("omega^1.5", HOLDS),
    ("omega^2", HOLDS),
    ("omega^3", HOLDS),
    ("geom(1/4)", HOLDS),
    ("geom(1/2)", HOLDS),
    ("geom(3/4)", HOLDS),
    ("omega*log^-1.5", FAILS),
    ("omega*log^-2", FAILS),
    ("omega*log^-3", FAILS),
    ("pw(ex45iii-fact)", FAILS),
)
THM412_CONDITIONS = ("ii", "iii", "v", "v'", "v''", "v'''", "vi")

LORENTZ_CATALOG = (
    "omega^1.25",
    "omega^1.5",
    "omega^2",
    "omega^3",
    "omega*log^-1.5",
    "omega*log^-2",
    "omega*log^-2.5",
    "omega*log^-3",
    "omega*log^-4",
    "omega*log^-5",
    "omega*log^-6",
    "omega*log^-7",
    "omega^1.5*log^2",
    "omega^2*log^-1",
    "omega^1.1*log^3",
    "geom(1/2)",
    "geom(3/4)*omega",
    "scale(3, omega*log^-2.5)",
    "D2(omega*log^-3)",
    "D3(omega^2)",
)

INDEX_EXPONENTS = (0.5, 1, 1.5, 2, 3)
REGULAR_CATALOG = ("omega^0.5", "omega^0.75", "omega^0.9", "omega^0.5*log^2")
INFTY_REGULAR_CATALOG = ("omega^1.25", "omega^1.5", "omega^2", "omega^3", "geom(1/4)", "geom(1/2)", "geom(3/4)")


@dataclass
class CheckResult:
    name: str
    verdict: str
    detail: str = ""
    witness: Optional[object] = None

    def to_dict(self) -> dict:
        return {"name": self.name, "verdict": self.verdict, "detail": self.detail, "witness": _plain(self.witness)}


@dataclass
class SuiteResult:
    suite: str
    checks: List[CheckResult] = field(default_factory=list)
    seconds: float = 0.0
    params: Dict = field(default_factory=dict)

    def add(self, name, verdict, detail="", witness=None):
        if isinstance(verdict, bool):
            verdict = HOLDS if verdict else FAILS
        self.checks.append(CheckResult(name, verdict, detail, witness))

    @property
    def verdict(self) -> str:
        vs = {c.verdict for c in self.checks}
        if FAILS in vs:
            return FAILS
        if INCONCLUSIVE in vs:
            return INCONCLUSIVE
        return HOLDS

    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if c.verdict == FAILS]

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "verdict": self.verdict,
            "params": _plain(self.params),
            "counts": {v: sum(c.verdict == v for c in self.checks) for v in (HOLDS, FAILS, INCONCLUSIVE, SKIPPED)},
            "checks": [c.to_dict() for c in self.checks],
        }


def _plain(x):
    if isinstance(x, (Fraction, type(mpq(0)))):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else int(x.numerator)
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return C._jsonable(x)


def _seq(spec: str) -> Sequence:
    return compile_expr(parse(spec))


def _first_bad(flags) -> Optional[int]:
    """1-based position of the first False, or None."""
    for i, ok in enumerate(flags, 1):
        if not ok:
            return i
    return None


# --------------------------------------------------------------------------
# identities


def random_prefix(rng: random.Random, length: int, den: int = 64) -> List[Fraction]:
    """Random nonincreasing rationals, sometimes with trailing zeros."""
    vals = sorted((Fraction(rng.randint(1, 1000), rng.randint(1, den)) for _ in range(length)), reverse=True)
    if rng.random() < 0.3:
        cut = rng.randint(length // 2, length)
        vals[cut:] = [Fraction(0)] * (length - cut)
    return vals


def identity_violations(x: Sequence, N: int) -> Dict[str, Optional[int]]:
    """First index breaking each exact identity on [1, N] (None when it holds)."""
    xs = x.exact_prefix(N)
    a = MeanSeq(x).exact_prefix(N)
    t = AmInfSeq(x).exact_prefix(N)
    S = to_mpq(x.exact_remainder(0))
    out = {}
    out["mean recurrence"] = _first_bad(
        [a[0] == xs[0]] + [n * a[n - 1] == xs[n - 1] + (n - 1) * a[n - 2] for n in range(2, N + 1)]
    )
    out["tail recurrence"] = _first_bad(
        [True] + [(n - 1) * t[n - 2] == xs[n - 1] + n * t[n - 1] for n in range(2, N + 1)]
    )
    out["mean + tail mean = S omega"] = _first_bad([a[n - 1] + t[n - 1] == S / n for n in range(1, N + 1)])
    return out


def suite_identities(cfg: dict) -> SuiteResult:
    res = SuiteResult("identities", params={"random_prefixes": 50, "length": 2000, "seed": cfg["seed"]})
    rng = random.Random(cfg["seed"])
    bad: Dict[str, List] = {}
    for i in range(50):
        x = PrefixSeq(random_prefix(rng, 2000))
        for name, w in identity_violations(x, 2010).items():
            if w is not None:
                bad.setdefault(name, []).append((i, w))
    for name in ("mean recurrence", "tail recurrence", "mean + tail mean = S omega"):
        res.add(f"{name} on 50 random prefixes", name not in bad, witness=bad.get(name, [None])[0])
    for spec in FINITE + ("geom(1/2)", "geom(3/4)"):
        x = _seq(spec)
        N = (x.support + 5) if x.support is not None else 300
        for name, w in identity_violations(x, N).items():
            res.add(f"{name}: {spec}", w is None, detail=f"n <= {N}", witness=w)
    return res


# --------------------------------------------------------------------------
# ampliation inequalities


def _lemma41_exact(res: SuiteResult, spec: str, x: Sequence, H: int):
    A = AmInfSeq(x)
    xs = x.exact_prefix(H)
    a = A.exact_prefix(H)
    for m in range(2, 7):
        DA = AmpliationSeq(m, A).exact_prefix(H)
        ADm = AmInfSeq(AmpliationSeq(m, x)).exact_prefix(H)
        Dm1 = xs if m == 2 else AmpliationSeq(m - 1, x).exact_prefix(H)
        ADm1 = a if m == 2 else AmInfSeq(AmpliationSeq(m - 1, x)).exact_prefix(H)
        w = _first_bad(DA[j] <= ADm[j] for j in range(H))
        res.add(f"(i) m={m}: {spec}", w is None, "exact, j <= %d" % H, w)
        j0 = max(1, (m - 1) * (m - 2))
        w = _first_bad(DA[j - 1] >= ADm1[j - 1] for j in range(j0, H + 1))
        res.add(f"(ii) m={m}: {spec}", w is None, f"exact, {j0} <= j <= {H}", None if w is None else w + j0 - 1)
        j0 = 2 * m * (m - 1)
        c = mpq(1, 2 * (m - 1))
        w = _first_bad(DA[j - 1] >= c * Dm1[j - 1] for j in range(j0, H + 1))
        res.add(f"(iii) m={m}: {spec}", w is None, f"exact, {j0} <= j <= {H}", None if w is None else w + j0 - 1)
        c = mpq(1, m - 1)
        # xi_{mj} one at a time: the full prefix up to mH can be large
        w = _first_bad(to_mpq(x.value(m * j)) <= c * a[j - 1] for j in range(1, H + 1))
        res.add(f"(iv) m={m}: {spec}", w is None, "exact, j <= %d" % H, w)


def _amp(arr: np.ndarray, m: int, H: int) -> np.ndarray:
    idx = (np.arange(1, H + 1) + m - 1) // m
    return arr[idx - 1]


def _lemma41_bracketed(res: SuiteResult, spec: str, x: Sequence, H: int, tol: float):
    slack = math.log1p(tol)
    lx = x.log_prefix(6 * H)
    lo, up = AmInfSeq(x).log_bounds(H)
    for m in range(2, 7):
        dm = AmpliationSeq(m, x)
        dlo, dup = AmInfSeq(dm).log_bounds(H)
        w = _first_bad(_amp(up, m, H) <= dlo + slack)
        res.add(f"(i) m={m}: {spec}", w is None, f"bracketed, tol {tol:g}, j <= {H}", w)
        if m == 2:
            plo, pup, dm1 = lo, up, lx[:H]
        else:
            d1 = AmpliationSeq(m - 1, x)
            plo, pup = AmInfSeq(d1).log_bounds(H)
            dm1 = d1.log_prefix(H)
        j0 = max(1, (m - 1) * (m - 2))
        w = _first_bad((_amp(lo, m, H) + slack >= pup)[j0 - 1 :])
        res.add(f"(ii) m={m}: {spec}", w is None, f"bracketed, {j0} <= j <= {H}", None if w is None else w + j0 - 1)
        j0 = 2 * m * (m - 1)
        w = _first_bad((_amp(lo, m, H) + slack >= dm1 - math.log(2 * (m - 1)))[j0 - 1 :])
        res.add(f"(iii) m={m}: {spec}", w is None, f"bracketed, {j0} <= j <= {H}", None if w is None else w + j0 - 1)
        w = _first_bad(lx[m - 1 : m * H : m] <= lo - math.log(m - 1) + slack)
        res.add(f"(iv) m={m}: {spec}", w is None, f"bracketed, j <= {H}", w)


def suite_lemma41(cfg: dict) -> SuiteResult:
    H = cfg["horizon"]
    res = SuiteResult("lemma41", params={"horizon": H, "m": [2, 3, 4, 5, 6], "tol": cfg["tol"]})
    rng = random.Random(cfg["seed"] + 41)
    cases = [(s, _seq(s)) for s in ("geom(1/4)", "geom(1/2)", "geom(3/4)")]
    for i in range(8):
        vals = random_prefix(rng, rng.randint(5, 400), den=16)
        cases.append((f"random finite #{i}", PrefixSeq(vals)))
    cases += [(s, _seq(s)) for s in ("pw(1:1, 4:1/3, 20:1/10, 100:1/50)", "pw(2:3/4, 7:1/2, 30:1/9, 500:1/1000)")]
    for spec, x in cases:
        _lemma41_exact(res, spec, x, H)
    for spec in ("pw(ex45iii-fact)", "pw(ex45iii)", "omega^2"):
        _lemma41_bracketed(res, spec, _seq(spec), H, cfg["tol"])
    # sharpness: indicator of [1, 2j-1]
    bad = []
    for j in range(2, 51):
        x = PrefixSeq([1] * (2 * j - 1))
        v = to_mpq(AmpliationSeq(2, AmInfSeq(x)).value(2 * j - 1))
        if not (v == mpq(j - 1, j) and v < 1):
            bad.append(j)
    res.add("indicator of [1, 2j-1]: (D_2 xi_aoo)_(2j-1) = (j-1)/j < 1, j = 2..50", not bad, "exact", bad[:1] or None)
    return res


# --------------------------------------------------------------------------
# corollaries on the mean at infinity


def suite_cor43(cfg: dict) -> SuiteResult:
    H = cfg["horizon"]
    slack = math.log1p(cfg["tol"])
    res = SuiteResult("cor43", params={"horizon": H, "tol": cfg["tol"]})
    for spec in SUMMABLE:
        x = _seq(spec)
        A = AmInfSeq(x)
        if A.exact_values:
            xs = x.exact_prefix(H)
            DA = AmpliationSeq(2, A).exact_prefix(H)
            w = _first_bad(xs[j - 1] <= 2 * DA[j - 1] for j in range(4, H + 1))
            mode = "exact"
        else:
            lx = x.log_prefix(H)
            lo, _ = A.log_bounds(H)
            w = _first_bad((lx <= math.log(2) + _amp(lo, 2, H) + slack)[3:])
            mode = "bracketed"
        res.add(f"xi_j <= 2 (D_2 xi_aoo)_j: {spec}", w is None, f"{mode}, 4 <= j <= {H}", None if w is None else w + 3)
    return res


def suite_cor44(cfg: dict) -> SuiteResult:
    W = cfg["window"] or (1 << 16)
    slack = math.log1p(cfg["tol"])
    res = SuiteResult("cor44", params={"window": W, "tol": cfg["tol"]})
    for spec in SUMMABLE:
        x = _seq(spec)
        if x.support is not None:
            res.add(f"doubling bound: {spec}", SKIPPED, "finitely supported: the ratio is undefined past the support")
            continue
        lx = x.log_prefix(W)
        lo, up = AmInfSeq(x).log_bounds(W)
        st = C.ratio(lx, lo)
        tr = C.trend_of(st)
        if tr.kind != "bounded":
            res.add(f"doubling bound: {spec}", SKIPPED, f"sup xi/xi_aoo not certified ({tr.kind})")
            continue
        M = float(np.nanmax(st))
        half = W // 2
        lhs = up[:half] - lo[1 : 2 * half : 2]
        w = _first_bad(lhs <= (M + 1) * math.log(2) + slack)
        res.add(
            f"(xi_aoo)_n / (xi_aoo)_2n <= 2^(M+1): {spec}",
            w is None,
            f"M = {M:.6g}, n <= {half}, max ratio {float(np.exp(np.max(lhs))):.6g}",
            w,
        )
    return res


# --------------------------------------------------------------------------
# equivalences, indices, Lorentz tower


def thm412_matrix(window=None) -> Dict[str, dict]:
    out = {}
    for spec, expected in THM412_TRUTH:
        cc = C.cross_check_412(_seq(spec), window or C.DEFAULT_WINDOW)
        out[spec] = {
            "expected": expected,
            "verdicts": {k: cc.reports[k].verdict for k in cc.reports},
            "agreement": cc.agreement,
            "verdict": cc.verdict,
        }
    return out


def suite_thm412(cfg: dict) -> SuiteResult:
    W = cfg["window"] or C.DEFAULT_WINDOW
    res = SuiteResult("thm412", params={"window": W, "conditions": list(THM412_CONDITIONS)})
    for spec, row in thm412_matrix(W).items():
        wrong = [k for k in THM412_CONDITIONS if row["verdicts"][k] != row["expected"]]
        unsettled = [k for k in THM412_CONDITIONS if row["verdicts"][k] == INCONCLUSIVE]
        if not wrong:
            v = HOLDS
        elif unsettled and len(unsettled) == len(wrong):
            v = INCONCLUSIVE
        else:
            v = FAILS
        detail = ", ".join(f"{k}:{row['verdicts'][k]}" for k in row["verdicts"])
        res.add(f"all conditions {row['expected']}: {spec}", v, detail, wrong or None)
    return res


def suite_indices(cfg: dict) -> SuiteResult:
    W = cfg["window"] or C.DEFAULT_WINDOW
    res = SuiteResult("indices", params={"window": W, "k_cap": C.K_CAP, "tolerance": 0.05})
    for p in INDEX_EXPONENTS:
        spec = f"omega^{p}"
        est = C.matuszewska_indices(_seq(spec), W, with_bounds=False)
        res.add(f"alpha = -{p}: {spec}", abs(est.alpha + p) <= 0.05, f"alpha {est.alpha:.5f}")
        res.add(f"beta = -{p}: {spec}", abs(est.beta + p) <= 0.05, f"beta {est.beta:.5f}")
    for spec in INFTY_REGULAR_CATALOG:
        x = _seq(spec)
        est = C.matuszewska_indices(x, W, with_bounds=False)
        ab = C.analytic_bounds(x, W)
        res.add(
            f"alpha <= -1 - inf xi/xi_aoo: {spec}",
            est.alpha <= ab.alpha_upper + 0.05,
            f"alpha {est.alpha:.5f}, bound {ab.alpha_upper:.5f}",
        )
    for spec in REGULAR_CATALOG:
        x = _seq(spec)
        est = C.matuszewska_indices(x, W, with_bounds=False)
        ab = C.analytic_bounds(x, W)
        res.add(
            f"beta >= -1 + inf xi/xi_a: {spec}",
            est.beta >= ab.beta_lower - 0.05,
            f"beta {est.beta:.5f}, bound {ab.beta_lower:.5f}",
        )
    return res


def suite_lorentz(cfg: dict) -> SuiteResult:
    res = SuiteResult("lorentz", params={"catalog": len(LORENTZ_CATALOG), "levels": [0, 1, 2, 3, 4]})
    for spec in LORENTZ_CATALOG:
        e = parse(spec)
        aoo = am_infinity_class(e)
        if aoo is None:
            res.add(f"am-infinity tower: {spec}", INCONCLUSIVE, "no symbolic class for the mean at infinity")
            continue
        rows = [(m, log_weighted_summability(aoo, m), log_weighted_summability(e, m + 1)) for m in range(5)]
        bad = [m for m, a, b in rows if a != b or a == "unknown"]
        detail = "; ".join(f"m={m}: {a}/{b}" for m, a, b in rows)
        res.add(f"aoo at log^m matches log^(m+1): {spec}", not bad, detail, bad[:1] or None)
    return res


# --------------------------------------------------------------------------
# constructions


def _cert_check(res: SuiteResult, label: str, fn: Callable):
    try:
        out = fn()
    except K.ConstructionError as exc:
        res.add(label, FAILS, str(exc))
        return None
    cert = out[-1]
    res.add(label, cert.ok, "; ".join(f"{k}" for k in cert.checklist), cert.failures or None)
    return out


def suite_constructions(cfg: dict) -> SuiteResult:
    H = cfg["horizon"]
    res = SuiteResult("constructions", params={"horizon": H})
    out = _cert_check(res, "lemma47 (omega^0.9, omega^0.1)", lambda: K.lemma_47_block_eta("omega^0.9", "omega^0.1", horizon=H))
    if out is not None:
        cert = out[1]
        blocks = len(cert.stats.get("blocks", []))
        res.add("lemma47 completes >= 6 blocks", blocks >= 6, f"{blocks} blocks")
    out = _cert_check(res, "thm78xi (omega^0.5, L=20)", lambda: K.theorem_78_xi("omega^0.5", 20))
    if out is not None:
        xi, p, _ = out
        _cert_check(res, "thm78family (N=3, K=8)", lambda: K.theorem_78_family(xi, p, N=3, K=8))
    _cert_check(res, "ex422 (k <= 6)", lambda: K.example_422(6))
    _cert_check(res, "ex45iii (12 blocks)", lambda: K.example_45_iii(K=12))
    _cert_check(res, "remark42 (j = 5)", lambda: K.remark_42_witness(5))
    return res


RUNNERS = {
    "identities": suite_identities,
    "lemma41": suite_lemma41,
    "cor43": suite_cor43,
    "cor44": suite_cor44,
    "thm412": suite_thm412,
    "indices": suite_indices,
    "lorentz": suite_lorentz,
    "constructions": suite_constructions,
}


def expand(name: str) -> List[str]:
    if name == "all":
        return list(SUITES)
    if name not in RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES + ('all',))}")
    return [name]


def run_suite(name: str, cfg: Optional[dict] = None) -> SuiteResult:
    full = dict(DEFAULTS)
    full.update({k: v for k, v in (cfg or {}).items() if v is not None})
    t0 = time.perf_counter()
    res = RUNNERS[name](full)
    res.seconds = time.perf_counter() - t0
    return res
