"""Acceptance criteria, one test each; every test prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or
``python tests/test_acceptance.py``.
"""
import sys
import time

import pytest

from amseq import classify as C
from amseq import constructions as K
from amseq import suites
from amseq.classify import HOLDS, INCONCLUSIVE
from amseq.ideals import PrincipalIdeal, trace_dimension
from amseq.sequence import compile_expr
from amseq.spec_lang import parse

pytestmark = pytest.mark.slow


@pytest.fixture
def announce(capsys):
    def emit(number, ok, detail, seconds, limit):
        fast = seconds < limit
        line = f"ACCEPTANCE {number}: {'PASS' if ok and fast else 'FAIL'} ({seconds:.1f}s / limit {limit}s) {detail}"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
        assert fast, line

    return emit


def _suite(name, **cfg):
    t0 = time.perf_counter()
    res = suites.run_suite(name, cfg)
    return res, time.perf_counter() - t0


def _summary(res):
    counts = res.to_dict()["counts"]
    bad = [c.name for c in res.checks if c.verdict != HOLDS and c.verdict != suites.SKIPPED]
    return f"{counts[HOLDS]} checks hold, {counts[suites.SKIPPED]} skipped" + (f"; not holding: {bad[:3]}" if bad else "")


def test_criterion_1_exact_identities(announce):
    res, secs = _suite("identities")
    ok = res.verdict == HOLDS and len(res.checks) >= 3 + 3 * len(suites.FINITE)
    announce(1, ok, _summary(res), secs, 10)


def test_criterion_2_ampliation_inequalities(announce):
    res, secs = _suite("lemma41", horizon=10 ** 4, tol=1e-12)
    names = [c.name for c in res.checks]
    covered = all(any(n.startswith(f"({r}) m={m}:") for n in names) for r in ("i", "ii", "iii", "iv") for m in range(2, 7))
    witness = any(n.startswith("indicator of [1, 2j-1]") for n in names)
    ok = res.verdict == HOLDS and covered and witness
    announce(2, ok, _summary(res), secs, 30)


def test_criterion_3_tail_mean_corollaries(announce):
    r3, s3 = _suite("cor43", horizon=10 ** 4)
    r4, s4 = _suite("cor44")
    certified = [c for c in r4.checks if c.verdict != suites.SKIPPED]
    ok = r3.verdict == HOLDS and r4.verdict == HOLDS and len(r3.checks) == len(suites.SUMMABLE) and certified
    announce(3, ok, f"cor43: {_summary(r3)}; cor44: {_summary(r4)}", s3 + s4, 30)


def test_criterion_4_equivalence_agreement(announce):
    t0 = time.perf_counter()
    matrix = suites.thm412_matrix(1 << 20)
    secs = time.perf_counter() - t0
    wrong = {
        spec: {k: row["verdicts"][k] for k in suites.THM412_CONDITIONS if row["verdicts"][k] != row["expected"]}
        for spec, row in matrix.items()
    }
    wrong = {k: v for k, v in wrong.items() if v or not matrix[k]["agreement"]}
    ok = not wrong and len(matrix) == len(suites.THM412_TRUTH)
    detail = f"{len(matrix)} sequences x {len(suites.THM412_CONDITIONS)} conditions" + (f"; mismatches {wrong}" if wrong else "")
    announce(4, ok, detail, secs, 60)


def test_criterion_5_index_accuracy(announce):
    res, secs = _suite("indices", window=1 << 20)
    ok = res.verdict == HOLDS and res.params["k_cap"] == 1 << 12
    announce(5, ok, _summary(res), secs, 60)


def test_criterion_6_lorentz_tower(announce):
    res, secs = _suite("lorentz")
    ok = res.verdict == HOLDS and len(res.checks) == 20
    announce(6, ok, _summary(res), secs, 5)


REQUIRED = {
    "lemma_47_block_eta": ["2^(1-k) <= block sum <= 2^(2-k)", "alpha_n <= tail(eta)_n"],
    "theorem_78_xi": ["(i) xi <= mu", "(ii) xi_(p_l) = mu_(p_l) / l", "(iii) (xi_a)_(p_l) >= (mu_a)_(p_l) / 2"],
    "theorem_78_family": [
        "(a) n_k^(j) = p_l with l >= k",
        "(b) sum_(m..n) xi >= 3 sum_(1..m) xi",
        "(c) m_k^(j-1) = k n_k^(j) + 1",
        "(d) m_(k+1)^(N) = min{i : xi_(k n_k^(1)) >= N xi_i}",
    ],
    "example_422": ["eta <= omega^2", "eta_(m_k) / omega^2_(m_k) = 1"],
}


def test_criterion_7_construction_certificates(announce):
    t0 = time.perf_counter()
    certs = {}
    problems = []
    try:
        eta, certs["lemma_47_block_eta"] = K.lemma_47_block_eta("omega^0.9", "omega^0.1", horizon=10 ** 4)
        if len(certs["lemma_47_block_eta"].stats["blocks"]) < 6:
            problems.append("lemma47: fewer than 6 blocks")
        xi, p, certs["theorem_78_xi"] = K.theorem_78_xi("omega^0.5", 20)
        _, certs["theorem_78_family"] = K.theorem_78_family(xi, p, N=3, K=8)
        _, certs["example_422"] = K.example_422(6)
        if certs["example_422"].horizon["blocks"] != 6:
            problems.append("ex422: wrong block count")
    except K.ConstructionError as exc:
        problems.append(str(exc))
    secs = time.perf_counter() - t0
    for name, keys in REQUIRED.items():
        cert = certs.get(name)
        if cert is None:
            problems.append(f"{name}: not built")
            continue
        missing = [k for k in keys if k not in cert.checklist]
        if missing or not cert.ok:
            problems.append(f"{name}: missing {missing}, failures {cert.failures}")
    detail = f"{len(certs)} certificates, {sum(len(c.checklist) for c in certs.values())} conditions"
    announce(7, not problems, detail + (f"; {problems}" if problems else ""), secs, 60)


TRACE_TRUTH = [
    ("omega^0.5", "zero"),
    ("omega^2", "one"),
    ("omega", "uncountable"),
    ("omega*log^-2", "uncountable"),
    ("geom(1/2)", "one"),
]

CHAINS = {
    "zero": ["omega_membership", "regularity"],
    "one": ["omega_membership", "summability", "infty_regularity"],
}


def test_criterion_8_trace_dimensions(announce):
    t0 = time.perf_counter()
    got, problems = {}, []
    for spec, want in TRACE_TRUTH:
        tv = trace_dimension(PrincipalIdeal(compile_expr(parse(spec))))
        got[spec] = tv.value
        rules = [r for r, _ in tv.chain]
        if tv.value != want:
            problems.append(f"{spec}: {tv.value} (want {want})")
        if any(v == INCONCLUSIVE for _, v in tv.chain):
            problems.append(f"{spec}: inconclusive step in {tv.chain}")
        expected_chain = CHAINS.get(want)
        if expected_chain and rules != expected_chain:
            problems.append(f"{spec}: chain {rules}")
        if want == "uncountable" and rules not in (
            ["omega_membership", "regularity"],
            ["omega_membership", "summability", "infty_regularity"],
            ["omega_membership", "summability"],
        ):
            problems.append(f"{spec}: chain {rules}")
    secs = time.perf_counter() - t0
    announce(8, not problems, f"{got}" + (f"; {problems}" if problems else ""), secs, 60)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
