import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amseq import compile_expr, parse
from amseq.classify import FAILS, HOLDS, check_delta_half
from amseq.constructions import (
    ConstructionError,
    dixmier_gap_check,
    example_422,
    example_45_iii,
    lemma_47_block_eta,
    remark_42_witness,
    theorem_78_family,
    theorem_78_xi,
)
from amseq.constructions import _sums
from amseq.ideals import PrincipalIdeal, se_member


def seq(spec):
    return compile_expr(parse(spec))


@pytest.fixture(scope="module")
def thm78():
    return theorem_78_xi("omega^0.5", 20)


@pytest.fixture(scope="module")
def block_eta():
    return lemma_47_block_eta("omega^0.9", "omega^0.1")


# -- lazy partial sums: Euler-Maclaurin against independent routes


@pytest.mark.parametrize("spec", ["omega^0.5", "omega*log^-2", "omega^1.5*log^2", "omega^0.9"])
def test_lazy_sums_match_direct_summation(spec):
    S = _sums(seq(spec), 60)
    with mpmath.workdps(60):
        a, b = S.A, S.A + 12000
        direct = mpmath.fsum(S._f(j) for j in range(a, b + 1))
        assert abs(S.sum(a, b) / direct - 1) < mpmath.mpf(10) ** -50
        # across the boundary between the exact head and the expansion
        direct = mpmath.fsum(S._f(j) for j in range(S.A - 500, S.A + 500))
        assert abs(S.sum(S.A - 500, S.A + 499) / direct - 1) < mpmath.mpf(10) ** -50


@pytest.mark.parametrize("spec", ["omega^0.5", "omega*log^-2", "omega^1.5*log^2"])
def test_lazy_sums_match_mpmath_sumem_far_out(spec):
    S = _sums(seq(spec), 60)
    with mpmath.workdps(60):
        a, b = 10 ** 20, 10 ** 25
        ref = mpmath.sumem(S._f, [a, b])
        assert abs(S.sum(a, b) / ref - 1) < mpmath.mpf(10) ** -40


# -- block sequences


def test_superfactorial_blocks_certify():
    expr, cert = example_45_iii(K=12)
    assert cert.ok and expr == parse("pw(ex45iii)")
    assert cert.stats["am_infty_delta_half"] == HOLDS


def test_superfactorial_blocks_match_rule():
    _, cert = example_45_iii(K=6)
    n, want = 1, []
    for k in range(1, 7):
        n = math.factorial(k) * n
        want.append((n, Fraction(1, 4 ** k * n)))
    assert cert.stats["blocks"] == want


def test_doubling_breakpoints_rejected_at_three():
    with pytest.raises(ConstructionError) as info:
        example_45_iii(lambda k, prev: 1 if k == 1 else 2 * prev, K=12)
    assert info.value.certificate.checklist["n_k >= k n_(k-1)"].witness == 3


def test_partial_certificate_on_request():
    _, cert = example_45_iii(lambda k, prev: 1 if k == 1 else 2 * prev, K=12, allow_partial=True)
    assert not cert.ok and "n_k >= k n_(k-1)" in cert.failures


def test_block_sequence_violates_delta_half():
    expr, _ = example_45_iii(K=12)
    assert check_delta_half(compile_expr(expr), 1 << 18).verdict == FAILS


def test_too_few_blocks():
    with pytest.raises(ValueError):
        example_45_iii(K=1)


# -- touching omega squared


def _square_factorial_oracle(j):
    k, m = 1, 1
    while m < j:
        k += 1
        m = math.factorial(k) ** 2
    return Fraction(1, m * m)


def test_touching_sequence_meets_square_at_36():
    expr, cert = example_422(6)
    assert cert.ok and cert.stats["touch_points"][:3] == [1, 4, 36]
    eta = compile_expr(expr)
    assert Fraction(str(eta.value(36))) == Fraction(1, 1296) == _square_factorial_oracle(36)


@settings(max_examples=60)
@given(st.integers(1, 518400))
def test_touching_sequence_matches_block_oracle(j):
    eta = compile_expr(parse("pw(ex422)"))
    v = Fraction(str(eta.value(j)))
    assert v == _square_factorial_oracle(j) and v <= Fraction(1, j * j)


def test_touching_sequence_not_soft_interior():
    expr, _ = example_422(6)
    r = se_member(compile_expr(expr), PrincipalIdeal(seq("omega^2")), window=1 << 16)
    assert r.verdict == FAILS


# -- finite witness for the sharpness of the ampliation bound


@pytest.mark.parametrize("j, want", [(2, Fraction(1, 2)), (5, Fraction(4, 5)), (50, Fraction(49, 50))])
def test_indicator_witness(j, want):
    _, cert = remark_42_witness(j)
    assert cert.ok and Fraction(str(cert.stats["value"])) == want < 1


def test_indicator_witness_needs_two():
    with pytest.raises(ValueError):
        remark_42_witness(1)


# -- summable eta under a non-summable xi


def test_block_eta_certificate(block_eta):
    eta, cert = block_eta
    assert cert.ok
    assert len(cert.stats["blocks"]) >= 6


def test_block_eta_sums_inside_dyadic_envelope(block_eta):
    eta, cert = block_eta
    blocks = cert.stats["blocks"]
    with mpmath.workdps(60):
        for prev, b in zip(blocks, blocks[1:]):
            k = b["k"]
            s = eta.prefix_sum(b["m_k"]) - eta.prefix_sum(prev["m_k"])
            assert mpmath.mpf(2) ** (1 - k) * (1 - mpmath.mpf(10) ** -20) <= s <= mpmath.mpf(2) ** (2 - k)
        # block bounds past the first sum to at most 2
        assert eta.total <= 2 + blocks[0]["block_sum"]


@settings(max_examples=40)
@given(st.integers(1, 10 ** 4))
def test_block_eta_tail_dominates_alpha(block_eta, n):
    eta, _ = block_eta
    with mpmath.workdps(40):
        tail = eta.total - eta.prefix_sum(n)
        assert mpmath.power(n, -0.1) <= tail * (1 + mpmath.mpf(10) ** -20)


@settings(max_examples=40)
@given(st.integers(1, 10 ** 6))
def test_block_eta_below_xi(block_eta, n):
    eta, _ = block_eta
    assert float(eta.value(n)) <= n ** -0.9 * (1 + 1e-12)


def test_block_eta_rejects_summable_xi():
    with pytest.raises(ValueError, match="summable"):
        lemma_47_block_eta("omega^2", "omega^0.1")


def test_block_eta_rejects_small_alpha():
    with pytest.raises(ValueError, match="alpha_1"):
        lemma_47_block_eta("omega^0.9", "scale(1/2,omega^0.1)")


# -- irregular xi under a regular mu


def _level_oracle(levels):
    """Rebuild the first levels by direct summation in mpmath."""
    mu = lambda i: mpmath.mpf(i) ** -0.5
    with mpmath.workdps(40):
        p, v = [1], [mu(1)]
        xs, ms = mu(1), mu(1)
        b = 1
        while len(p) < levels:
            L = len(p)
            x_b, m_b = xs, ms
            b = p[-1]
            if b < 2:
                b = 2
                x_b += min(v[-1], mu(2))
                m_b += mu(2)
            while x_b < mpmath.mpf(3) / 4 * m_b:
                b += 1
                x_b += min(v[-1], mu(b))
                m_b += mu(b)
            p_new = b + 1
            v.append(mu(p_new) / (L + 1))
            p.append(p_new)
            xs, ms = x_b + v[-1], m_b + mu(p_new)
    return p, v


def test_levels_match_direct_rebuild(thm78):
    xi, p, cert = thm78
    p_ref, v_ref = _level_oracle(6)
    assert p[:6] == p_ref
    with mpmath.workdps(40):
        for l, (a, b) in enumerate(zip(p_ref, v_ref)):
            assert abs(xi.value(a) / b - 1) < 1e-25


def test_xi_certificate(thm78):
    xi, p, cert = thm78
    assert cert.ok and len(p) == 20
    assert all(a < b for a, b in zip(p, p[1:]))


def test_xi_mean_ratio_exact_on_window(thm78):
    xi, p, _ = thm78
    hi = p[5]
    x = np.exp(xi.log_prefix(hi).astype(np.float64))
    m = np.arange(1, hi + 1, dtype=np.float64) ** -0.5
    assert np.all(x <= m * (1 + 1e-15))
    for l, n in enumerate(p[:6], 1):
        assert x[:n].sum() / m[:n].sum() >= 0.5
        assert x[n - 1] * l == pytest.approx(m[n - 1], rel=1e-14)


def test_xi_irregular_along_levels(thm78):
    _, _, cert = thm78
    irr = cert.stats["irregularity"]
    assert all(float(r) <= 2 / (l + 1) for l, r in enumerate(irr))
    assert float(irr[-1]) < 0.1


def test_xi_rejects_irregular_mu():
    with pytest.raises(ValueError, match="not regular"):
        theorem_78_xi("omega", 5)


def test_xi_rejects_summable_mu():
    with pytest.raises(ValueError, match="summable"):
        theorem_78_xi("omega^2", 5)


# -- the eta family


@pytest.fixture(scope="module")
def family(thm78):
    xi, p, _ = thm78
    return theorem_78_family(xi, p, 3, 8)


def test_family_certificate(family):
    etas, cert = family
    assert cert.ok and len(etas) == 3


def test_family_bounded_by_multiples(thm78, family):
    xi = thm78[0]
    etas, _ = family
    N = 1 << 14
    x = xi.log_prefix(N).astype(np.float64)
    logs = [e.log_prefix(N).astype(np.float64) for e in etas]
    assert np.array_equal(logs[0], x)
    for j, le in enumerate(logs, 1):
        assert np.all(le <= x + math.log(j) + 1e-12)
        assert np.all(np.diff(le) <= 1e-15)
    for a, b in zip(logs, logs[1:]):
        assert np.all(a <= b + 1e-12)


def test_single_member_family(thm78):
    xi, p, _ = thm78
    etas, cert = theorem_78_family(xi, p, N=1, K=8)
    assert etas == [xi] and cert.ok


def test_family_needs_constructed_xi():
    with pytest.raises(TypeError):
        theorem_78_family(seq("omega^0.5"))


# -- the gap condition


def test_gap_holds_for_harmonic():
    r = dixmier_gap_check("omega", 1 << 16)
    assert r.verdict == HOLDS
    assert r.stats["ratio_route"] == r.stats["doubling_route"] == HOLDS
    assert abs(r.stats["doubling_ratio_last"] - 0.5) < 0.05


def test_gap_fails_for_square_root():
    r = dixmier_gap_check("omega^0.5", 1 << 16)
    assert r.verdict == FAILS
    assert r.stats["doubling_ratio_last"] == pytest.approx(2 ** -0.5, abs=0.01)


def test_gap_rejects_constant():
    with pytest.raises(ValueError):
        dixmier_gap_check("omega^0")


def test_gap_rejects_summable():
    with pytest.raises(ValueError, match="summable"):
        dixmier_gap_check("omega^2")
