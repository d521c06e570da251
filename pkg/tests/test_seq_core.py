from fractions import Fraction

import mpmath
import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import given
from hypothesis import strategies as st

from amseq import (
    Ampliation,
    Geom,
    LogPow,
    OmegaPow,
    Product,
    SummabilityError,
    TailUnavailable,
    am_infinity,
    ampliation,
    arithmetic_mean,
    compile_expr,
    dilution,
    eval_at,
    geometric_mean,
    monotonize,
    parse,
    tail_sum,
    upper_envelope,
)
from amseq.sequence import AmInfSeq, AmpliationSeq, MeanSeq, PrefixSeq, to_mpq
from strategies import fsum, nonincreasing_prefix


def seq(spec):
    return compile_expr(parse(spec))


def exact(s, n):
    return [Fraction(int(v.numerator), int(v.denominator)) for v in s.exact_prefix(n)]


# -- eval


def test_eval_harmonic():
    assert eval_at(OmegaPow(1), 4) == mpq(1, 4)


def test_eval_geometric():
    assert eval_at(Geom(Fraction(1, 2)), 3) == mpq(1, 8)


def test_eval_ampliation():
    assert eval_at(Ampliation(2, OmegaPow(1)), 3) == mpq(1, 2)


def test_eval_rejects_index_zero():
    with pytest.raises(ValueError):
        eval_at(OmegaPow(1), 0)


def test_eval_is_pure():
    s = seq("omega^1.5*log^-2")
    assert s.value(777) == s.value(777)


# -- arithmetic mean


def test_mean_of_unit_mass_is_harmonic():
    m = arithmetic_mean(PrefixSeq([1]))
    assert exact(m, 50) == [Fraction(1, n) for n in range(1, 51)]


def test_mean_of_harmonic_at_4():
    oracle = sum(Fraction(1, j) for j in range(1, 5)) / 4
    assert oracle == Fraction(25, 48)
    assert arithmetic_mean(OmegaPow(1)).value(4) == mpq(25, 48)


@given(nonincreasing_prefix())
def test_mean_matches_direct_sums(vals):
    m = arithmetic_mean(PrefixSeq(vals))
    got = exact(m, len(vals))
    assert got == [fsum(vals[:n]) / n for n in range(1, len(vals) + 1)]


@given(nonincreasing_prefix())
def test_doubled_mean_bounds_ampliated_mean(vals):
    x = PrefixSeq(vals)
    a = MeanSeq(x)
    N = 2 * len(vals) + 4
    da = AmpliationSeq(2, a).exact_prefix(N)
    av = a.exact_prefix(N)
    assert all(da[j] <= 2 * av[j] for j in range(N))


# -- mean at infinity


def test_am_infinity_of_unit_mass_vanishes():
    t = am_infinity(PrefixSeq([1]))
    assert all(v == 0 for v in t.exact_prefix(20))


def test_am_infinity_geometric_closed_form():
    t = am_infinity(Geom(Fraction(1, 2)))
    assert exact(t, 60) == [Fraction(1, 2 ** n * n) for n in range(1, 61)]


def test_am_infinity_omega_squared_ratio_tends_to_one():
    s = seq("omega^2")
    t = AmInfSeq(s)
    for n in (10 ** 3, 10 ** 4, 10 ** 5):
        lo, hi = t.bracket(n)
        assert abs(lo * n * n - 1) < 2.0 / n
        assert hi - lo <= 1e-25 * hi


def test_am_infinity_rejects_non_summable():
    with pytest.raises(SummabilityError):
        am_infinity(OmegaPow(1))


@given(nonincreasing_prefix())
def test_am_infinity_matches_direct_tails(vals):
    t = am_infinity(PrefixSeq(vals))
    N = len(vals) + 3
    full = vals + [Fraction(0)] * 3
    assert exact(t, N) == [fsum(full[n:]) / n for n in range(1, N + 1)]


# -- ampliation and dilution


def test_ampliation_repeats_entries():
    assert ampliation(OmegaPow(1), 3).value(7) == mpq(1, 3)


def test_dilution_subsamples():
    assert dilution(OmegaPow(1), 2).value(5) == mpq(1, 10)


def test_ampliation_by_one_is_identity():
    s = seq("omega^0.5*log^2")
    assert ampliation(s, 1) is s


@pytest.mark.parametrize("fn", [ampliation, dilution])
def test_zero_factor_rejected(fn):
    with pytest.raises(ValueError):
        fn(OmegaPow(1), 0)


@given(st.integers(1, 7), st.integers(1, 200))
def test_ampliation_index_formula(m, n):
    d = ampliation(OmegaPow(1), m)
    for p in range(m):
        assert d.value(m * n - p) == mpq(1, n)


# -- monotonize and envelopes


def test_monotonize_example():
    s = monotonize([0, 3, 1, 3])
    assert exact(s, 6) == [3, 3, 1, 0, 0, 0]


def test_monotonize_rejects_negative():
    with pytest.raises(ValueError):
        monotonize([1, -1])


def test_upper_envelope_fixed_point():
    vals = [Fraction(1, n) for n in range(1, 30)]
    assert exact(upper_envelope(vals), 29) == vals


def test_upper_envelope_suffix_sup():
    raw = [Fraction(1, 2), Fraction(1), Fraction(1, 4), Fraction(1, 8)]
    oracle = [max(raw[i:]) for i in range(len(raw))]
    assert exact(upper_envelope(raw), 4) == oracle == [1, 1, Fraction(1, 4), Fraction(1, 8)]


@given(st.lists(st.fractions(min_value=0, max_value=10, max_denominator=20), min_size=1, max_size=40))
def test_monotonize_is_sorted_rearrangement(raw):
    got = exact(monotonize(raw), len(raw))
    assert got == sorted(raw, reverse=True)


# -- geometric mean


def test_geometric_mean_of_constant_prefix():
    g = geometric_mean(PrefixSeq([Fraction(3, 7)] * 12))
    for n in range(1, 13):
        assert abs(float(g.value(n)) - 3 / 7) < 1e-15


@pytest.mark.parametrize("q", [Fraction(1, 2), Fraction(1, 3), Fraction(3, 4)])
def test_geometric_mean_of_geom(q):
    g = geometric_mean(Geom(q))
    for n in (1, 2, 7, 40):
        oracle = mpmath.exp(mpmath.log(mpmath.mpf(q.numerator) / q.denominator) * (n + 1) / 2)
        assert abs(g.value(n) / oracle - 1) < 1e-14


def test_geometric_mean_of_harmonic_matches_stirling():
    g = geometric_mean(OmegaPow(1))
    n = 1024
    oracle = mpmath.exp(-mpmath.loggamma(n + 1) / n)
    assert abs(g.value(n) / oracle - 1) < 1e-12
    assert abs(g.value(n) * n / mpmath.e - 1) < 0.01


def test_geometric_mean_rejects_zero_entry():
    g = geometric_mean(PrefixSeq([1, 1]))
    with pytest.raises(ValueError):
        g.value(3)


# -- tail sums


def test_tail_sum_geometric_exact():
    t = tail_sum(Geom(Fraction(1, 2)), 4)
    assert t.exact and t.value == mpq(1, 16)


def test_tail_sum_bracket_contains_zeta_tail():
    t = tail_sum(OmegaPow(2), 10, 1e-20)
    with mpmath.workdps(40):
        assert t.contains(mpmath.zeta(2, 11))
    assert t.width <= 1e-20


def test_tail_sum_past_support_is_zero():
    t = tail_sum(PrefixSeq([3, 2, 1]), 5)
    assert t.exact and t.value == 0


def test_tail_sum_rejects_unknown_summability():
    s = seq("omega*pw(ex45iii)")
    assert s.summable == "unknown"
    with pytest.raises(SummabilityError):
        tail_sum(s, 3)


def test_tail_sum_gives_up_when_bracket_stalls():
    with pytest.raises(TailUnavailable):
        tail_sum(seq("max(omega^2, pw(ex45iii))"), 3, 1e-12)


# -- identities and inequalities (exact)


@given(nonincreasing_prefix(max_size=80))
def test_forward_recurrences_exact(vals):
    x = PrefixSeq(vals)
    N = len(vals) + 3
    xs, a, t = x.exact_prefix(N), MeanSeq(x).exact_prefix(N), AmInfSeq(x).exact_prefix(N)
    S = to_mpq(x.exact_remainder(0))
    for n in range(2, N + 1):
        assert n * a[n - 1] == xs[n - 1] + (n - 1) * a[n - 2]
        assert (n - 1) * t[n - 2] == xs[n - 1] + n * t[n - 1]
    for n in range(1, N + 1):
        assert a[n - 1] + t[n - 1] == S / n


def test_mean_plus_tail_mean_geometric():
    x = seq("geom(2/3)")
    a, t = MeanSeq(x).exact_prefix(200), AmInfSeq(x).exact_prefix(200)
    S = to_mpq(x.exact_remainder(0))
    assert S == 2
    assert all(a[n - 1] + t[n - 1] == S / n for n in range(1, 201))


@given(nonincreasing_prefix(max_size=50), st.integers(2, 6))
def test_ampliation_inequalities_on_random_prefixes(vals, m):
    x = PrefixSeq(vals)
    N = 6 * len(vals) + 10
    A = AmInfSeq(x)
    da = AmpliationSeq(m, A).exact_prefix(N)
    adm = AmInfSeq(AmpliationSeq(m, x)).exact_prefix(N)
    prev = x if m == 2 else AmpliationSeq(m - 1, x)
    adm1 = AmInfSeq(prev).exact_prefix(N)
    dm1 = prev.exact_prefix(N)
    a = A.exact_prefix(N)
    for j in range(1, N + 1):
        assert da[j - 1] <= adm[j - 1]
        if j >= (m - 1) * (m - 2):
            assert da[j - 1] >= adm1[j - 1]
        if j >= 2 * m * (m - 1):
            assert da[j - 1] >= mpq(1, 2 * (m - 1)) * dm1[j - 1]
        if m * j <= N:
            assert to_mpq(x.value(m * j)) <= mpq(1, m - 1) * a[j - 1]


@given(nonincreasing_prefix(max_size=60))
def test_tail_mean_dominates_from_index_four(vals):
    x = PrefixSeq(vals)
    N = len(vals) + 4
    xs = x.exact_prefix(N)
    d2 = AmpliationSeq(2, AmInfSeq(x)).exact_prefix(N)
    assert all(xs[j - 1] <= 2 * d2[j - 1] for j in range(4, N + 1))


@pytest.mark.parametrize("j", [2, 3, 5, 17, 50])
def test_sharpness_witness(j):
    x = PrefixSeq([1] * (2 * j - 1))
    v = AmpliationSeq(2, AmInfSeq(x)).value(2 * j - 1)
    assert v == mpq(j - 1, j) and v < x.value(2 * j - 1)


# -- monotonicity on windows


@pytest.mark.parametrize(
    "spec",
    ["omega*log^-2", "omega^0.5*log^3", "omega^1.5*log^-1", "min(omega, geom(9/10))", "D3(omega^2)", "pw(ex45iii)"],
)
def test_transforms_nonincreasing(spec):
    s = seq(spec)
    for t in (s, MeanSeq(s)):
        lx = t.log_prefix(1 << 14)
        assert np.all(np.diff(lx) <= 1e-15)


def test_log_factor_flat_below_start_index():
    e = Product((OmegaPow(1), LogPow(Fraction(-2))))
    s = compile_expr(e)
    lx = s.log_prefix(100)
    assert np.all(np.diff(lx) <= 0)
    # ln vanishes at 1, so the flat extension must kick in before n = 3
    assert s.value(1) == s.value(2)
