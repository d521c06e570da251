from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amseq import compile_expr, parse
from amseq.classify import FAILS, HOLDS
from amseq.expr import LogPow, OmegaPow, Product
from amseq.ideals import (
    SE_OMEGA,
    LorentzLevel,
    PrincipalIdeal,
    lorentz_member,
    member,
    principal_am,
    principal_am_infty,
    se_member,
    stabilizer_tower,
    three_way_class,
    trace_dimension,
)
from amseq.sequence import AmInfSeq, AmpliationSeq

W = 1 << 16


def seq(spec):
    return compile_expr(parse(spec))


def ideal(spec):
    return PrincipalIdeal(seq(spec), window=W)


# -- membership


def test_square_in_harmonic_ideal():
    r = member(seq("omega^2"), ideal("omega"))
    assert r.verdict == HOLDS and r.stats["m"] == 1 and r.constant == pytest.approx(1.0)


def test_harmonic_not_in_square_ideal():
    r = member(seq("omega"), ideal("omega^2"))
    assert r.verdict == FAILS


def test_ampliation_needs_matching_factor():
    x = seq("geom(1/2)")
    r = member(AmpliationSeq(5, x), PrincipalIdeal(x), window=1 << 14)
    assert r.verdict == HOLDS and r.stats["m"] == 5 and r.constant == pytest.approx(1.0)


def test_ampliation_beyond_m_max_fails():
    x = seq("geom(1/2)")
    assert member(AmpliationSeq(5, x), PrincipalIdeal(x), m_max=4, window=1 << 14).verdict == FAILS


def test_m_max_must_be_positive():
    with pytest.raises(ValueError):
        member(seq("omega"), ideal("omega"), m_max=0)


def test_contains_method_matches_member():
    assert ideal("omega").contains(seq("omega^3")).verdict == HOLDS


def test_soft_interior():
    assert se_member(seq("omega^2"), ideal("omega")).verdict == HOLDS
    assert se_member(seq("omega"), ideal("omega")).verdict == FAILS


def test_ideal_equality_up_to_ampliation():
    assert ideal("omega^1.5") == PrincipalIdeal(AmpliationSeq(3, seq("omega^1.5")), window=W)
    assert ideal("omega") != ideal("omega^2")


specs = st.sampled_from(["omega^0.5", "omega", "omega^2", "omega*log^-2", "geom(1/2)", "omega^1.5*log^3"])


@settings(max_examples=12)
@given(specs)
def test_membership_is_reflexive(spec):
    r = member(seq(spec), ideal(spec))
    assert r.verdict == HOLDS and r.stats["m"] == 1 and r.constant == pytest.approx(1.0)


@settings(max_examples=12)
@given(specs, specs)
def test_pointwise_smaller_is_member(a, b):
    assert member(seq(f"min({a},{b})"), ideal(a)).verdict == HOLDS


@pytest.mark.parametrize("spec", ["omega^2", "omega^1.5", "geom(1/3)", "omega*log^-2", "pw(ex45iii-fact)"])
def test_generator_in_its_tail_mean_ideal(spec):
    x = seq(spec)
    r = member(x, PrincipalIdeal(AmInfSeq(x)), window=W)
    assert r.verdict == HOLDS and r.stats["m"] <= 2


# -- arithmetic-mean ideals


def test_mean_of_harmonic_ideal_is_log_ideal():
    am = principal_am(ideal("omega"))
    assert member(seq("omega*log"), am).verdict == HOLDS
    assert member(am.generator, ideal("omega*log")).verdict == HOLDS


def test_tail_mean_ideal_of_geometric_exact():
    g = principal_am_infty(ideal("geom(1/2)")).generator
    assert [g.value(n) for n in (1, 2, 3, 10)] == [Fraction(1, 2), Fraction(1, 8), Fraction(1, 24), Fraction(1, 10240)]


def test_tail_mean_ideal_outside_trace_class_is_marker():
    assert principal_am_infty(ideal("omega^0.5")) is SE_OMEGA


# -- Lorentz levels and towers


@pytest.mark.parametrize(
    "spec, m, want",
    [
        ("omega*log^-3", 1, "yes"),
        ("omega*log^-2", 1, "no"),
        ("geom(1/3)", 4, "yes"),
        ("omega^2", 4, "yes"),
        ("omega", 0, "no"),
    ],
)
def test_lorentz_member(spec, m, want):
    assert lorentz_member(spec, m) == want


def test_lorentz_rejects_negative_level():
    with pytest.raises(ValueError):
        lorentz_member("omega^2", -1)


def test_am_upper_tower():
    assert stabilizer_tower("am_upper", 2) == [
        OmegaPow(1),
        Product((OmegaPow(1), LogPow(1))),
        Product((OmegaPow(1), LogPow(2))),
    ]


def test_lower_tower_levels():
    levels = stabilizer_tower("am_infty_lower", 3)
    assert all(isinstance(lv, LorentzLevel) for lv in levels)
    assert [lv.contains(parse("omega*log^-5")) for lv in levels] == ["yes"] * 4
    assert all(lv.contains(parse("omega^2")) == "yes" for lv in levels)


def test_unknown_tower():
    with pytest.raises(ValueError):
        stabilizer_tower("sideways", 1)


# -- three-way classification


@pytest.mark.parametrize(
    "spec, want", [("omega^2", "small"), ("omega^0.5", "large"), ("omega*log^-2", "intermediate")]
)
def test_three_way(spec, want):
    r = three_way_class(ideal(spec), 3, W)
    assert r.value == want and r.caveat


def test_three_way_needs_symbolic_generator():
    with pytest.raises(ValueError):
        three_way_class(PrincipalIdeal(AmInfSeq(seq("omega^2"))), 1)


# -- trace dimension


def test_trace_dimension_square_root_is_zero():
    tv = trace_dimension(PrincipalIdeal(seq("omega^0.5")))
    assert tv.value == "zero"
    assert tv.chain == [("omega_membership", HOLDS), ("regularity", HOLDS)]


def test_trace_dimension_harmonic_is_uncountable():
    tv = trace_dimension(PrincipalIdeal(seq("omega")))
    assert tv.value == "uncountable"
    assert tv.chain[-1] == ("regularity", FAILS)


def test_trace_dimension_finite_rank():
    tv = trace_dimension(PrincipalIdeal(seq("prefix([1,1/2])")))
    assert tv.value == "one" and tv.chain == [("finite_support", HOLDS)]


def test_trace_dimension_non_summable_outside_harmonic_ideal():
    tv = trace_dimension(PrincipalIdeal(seq("omega*log^-1")), window=W)
    assert tv.value == "uncountable"
    assert tv.chain == [("omega_membership", FAILS), ("summability", FAILS)]


def test_trace_one_is_consistent_with_lorentz_levels():
    tv = trace_dimension(PrincipalIdeal(seq("omega^2")), window=W)
    assert tv.value == "one"
    assert not any("inconsistent" in n for n in tv.notes)
    assert all(lorentz_member("omega^2", m) == "yes" for m in range(4))


def test_trace_verdict_serializes():
    d = trace_dimension(PrincipalIdeal(seq("omega"))).to_dict()
    assert d["value"] == "uncountable" and d["chain"][0]["rule"] == "omega_membership"
