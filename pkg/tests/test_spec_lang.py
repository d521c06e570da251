from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from amseq.expr import (
    Ampliation,
    Dilution,
    Geom,
    LogPow,
    Max,
    Min,
    OmegaPow,
    PiecewiseConstant,
    PrefixOverride,
    Product,
    Scale,
    Sum,
)
from amseq.spec_lang import ParseError, PrefixFileError, load_prefix, parse, parse_with_notes, to_string

# -- round trip

exponents = st.fractions(min_value=Fraction(-4), max_value=Fraction(4), max_denominator=12)
ratios = st.fractions(min_value=Fraction(1, 50), max_value=Fraction(49, 50), max_denominator=50)
positive = st.fractions(min_value=Fraction(1, 20), max_value=Fraction(20), max_denominator=20)


@st.composite
def inline_prefix(draw):
    vals = sorted(draw(st.lists(positive, min_size=1, max_size=6)), reverse=True)
    return tuple(vals)


@st.composite
def explicit_pw(draw):
    n = draw(st.integers(1, 5))
    bps = sorted(draw(st.sets(st.integers(1, 500), min_size=n, max_size=n)))
    vals = sorted(draw(st.sets(positive, min_size=n, max_size=n)), reverse=True)
    return PiecewiseConstant(tuple(bps), tuple(vals))


leaves = st.one_of(
    exponents.filter(lambda p: p != 0).map(OmegaPow),
    exponents.filter(lambda r: r != 0).map(LogPow),
    ratios.map(Geom),
    inline_prefix().map(lambda v: PrefixOverride(v)),
    explicit_pw(),
    st.sampled_from(["ex45iii", "ex45iii-fact"]).map(lambda r: PiecewiseConstant(rule=r)),
)


def _extend(children):
    many = st.lists(children, min_size=2, max_size=3).map(tuple)
    return st.one_of(
        st.builds(Ampliation, st.integers(1, 9), children),
        st.builds(Dilution, st.integers(1, 9), children),
        st.builds(Scale, positive, children),
        many.map(Sum),
        many.map(Min),
        many.map(Max),
        many.map(Product),
        st.builds(lambda v, c: PrefixOverride(v, c), inline_prefix(), children),
    )


expressions = st.recursive(leaves, _extend, max_leaves=8)


@given(expressions)
def test_print_then_parse_is_identity(e):
    assert parse(to_string(e)) == e


@given(expressions)
def test_printing_is_a_fixed_point(e):
    s = to_string(e)
    assert to_string(parse(s)) == s


# -- surface syntax


def test_division_by_log_becomes_negative_power():
    assert parse("omega/log^2") == Product((OmegaPow(1), LogPow(-2)))


def test_bare_names_default_to_unit_exponent():
    assert parse("omega") == OmegaPow(1)
    assert parse("log") == LogPow(1)


def test_parenthesised_rational_exponent():
    assert parse("omega^(1/3)") == OmegaPow(Fraction(1, 3))
    assert to_string(OmegaPow(Fraction(1, 3))) == "omega^(1/3)"


def test_decimal_exponent_prints_as_decimal():
    assert to_string(OmegaPow(Fraction(3, 2))) == "omega^1.5"


def test_whitespace_is_ignored():
    assert parse(" max( omega^2 , geom( 1/2 ) ) ") == parse("max(omega^2,geom(1/2))")


def test_ampliation_syntax():
    assert parse("D3(omega^2)") == Ampliation(3, OmegaPow(2))
    assert parse("Dinv2(omega)") == Dilution(2, OmegaPow(1))


# -- errors carry positions


@pytest.mark.parametrize(
    "text, pos",
    [
        ("omega +", 6),
        ("log(", 3),
        ("geom(1)", 0),
        ("min(omega)", 0),
        ("omega^2 * bogus", 10),
    ],
)
def test_parse_error_position(text, pos):
    with pytest.raises(ParseError) as info:
        parse(text)
    assert info.value.pos == pos


@pytest.mark.parametrize("text", ["omega/geom(1/2)", "D0(omega)", "scale(0,omega)", "pw(nosuchrule)", "", "omega)"])
def test_rejected_inputs(text):
    with pytest.raises(ParseError):
        parse(text)


# -- prefix files


def _write(tmp_path, name, body):
    p = tmp_path / name
    p.write_text(body)
    return p


def test_prefix_file_formats(tmp_path):
    p = _write(tmp_path, "x.txt", "# header\n1\n0.5   # half\n\n1/3\n0.25\n")
    vals, notes = load_prefix(str(p))
    assert vals == [1, Fraction(1, 2), Fraction(1, 3), Fraction(1, 4)]
    assert notes == []


def test_prefix_path_with_dots(tmp_path):
    p = _write(tmp_path, "x.v1.txt", "1\n1/2\n")
    e = parse(f"prefix({p})")
    assert e.values == (1, Fraction(1, 2)) and e.source == str(p)
    assert to_string(e) == f"prefix({p})"


def test_relative_prefix_path_uses_base_dir(tmp_path):
    _write(tmp_path, "rel.txt", "2\n1\n")
    assert parse("prefix(rel.txt)", base_dir=str(tmp_path)).values == (2, 1)


def test_prefix_file_unreadable_line(tmp_path):
    p = _write(tmp_path, "bad.txt", "1\nabc\n")
    with pytest.raises(PrefixFileError, match=":2:"):
        load_prefix(str(p))


def test_increasing_prefix_rejected(tmp_path):
    p = _write(tmp_path, "up.txt", "1\n2\n")
    with pytest.raises(PrefixFileError, match="increase"):
        load_prefix(str(p))


def test_negative_prefix_rejected():
    with pytest.raises(PrefixFileError, match="negative"):
        parse("prefix([1,-1])")


def test_negative_prefix_not_monotonized():
    with pytest.raises(PrefixFileError):
        parse("prefix([1,-1])", monotonize=True)


def test_monotonize_sorts_and_notes():
    e, notes = parse_with_notes("prefix([1,3,2])", monotonize=True)
    assert e.values == (3, 2, 1)
    assert len(notes) == 1 and "monotonized" in notes[0]


def test_monotone_input_has_no_note():
    _, notes = parse_with_notes("prefix([3,2,1])", monotonize=True)
    assert notes == []
