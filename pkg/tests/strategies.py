"""Shared hypothesis strategies."""
from fractions import Fraction

from hypothesis import strategies as st

rationals = st.fractions(min_value=Fraction(1, 64), max_value=Fraction(50), max_denominator=64)


@st.composite
def nonincreasing_prefix(draw, min_size=1, max_size=60, zeros=True):
    vals = sorted(draw(st.lists(rationals, min_size=min_size, max_size=max_size)), reverse=True)
    if zeros and draw(st.booleans()):
        vals += [Fraction(0)] * draw(st.integers(1, 5))
    return vals


def fsum(vals):
    return sum(vals, Fraction(0))
