"""Shared strategies and small builders for the test suite."""

from fractions import Fraction

from hypothesis import strategies as st

from chainnet.book import Contract

AGENTS = "abcdef"


def Q(x) -> Fraction:
    return Fraction(str(x))


prices = st.integers(min_value=0, max_value=2000).map(lambda c: Fraction(c, 100))
units = st.integers(min_value=1, max_value=12).map(Fraction)


@st.composite
def books(draw, max_agents=6, max_contracts=12, min_contracts=1, price=prices):
    n_agents = draw(st.integers(min_value=2, max_value=max_agents))
    agents = AGENTS[:n_agents]
    n = draw(st.integers(min_value=min_contracts, max_value=max_contracts))
    out = []
    for i in range(n):
        a = draw(st.sampled_from(agents))
        b = draw(st.sampled_from([x for x in agents if x != a]))
        out.append(Contract(i + 1, a, b, draw(price), draw(units)))
    return out
