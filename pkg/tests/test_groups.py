from fractions import Fraction

import pytest
from hypothesis import given, settings

from chainnet.book import bilateral_net
from chainnet.decomposition import decompose
from chainnet.groups import (AssignedTrade, GroupError, GroupKind, GroupState, Mode, NettingGroup,
                             check_maximal_netting, net_obligations, strip_m)
from chainnet.network import bt, build_tfn, nr, ns
from chainnet.pipeline import run_pipeline
from chainnet.reattachment import attach_m
from helpers import Q, books


def obligations(group):
    return {ob.node.label: (ob.net_t, ob.net_m) for ob in group.obligations}


def test_chain7_obligations(listed_groups):
    assert obligations(listed_groups["chain7"]) == {
        "NS_g": (2, Q("-13.06")),
        "BT_f": (0, Q("2.82")),
        "BT_i": (0, Q("4.24")),
        "BT_g": (0, Q("-7.06")),
        "NR_f": (-2, Q("13.06")),
    }


def test_cycle1_obligations(listed_groups):
    assert obligations(listed_groups["cycle1"]) == {
        "BT_g": (0, Q("-7.06")), "BT_f": (0, Q("2.82")), "BT_i": (0, Q("4.24")),
    }


def test_every_group_nets_to_zero(listed_groups):
    for g in listed_groups.values():
        assert sum(ob.net_t for ob in g.obligations) == 0
        assert sum(ob.net_m for ob in g.obligations) == 0


def test_render_matches_listing(listed_groups):
    text = listed_groups["chain7"].render()
    assert "NS_g —2T/13.06M→ BT_f —2T/10.24M→ BT_i —2T/6M→ BT_g —2T/13.06M→ NR_f" in text
    assert "13.06 - in | 2.82 - out | 4.24 - out | 7.06 - in | 13.06 - out" in text


def test_strip_m_leaves_only_endpoint_t(listed_groups):
    single = strip_m(listed_groups["chain7"])
    assert single.mode is Mode.SINGLE_OBJECT
    nonzero = {ob.node.label: ob.net_t for ob in single.obligations if ob.net_t or ob.net_m}
    assert nonzero == {"NS_g": 2, "NR_f": -2}
    assert "M - flow" not in single.render()
    # the original is left alone
    assert listed_groups["chain7"].trades[0].m_amount == Q("13.06")


def test_state_machine():
    g = NettingGroup("x", GroupKind.CHAIN, [_trade(ns("a"), nr("b"))])
    with pytest.raises(GroupError):
        g.transition(GroupState.EXECUTED)
    g.transition(GroupState.EXECUTABLE)
    g.transition(GroupState.EXECUTED)
    with pytest.raises(GroupError):
        g.transition(GroupState.PENDING)


def test_group_needs_trades():
    with pytest.raises(GroupError):
        NettingGroup("x", GroupKind.CHAIN, [])


def _trade(u, v, t=1, m="1"):
    return AssignedTrade(u, v, Fraction(t), Q(m), Q(m) / t, (u.agent, v.agent), Fraction(1))


def test_disconnected_trades_rejected():
    with pytest.raises(GroupError):
        net_obligations([_trade(ns("a"), nr("b")), _trade(ns("c"), nr("d"))])


def test_unknown_member():
    g = NettingGroup("x", GroupKind.CHAIN, [_trade(ns("a"), nr("b"))])
    with pytest.raises(GroupError):
        g.obligation_of(bt("a"))


def test_canonical_worked_book_is_maximal(worked_book):
    result = run_pipeline(worked_book)
    report = check_maximal_netting(result.groups, result.edges)
    assert report.ok, report.violations
    assert report.residual_t == {"f": -6, "g": 2, "h": 7, "i": -5, "j": -15, "k": 11, "l": 6}


def test_listed_decomposition_misses_the_minimum(worked_book, listed_fixture):
    # the listing routes g's excess over the 6.53 edge instead of the 5.95 one
    result = run_pipeline(worked_book, listed_fixture)
    report = check_maximal_netting(result.groups, result.edges)
    assert not [v for v in report.violations if "residual T" in v or "balanced" in v]
    assert report.residual_m["g"] == Q("13.06") and report.minimum_m["g"] == Q("11.9")


def test_to_dict_is_plain_json(listed_groups):
    import json
    doc = listed_groups["cycle1"].to_dict()
    assert json.loads(json.dumps(doc)) == doc
    assert doc["obligations"][0] == {"node": "BT_g", "net_t": "0", "net_m": "-7.06"}


@settings(max_examples=120, deadline=None)
@given(books())
def test_random_groups_are_maximal(book):
    edges = bilateral_net(book)
    groups = attach_m(decompose(build_tfn(edges)), edges)
    assert check_maximal_netting(groups, edges).ok
    for g in groups:
        if g.kind is GroupKind.CYCLE:
            assert all(ob.net_t == 0 for ob in g.obligations)
        assert sum(ob.net_m for ob in g.obligations) == 0
