import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainnet.book import NettedEdge, bilateral_net, net_positions
from chainnet.network import (SINK, SOURCE, NodeKind, SplitGraph, TfnEdge, TfnNode, TradeFlowNetwork, bt,
                              build_tfn, cut_flow, excess_m_by_agent, ns, nr, select_by_price, split_node,
                              validate_flow_conditions)
from chainnet.verifier import oracle_min_residual_m
from helpers import Q, books


def edge(src, dst, t, m):
    return NettedEdge(src, dst, Fraction(t), Q(m))


def test_node_labels_round_trip():
    for node in (bt("f"), ns("g"), nr("i"), SOURCE, SINK):
        assert TfnNode.parse(node.label) == node
    assert ns("g").label == "NS_g"
    with pytest.raises(ValueError):
        TfnNode.parse("XX_g")


def test_node_order_is_agent_then_kind():
    assert sorted([nr("a"), ns("a"), bt("b"), bt("a")]) == [bt("a"), ns("a"), nr("a"), bt("b")]


def test_select_by_price_splits_marginal_edge():
    picks = select_by_price([(Q(2), "x", Q(3)), (Q(1), "y", Q(2)), (Q(2), "w", Q(5))], Fraction(7, 2))
    assert picks == [("y", 2), ("w", Fraction(3, 2))]
    with pytest.raises(ValueError):
        select_by_price([(Q(1), "y", Q(2))], Q(3))


def test_split_node_excess_sender():
    g = SplitGraph([edge("d", "a", 1, "1"), edge("a", "b", 2, "4"), edge("a", "c", 2, "3")])
    split_node(g, "a")
    # imbalance 3: both units to c (1.5 each) before one to b (2 each)
    assert g.cap[ns("a"), bt("c")] == 2
    assert (bt("a"), bt("c")) not in g.cap
    assert g.cap[ns("a"), bt("b")] == 1
    assert g.cap[bt("a"), bt("b")] == 1
    assert g.imbalance("a") == 3
    # balanced remainder of the agent
    assert g.cap[bt("d"), bt("a")] == 1


def test_split_node_balanced_agent_untouched():
    g = SplitGraph([edge("a", "b", 2, "2"), edge("b", "c", 2, "5")])
    split_node(g, "b")
    assert set(g.cap) == {(bt("a"), bt("b")), (bt("b"), bt("c"))}
    with pytest.raises(KeyError):
        split_node(g, "zz")


def test_worked_book_tfn(worked_book):
    net = build_tfn(bilateral_net(worked_book))
    assert net.excess_nodes(NodeKind.NS) == {"g": 2, "h": 7, "k": 11, "l": 6}
    assert net.excess_nodes(NodeKind.NR) == {"f": 6, "i": 5, "j": 15}
    assert net.total_flow == 26
    assert validate_flow_conditions(net).ok
    # g's 2 excess units leave on its cheaper edge (5.95 to j, not 6.53 to f)
    assert net.edge_map()[ns("g"), nr("j")].capacity == 2
    assert all(e.flow is None and e.value == e.capacity for e in net.edges)


def test_tfn_json_is_stable(worked_book):
    edges = bilateral_net(worked_book)
    assert build_tfn(edges).to_json() == build_tfn(list(reversed(edges))).to_json()


def test_build_tfn_rejects_bad_order(worked_book):
    with pytest.raises(ValueError):
        build_tfn(bilateral_net(worked_book), split_order=["f", "g"])


def test_cut_flow_worked_book(worked_book):
    net = build_tfn(bilateral_net(worked_book))
    assert cut_flow(net, {SOURCE}) == 26
    assert cut_flow(net, net.nodes - {SINK}) == 26
    with pytest.raises(ValueError):
        cut_flow(net, {SINK, SOURCE})
    with pytest.raises(ValueError):
        cut_flow(net, {SOURCE, bt("zz")})


def test_validator_flags_each_condition():
    a, b = bt("a"), bt("b")
    bad = TradeFlowNetwork(frozenset({SOURCE, SINK, a, b, ns("a")}), (
        TfnEdge(a, b, Q(2), Q(1), ("a", "b"), flow=Q(3)),
        TfnEdge(b, a, Q(1), Q(1), ("b", "a")),
        TfnEdge(SOURCE, a, Q(1)),
        TfnEdge(nr("b"), b, Q(1), Q(1), ("b", "b")),
    ))
    kinds = {v.condition for v in validate_flow_conditions(bad).violations}
    assert kinds == {"capacity", "skew_symmetry", "conservation", "structure"}


def test_excess_m_by_agent_worked_book(worked_book):
    m = excess_m_by_agent(build_tfn(bilateral_net(worked_book)))
    assert m["g"] == Q("11.9")
    assert m["l"] == Q("35.7")


def _incident(edges, agent, gamma):
    if gamma > 0:
        return [(e.unit_price, e.t_units) for e in edges if e.src == agent]
    return [(e.unit_price, e.t_units) for e in edges if e.dst == agent]


@settings(max_examples=150, deadline=None)
@given(books())
def test_greedy_split_is_minimal(book):
    edges = bilateral_net(book)
    net = build_tfn(edges)
    assert validate_flow_conditions(net).ok
    got = excess_m_by_agent(net)
    for agent, (gamma, _) in net_positions(edges).items():
        incident = _incident(edges, agent, gamma)
        if gamma == 0 or len(incident) > 6:
            continue
        assert got[agent] == oracle_min_residual_m(incident, abs(gamma))


@settings(max_examples=100, deadline=None)
@given(books(), st.randoms(use_true_random=False))
def test_split_order_does_not_matter(book, rnd):
    edges = bilateral_net(book)
    agents = sorted({a for e in edges for a in e.pair})
    rnd.shuffle(agents)
    base, other = build_tfn(edges), build_tfn(edges, split_order=agents)
    assert excess_m_by_agent(base) == excess_m_by_agent(other)
    assert base.excess_nodes(NodeKind.NS) == other.excess_nodes(NodeKind.NS)
    assert validate_flow_conditions(other).ok


@settings(max_examples=100, deadline=None)
@given(books(), st.randoms(use_true_random=False))
def test_every_cut_carries_the_same_flow(book, rnd):
    net = build_tfn(bilateral_net(book))
    inner = sorted(net.nodes - {SOURCE, SINK})
    for _ in range(10):
        side = {SOURCE} | {n for n in inner if rnd.random() < 0.5}
        assert cut_flow(net, side) == net.total_flow


def test_excess_totals_match_imbalance():
    rng = random.Random(3)
    book_edges = [edge("a", "b", rng.randint(1, 5), "2.5"), edge("b", "c", 1, "1"), edge("c", "a", 4, "0.3")]
    net = build_tfn(book_edges)
    gamma = {a: t for a, (t, _) in net_positions(book_edges).items()}
    assert net.excess_nodes(NodeKind.NS) == {a: g for a, g in gamma.items() if g > 0}
    assert net.excess_nodes(NodeKind.NR) == {a: -g for a, g in gamma.items() if g < 0}
