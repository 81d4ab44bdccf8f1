from fractions import Fraction

import pytest
from hypothesis import given, settings

from chainnet.book import Contract, NettedEdge, bilateral_net
from chainnet.decomposition import (Chain, Cycle, Decomposition, DecompositionError, check_reconstruction,
                                    decompose, find_cycle, find_st_path, residual_of)
from chainnet.network import SINK, SOURCE, NodeKind, bt, build_tfn, nr, ns
from helpers import books


def test_find_cycle_three_nodes():
    residual = {(bt("g"), bt("f")): Fraction(2), (bt("f"), bt("i")): Fraction(2), (bt("i"), bt("g")): Fraction(2)}
    loop = find_cycle(residual)
    assert loop == [bt("f"), bt("i"), bt("g"), bt("f")]
    assert find_st_path(residual) is None


def test_find_cycle_none_on_dag():
    assert find_cycle({(bt("a"), bt("b")): Fraction(1), (bt("b"), bt("c")): Fraction(1)}) is None
    assert find_cycle({}) is None


def test_find_st_path_prefers_smallest_successor():
    residual = {
        (SOURCE, ns("a")): Fraction(2), (ns("a"), bt("c")): Fraction(1), (ns("a"), bt("b")): Fraction(1),
        (bt("b"), nr("d")): Fraction(1), (bt("c"), nr("d")): Fraction(1), (nr("d"), SINK): Fraction(2),
    }
    assert find_st_path(residual) == [SOURCE, ns("a"), bt("b"), nr("d"), SINK]


def test_worked_book_canonical_decomposition(worked_book):
    net = build_tfn(bilateral_net(worked_book))
    d = decompose(net)
    assert len(d.chains) == 10 and d.cycles == []
    assert check_reconstruction(d, net) == []
    assert sum(c.t_volume for c in d.chains) == 26
    first = d.chains[0]
    assert first.labels == ["NS_g", "NR_j"] and first.t_volume == 2


def test_pure_cycle_book():
    edges = [NettedEdge("a", "b", Fraction(2), Fraction(4)), NettedEdge("b", "c", Fraction(2), Fraction(6)),
             NettedEdge("c", "a", Fraction(2), Fraction(1))]
    net = build_tfn(edges)
    d = decompose(net)
    assert d.chains == []
    assert [c.labels for c in d.cycles] == [["BT_a", "BT_b", "BT_c", "BT_a"]]
    assert check_reconstruction(d, net) == []


def test_single_edge_book_is_one_chain():
    net = build_tfn([NettedEdge("a", "b", Fraction(5), Fraction(10))])
    d = decompose(net)
    assert [(c.labels, c.t_volume) for c in d.chains] == [(["NS_a", "NR_b"], 5)]


def test_empty_network():
    d = decompose(build_tfn([]))
    assert d.groups() == []


def test_chain_and_cycle_validation():
    with pytest.raises(DecompositionError):
        Chain((bt("a"), nr("b")), Fraction(1))
    with pytest.raises(DecompositionError):
        Chain((ns("a"), ns("b"), nr("c")), Fraction(1))
    with pytest.raises(DecompositionError):
        Chain((ns("a"), nr("b")), Fraction(0))
    with pytest.raises(DecompositionError):
        Cycle((bt("a"), bt("b")), Fraction(1))
    with pytest.raises(DecompositionError):
        Cycle((bt("a"), ns("b"), bt("a")), Fraction(1))


def test_reconstruction_reports_mismatch(worked_book):
    net = build_tfn(bilateral_net(worked_book))
    d = decompose(net)
    d.chains.pop()
    assert check_reconstruction(d, net)


def test_json_round_trip(worked_book):
    d = decompose(build_tfn(bilateral_net(worked_book)))
    assert Decomposition.from_json(d.to_json()) == d


def test_chain_and_cycle_in_one_book():
    book = [Contract(1, "a", "b", Fraction(1), Fraction(3)), Contract(2, "b", "c", Fraction(1), Fraction(3)),
            Contract(3, "c", "a", Fraction(1), Fraction(2)), Contract(4, "c", "d", Fraction(1), Fraction(1))]
    net = build_tfn(bilateral_net(book))
    d = decompose(net)
    assert [(c.labels, c.t_volume) for c in d.chains] == [(["NS_a", "BT_b", "BT_c", "NR_d"], 1)]
    assert [(c.labels, c.t_volume) for c in d.cycles] == [(["BT_a", "BT_b", "BT_c", "BT_a"], 2)]
    assert check_reconstruction(d, net) == []


@settings(max_examples=150, deadline=None)
@given(books())
def test_decomposition_reconstructs_every_book(book):
    net = build_tfn(bilateral_net(book))
    d = decompose(net)
    assert check_reconstruction(d, net) == []
    for c in d.chains:
        assert c.nodes[0].kind is NodeKind.NS and c.nodes[-1].kind is NodeKind.NR
    for c in d.cycles:
        assert all(n.kind is NodeKind.BT for n in c.nodes)
    assert sum(c.t_volume for c in d.chains) == net.total_flow
    # each extraction empties at least one edge
    assert len(d.groups()) <= len(residual_of(net))
    assert decompose(net) == d
