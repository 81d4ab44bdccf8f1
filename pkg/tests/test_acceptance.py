"""Acceptance criteria, one test each; the summary prints a PASS/FAIL line per criterion."""

import random
import time
from fractions import Fraction

import pytest

from chainnet.book import bilateral_net, net_positions
from chainnet.groups import strip_m
from chainnet.network import SINK, SOURCE, bt, build_tfn, cut_flow, excess_m_by_agent, ns
from chainnet.pipeline import run_pipeline
from chainnet.rational import format_rational
from chainnet.settlement import DeficiencyEvent, Obj, agent_obligations, process_deficiency, settle
from chainnet.verifier import RandomBookSpec, generate_book, oracle_min_residual_m, run_property_suite
from helpers import Q


def hops(group):
    return [(t.src.label, t.dst.label, t.t_units, t.m_amount) for t in group.trades]


@pytest.mark.criterion(1)
def test_worked_book_netting(worked_book, criterion):
    start = time.perf_counter()
    edges = bilateral_net(worked_book)
    gamma = {a: t for a, (t, _) in net_positions(edges).items()}
    elapsed = time.perf_counter() - start
    criterion["detail"] = f"{len(edges)} edges, excess {sum(t for t in gamma.values() if t > 0)}, {elapsed:.3f}s"
    hf = {e.pair: e for e in edges}["h", "f"]
    assert len(edges) == 10
    assert (hf.t_units, hf.m_amount) == (2, Q("8.2"))
    assert gamma == {"h": 7, "k": 11, "g": 2, "l": 6, "i": -5, "j": -15, "f": -6}
    assert sum(t for t in gamma.values() if t > 0) == 26
    assert elapsed < 1


LISTED_M = {
    "chain1": ["18.9"], "chain2": ["30.16", "47.6"], "chain3": ["11.9", "11.9"], "chain4": ["23.8", "26.12"],
    "chain5": ["26.25", "32.75"], "chain6": ["8.2", "10.24"], "chain7": ["13.06", "10.24", "6.0", "13.06"],
    "cycle1": ["13.06", "10.24", "6.0"],
}


@pytest.mark.criterion(2)
def test_fixture_replay(worked_book, listed_fixture, criterion):
    groups = {g.group_id: g for g in run_pipeline(worked_book, listed_fixture).groups}
    parents = {e.pair: e for e in bilateral_net(worked_book)}
    regenerated = {gid: [t.lam * parents[t.origin_pair].m_amount for t in g.trades] for gid, g in groups.items()}
    criterion["detail"] = f"{sum(len(v) for v in LISTED_M.values())} M amounts over {len(groups)} groups"
    assert regenerated == {gid: [Q(a) for a in amounts] for gid, amounts in LISTED_M.items()}


def cells(group):
    return {ob.node.label: (ob.net_t, ob.net_m) for ob in group.obligations}


@pytest.mark.criterion(3)
def test_group_obligation_tables(listed_groups, criterion):
    chain7, cycle1 = listed_groups["chain7"], listed_groups["cycle1"]
    criterion["detail"] = "chain 7 and cycle 1 net obligations"
    assert cells(chain7) == {"NS_g": (2, Q("-13.06")), "BT_f": (0, Q("2.82")), "BT_i": (0, Q("4.24")),
                             "BT_g": (0, Q("-7.06")), "NR_f": (-2, Q("13.06"))}
    assert cells(cycle1) == {"BT_i": (0, Q("4.24")), "BT_f": (0, Q("2.82")), "BT_g": (0, Q("-7.06"))}
    for g in (chain7, cycle1):
        assert sum(ob.net_t for ob in g.obligations) == 0
        assert sum(ob.net_m for ob in g.obligations) == 0


@pytest.mark.criterion(4)
def test_deficiency_replay(listed_groups, criterion):
    recovered, residuals = process_deficiency(listed_groups["chain7"],
                                              DeficiencyEvent("chain7", bt("i"), Obj.M, Q("4.24")))
    criterion["detail"] = (f"residuals {[r.group_id for r in residuals]}, recovered {recovered.src}->{recovered.dst} "
                           f"{recovered.t_units}T/{format_rational(recovered.m_amount)}M")
    assert [r.group_id for r in residuals] == ["chain7a", "chain7b"]
    assert hops(residuals[0]) == [("NS_g", "BT_f", 2, Q("13.06"))]
    assert hops(residuals[1]) == [("BT_i", "BT_g", 2, Q("6.0")), ("BT_g", "NR_f", 2, Q("13.06"))]
    assert (recovered.src, recovered.dst, recovered.t_units, recovered.m_amount) == ("f", "i", 2, Q("10.24"))


@pytest.mark.criterion(5)
def test_single_object_replay(listed_groups, criterion):
    single = strip_m(listed_groups["chain7"])
    owed = {ob.node.label: ob.net_t for ob in single.obligations if ob.net_t or ob.net_m}
    out = settle([single], [DeficiencyEvent("chain7", ns("g"), Obj.T, Q(2))])
    (rec,) = out.recovered
    (residue,) = out.executable
    criterion["detail"] = f"recovered {rec.src}->{rec.dst} {rec.t_units}T, residue {residue.group_id}"
    assert owed == {"NS_g": 2, "NR_f": -2}
    assert (rec.src, rec.dst, rec.t_units) == ("g", "f", 2)
    assert all(v == (0, 0) for v in agent_obligations(residue).values())


@pytest.mark.criterion(6)
def test_greedy_split_matches_oracle(criterion):
    start = time.perf_counter()
    checked = mismatches = 0
    for seed in range(200):
        book = generate_book(RandomBookSpec(6, 12, seed=seed))
        edges = bilateral_net(book)
        got = excess_m_by_agent(build_tfn(edges))
        for agent, (gamma, _) in net_positions(edges).items():
            if gamma == 0:
                continue
            incident = [(e.unit_price, e.t_units) for e in edges if (e.src if gamma > 0 else e.dst) == agent]
            assert len(incident) <= 6
            checked += 1
            mismatches += got[agent] != oracle_min_residual_m(incident, abs(gamma))
    elapsed = time.perf_counter() - start
    criterion["detail"] = f"{checked} agents over 200 books, {mismatches} mismatches, {elapsed:.2f}s"
    assert mismatches == 0
    assert elapsed < 30


@pytest.mark.criterion(7)
def test_property_suite(criterion):
    start = time.perf_counter()
    report = run_property_suite(RandomBookSpec(6, 12), Fraction(3, 10), range(500))
    elapsed = time.perf_counter() - start
    criterion["detail"] = (f"500 books, {report.recoveries} recoveries, {len(report.violations)} violations, "
                           f"{elapsed:.2f}s")
    assert report.violations == []
    assert elapsed < 120


@pytest.mark.criterion(8)
def test_cut_flow_is_constant(criterion):
    rng = random.Random(8)
    cuts = 0
    for seed in range(50):
        net = build_tfn(bilateral_net(generate_book(RandomBookSpec(6, 12, seed=1000 + seed))))
        inner = sorted(net.nodes - {SOURCE, SINK})
        values = set()
        for _ in range(50):
            values.add(cut_flow(net, {SOURCE} | {n for n in inner if rng.random() < 0.5}))
            cuts += 1
        assert values == {net.total_flow}
    criterion["detail"] = f"{cuts} cuts on 50 networks"


@pytest.mark.criterion(9)
def test_large_book_smoke(criterion):
    book = generate_book(RandomBookSpec(agent_count=1000, contract_count=10_000, seed=9))
    start = time.perf_counter()
    result = run_pipeline(book)
    elapsed = time.perf_counter() - start
    criterion["detail"] = (f"{len(result.edges)} edges, {len(result.groups)} groups, {elapsed:.2f}s")
    assert elapsed < 10
