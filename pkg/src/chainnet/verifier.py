"""Brute-force oracles and the randomized property suite.

The oracles here recompute their answers from raw inputs along separate
summation paths; they must not call into the code they check.
"""

from __future__ import annotations

import itertools
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

from .book import AgentId, Contract, bilateral_net, money_only_transfers, net_positions
from .rational import ZERO, format_rational


def oracle_positions(contracts: Iterable[Contract]) -> dict[AgentId, tuple[Fraction, Fraction]]:
    """Per-agent (net T sent, net M received) summed straight off the contract rows."""
    sent: dict[AgentId, Fraction] = defaultdict(Fraction)
    profit: dict[AgentId, Fraction] = defaultdict(Fraction)
    for c in contracts:
        paid = c.unit_price * c.t_units
        sent[c.t_sender] += c.t_units
        sent[c.m_sender] -= c.t_units
        profit[c.t_sender] += paid
        profit[c.m_sender] -= paid
    return {a: (sent[a], profit[a]) for a in sorted(sent)}


def oracle_min_residual_m(incident: Iterable[tuple[Fraction, Fraction]], excess: Fraction) -> Fraction:
    """Minimum of sum(p*x) over sum(x) = excess, 0 <= x <= cap, by vertex enumeration.

    ``incident`` holds ``(unit_price, capacity)`` pairs. Every vertex of the
    feasible polytope is a fill of the edges in some order, so trying every
    ordering finds the optimum exactly.
    """
    incident = list(incident)
    if excess < 0:
        raise ValueError("excess must be nonnegative")
    if excess > sum((cap for _, cap in incident), ZERO):
        raise ValueError("infeasible: excess exceeds the incident capacity")
    if excess == 0:
        return ZERO
    best: Optional[Fraction] = None
    for order in itertools.permutations(range(len(incident))):
        remaining, cost = excess, ZERO
        for i in order:
            price, cap = incident[i]
            take = cap if cap < remaining else remaining
            cost += price * take
            remaining -= take
            if remaining == 0:
                break
        if best is None or cost < best:
            best = cost
    return best


@dataclass(frozen=True)
class RandomBookSpec:
    agent_count: int = 6
    contract_count: int = 12
    price_range: tuple = (Fraction(1), Fraction(10))
    unit_range: tuple = (Fraction(1), Fraction(10))
    seed: int = 0


def generate_book(spec: RandomBookSpec) -> list[Contract]:
    """Random book, a pure function of ``spec``; prices in cents, whole units."""
    rng = random.Random(spec.seed)
    agents = [f"a{i}" for i in range(spec.agent_count)]
    lo_p, hi_p = (int(x * 100) for x in spec.price_range)
    lo_u, hi_u = (int(x) for x in spec.unit_range)
    contracts = []
    for number in range(1, spec.contract_count + 1):
        seller, buyer = rng.sample(agents, 2)
        price = Fraction(rng.randint(lo_p, hi_p), 100)
        units = Fraction(rng.randint(lo_u, hi_u))
        contracts.append(Contract(number, seller, buyer, price, units))
    return contracts


@dataclass
class SuiteReport:
    seeds: list = field(default_factory=list)
    violations: list = field(default_factory=list)  # (seed, message)
    recoveries: int = 0
    groups: int = 0
    executed: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "seeds": len(self.seeds),
            "groups": self.groups,
            "executed": self.executed,
            "recoveries": self.recoveries,
            "violations": [{"seed": s, "message": m} for s, m in self.violations],
        }


def _random_defaulter(rng: random.Random, density: float):
    """Each outstanding commitment defaults with probability ``density``.

    The shortfall is the whole gap with probability ``max(density, 1/2)``,
    otherwise a random fraction of it, so density 1 is total default.
    """
    from .settlement import DeficiencyEvent, Obj

    def pick(group, outstanding):
        events = []
        for agent, obj, gap in outstanding:
            if rng.random() >= density:
                continue
            nodes = [ob.node for ob in group.obligations
                     if ob.node.agent == agent and (ob.net_t if obj is Obj.T else ob.net_m) > 0]
            if not nodes:
                continue
            amount = gap if rng.random() < max(density, 0.5) else gap * Fraction(rng.randint(1, 9), 10)
            events.append(DeficiencyEvent(group.group_id, rng.choice(nodes), obj, amount))
        return events

    return pick


def check_book(contracts: list[Contract], density: float = 0.0, rng: Optional[random.Random] = None,
               max_oracle_edges: int = 6) -> tuple[list[str], dict]:
    """Run the whole pipeline on one book and return every broken invariant."""
    from .decomposition import Chain, decompose
    from .groups import GroupKind, check_maximal_netting
    from .network import SINK, SOURCE, NodeKind, build_tfn, cut_flow, excess_m_by_agent, validate_flow_conditions
    from .reattachment import attach_m, lambda_table
    from .settlement import execute, settle

    rng = rng or random.Random(0)
    problems: list[str] = []
    stats = {"groups": 0, "recoveries": 0, "executed": 0}
    truth = oracle_positions(contracts)
    edges = bilateral_net(contracts)
    money = money_only_transfers(contracts)
    parents = {e.pair: e for e in edges}

    if net_positions(edges, money) != truth:
        problems.append("netted positions disagree with the raw-contract oracle")

    network = build_tfn(edges)
    flow_report = validate_flow_conditions(network)
    problems += [f"flow condition {v.condition} at {v.subject}: {v.detail}" for v in flow_report.violations]

    pair_cap: dict = defaultdict(Fraction)
    for e in network.trade_edges():
        pair_cap[e.src.agent, e.dst.agent] += e.capacity
        if e.unit_price != parents[e.src.agent, e.dst.agent].unit_price:
            problems.append(f"TFN edge {e.src.label}->{e.dst.label} lost its parent price")
    if dict(pair_cap) != {p: e.t_units for p, e in parents.items()}:
        problems.append("child-edge capacities do not add back to the netted edges")

    agents = sorted({a for e in edges for a in e.pair})
    shuffled = agents[:]
    rng.shuffle(shuffled)
    other = build_tfn(edges, split_order=shuffled)
    for kind in (NodeKind.NS, NodeKind.NR):
        if other.excess_nodes(kind) != network.excess_nodes(kind):
            problems.append(f"{kind.value} capacities depend on split order")

    total_excess = sum((t for t, _ in truth.values() if t > 0), ZERO)
    non_terminal = sorted(n for n in network.nodes if n not in (SOURCE, SINK))
    for _ in range(5):
        side = {SOURCE} | {n for n in non_terminal if rng.random() < 0.5}
        if cut_flow(network, side) != total_excess:
            problems.append("cut flow differs from total excess")
            break

    residual_m = excess_m_by_agent(network)
    for agent, (gamma, _) in truth.items():
        if gamma == 0:
            continue
        if gamma > 0:
            incident = [(e.unit_price, e.t_units) for e in edges if e.src == agent]
        else:
            incident = [(e.unit_price, e.t_units) for e in edges if e.dst == agent]
        if len(incident) <= max_oracle_edges and residual_m.get(agent, ZERO) != oracle_min_residual_m(incident, abs(gamma)):
            problems.append(f"agent {agent}: excess-node M is not the brute-force minimum")

    decomposition = decompose(network)
    usage: Counter = Counter()
    for g in decomposition.groups():
        for u, v in zip(g.nodes, g.nodes[1:]):
            usage[u, v] += g.t_volume
        if isinstance(g, Chain):
            if g.nodes[0].kind is not NodeKind.NS or g.nodes[-1].kind is not NodeKind.NR:
                problems.append(f"chain {g.labels} does not run NS -> NR")
        elif any(n.kind is not NodeKind.BT for n in g.nodes):
            problems.append(f"cycle {g.labels} contains a non-BT node")
    if dict(usage) != {e.key: e.capacity for e in network.trade_edges()}:
        problems.append("decomposition does not reconstruct every TFN edge")
    if sum((c.t_volume for c in decomposition.chains), ZERO) != total_excess:
        problems.append("chain volume differs from total excess")
    if len(decomposition.groups()) > len(network.edges):
        problems.append("more groups than TFN edges")

    groups = attach_m(decomposition, edges)
    stats["groups"] = len(groups)
    for pair, entries in lambda_table(groups).items():
        if sum((lam for _, lam in entries), ZERO) != 1:
            problems.append(f"lambda fractions for {pair} do not sum to 1")
    pair_m: dict = defaultdict(Fraction)
    for g in groups:
        for t in g.trades:
            pair_m[t.origin_pair] += t.m_amount
            if t.m_amount != t.t_units * parents[t.origin_pair].unit_price:
                problems.append(f"{g.group_id}: assigned trade mispriced")
    if dict(pair_m) != {p: e.m_amount for p, e in parents.items()}:
        problems.append("assigned M does not add back to the netted M")

    def profit_of(live_groups, recovered):
        profit: dict = defaultdict(Fraction)
        for g in live_groups:
            for t in g.trades:
                profit[t.src.agent] += t.m_amount
                profit[t.dst.agent] -= t.m_amount
        for r in recovered:
            profit[r.src] += r.m_amount
            profit[r.dst] -= r.m_amount
        for tr in money:
            profit[tr.payee] += tr.amount
            profit[tr.payer] -= tr.amount
        return profit

    def profits_match(profit) -> bool:
        return all(profit.get(a, ZERO) == m for a, (_, m) in truth.items()) and \
            all(a in truth or v == 0 for a, v in profit.items())

    if not profits_match(profit_of(groups, [])):
        problems.append("per-agent profit over groups differs from initial profit")

    netting = check_maximal_netting(groups, edges, max_oracle_edges=max_oracle_edges)
    problems += [f"maximal netting: {v}" for v in netting.violations]

    # settlement under random deficiencies
    original = {g.group_id: g for g in groups}
    snapshot = {g.group_id: (g.trades, {ob.node: ob for ob in g.obligations}) for g in groups}
    outcome = settle(groups, defaulter=_random_defaulter(rng, density))
    stats["recoveries"] = len(outcome.recovered)
    if outcome.removals > sum(len(g.trades) for g in original.values()):
        problems.append("more edge removals than assigned trades")

    live = outcome.executable
    every = {g.group_id: g for g in [*live, *outcome.decomposed]}
    for g in every.values():
        snapshot.setdefault(g.group_id, (g.trades, {ob.node: ob for ob in g.obligations}))
    children: dict = defaultdict(list)
    for g in every.values():
        if g.parent_id is not None:
            children[g.parent_id].append(g)
    recovered_by_source = {r.source_group: r for r in outcome.recovered}
    for g in outcome.decomposed:
        trades, before = snapshot[g.group_id]
        removed = recovered_by_source.get(g.group_id)
        if removed is None:
            problems.append(f"{g.group_id} decomposed without a recovered contract")
            continue
        kids = children[g.group_id]
        if g.kind is GroupKind.CYCLE and len(kids) != (1 if len(trades) > 1 else 0):
            problems.append(f"cycle {g.group_id} left {len(kids)} residual chains")
        if g.kind is not GroupKind.CYCLE and len(kids) > 2:
            problems.append(f"chain {g.group_id} left {len(kids)} residual chains")
        edge = removed.removed
        if edge not in trades or (removed.src, removed.dst, removed.t_units, removed.m_amount) != \
                (edge.sender, edge.receiver, edge.t_units, edge.m_amount) or \
                (removed.src, removed.dst) != edge.origin_pair:
            problems.append(f"{g.group_id}: recovered contract does not match the removed assignment")
            continue
        survivors = Counter(trades) - Counter([edge])
        if Counter(t for k in kids for t in k.trades) != survivors:
            problems.append(f"{g.group_id}: residual chains do not keep the surviving trades")
        after: dict = defaultdict(lambda: (ZERO, ZERO))
        neighbours_after: dict = defaultdict(set)
        for k in kids:
            for ob in k.obligations:
                t0, m0 = after[ob.node]
                after[ob.node] = (t0 + ob.net_t, m0 + ob.net_m)
            for t in k.trades:
                neighbours_after[t.src].add(t.dst.agent)
                neighbours_after[t.dst].add(t.src.agent)
        neighbours_before: dict = defaultdict(set)
        for t in trades:
            neighbours_before[t.src].add(t.dst.agent)
            neighbours_before[t.dst].add(t.src.agent)
        for node, ob in before.items():
            if node in (edge.src, edge.dst):
                continue
            if after[node] != (ob.net_t, ob.net_m):
                problems.append(f"{g.group_id}: non-incident node {node.label} changed obligations")
            if neighbours_after[node] != neighbours_before[node]:
                problems.append(f"{g.group_id}: non-incident node {node.label} changed counterparties")

    if not profits_match(profit_of(live, outcome.recovered)):
        problems.append("profit not preserved after deficiencies")

    initial_cp: dict = defaultdict(set)
    for c in contracts:
        initial_cp[c.t_sender].add(c.m_sender)
        initial_cp[c.m_sender].add(c.t_sender)
    for g in live:
        for t in g.trades:
            if t.dst.agent not in initial_cp[t.src.agent]:
                problems.append(f"{g.group_id}: {t.src.agent}-{t.dst.agent} are not initial counterparties")
    for r in outcome.recovered:
        if r.dst not in initial_cp[r.src]:
            problems.append(f"{r.contract_id}: recovered between non-counterparties")

    ledger = outcome.ledger
    finished = {g.group_id for g in outcome.decomposed}
    for g in live:
        transfers = execute(g, ledger)
        finished.add(g.group_id)
        stats["executed"] += 1
        for obj in ("T", "M"):
            delivered = sum((tr.amount for tr in transfers if tr.obj.value == obj and tr.direction == "deliver"), ZERO)
            received = sum((tr.amount for tr in transfers if tr.obj.value == obj and tr.direction == "receive"), ZERO)
            if delivered != received:
                problems.append(f"{g.group_id}: escrow {obj} in {format_rational(delivered)} != out {format_rational(received)}")
    for gid, _, _, delta in ledger.history:
        if delta < 0 and gid not in finished:
            problems.append(f"escrow for {gid} decreased before execution or decomposition")
            break
    return problems, stats


def run_property_suite(spec: RandomBookSpec, deficiency_density: float = 0.0,
                       seeds: Optional[Iterable[int]] = None) -> SuiteReport:
    """Generate books and check every module invariant on each.

    With ``seeds`` omitted only ``spec.seed`` is run. Failures are report
    entries tagged with their seed, never exceptions.
    """
    report = SuiteReport()
    for seed in ([spec.seed] if seeds is None else seeds):
        book_spec = RandomBookSpec(spec.agent_count, spec.contract_count, spec.price_range, spec.unit_range, seed)
        contracts = generate_book(book_spec)
        rng = random.Random(f"scenario-{seed}")
        try:
            problems, stats = check_book(contracts, float(deficiency_density), rng)
        except Exception as exc:  # a crash is a violation for this seed, not for the suite
            problems, stats = [f"crash: {type(exc).__name__}: {exc}"], {}
        report.seeds.append(seed)
        report.violations += [(seed, p) for p in problems]
        report.groups += stats.get("groups", 0)
        report.recoveries += stats.get("recoveries", 0)
        report.executed += stats.get("executed", 0)
    return report
