"""Trade flow network: node splitting, source/sink attachment and flow checks."""

from __future__ import annotations

import enum
import json
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

from .book import AgentId, NettedEdge
from .rational import ZERO, format_rational


class NodeKind(enum.Enum):
    BT = "BT"
    NS = "NS"
    NR = "NR"
    SOURCE = "Source"
    SINK = "Sink"


_KIND_ORDER = {NodeKind.BT: 0, NodeKind.NS: 1, NodeKind.NR: 2, NodeKind.SOURCE: 3, NodeKind.SINK: 4}


@dataclass(frozen=True)
class TfnNode:
    agent: Optional[AgentId]
    kind: NodeKind

    def sort_key(self) -> tuple:
        return (self.agent or "", _KIND_ORDER[self.kind])

    def __lt__(self, other: "TfnNode") -> bool:
        return self.sort_key() < other.sort_key()

    @property
    def label(self) -> str:
        if self.agent is None:
            return self.kind.value
        return f"{self.kind.value}_{self.agent}"

    @classmethod
    def parse(cls, label: str) -> "TfnNode":
        if label in ("Source", "Sink"):
            return cls(None, NodeKind(label))
        prefix, sep, agent = label.partition("_")
        if not sep or not agent or prefix not in ("BT", "NS", "NR"):
            raise ValueError(f"bad node label {label!r}; expected BT_x, NS_x or NR_x")
        return cls(agent, NodeKind(prefix))

    def __str__(self) -> str:
        return self.label


SOURCE = TfnNode(None, NodeKind.SOURCE)
SINK = TfnNode(None, NodeKind.SINK)


def bt(agent: AgentId) -> TfnNode:
    return TfnNode(agent, NodeKind.BT)


def ns(agent: AgentId) -> TfnNode:
    return TfnNode(agent, NodeKind.NS)


def nr(agent: AgentId) -> TfnNode:
    return TfnNode(agent, NodeKind.NR)


@dataclass(frozen=True)
class TfnEdge:
    """Edge of the flow network.

    ``flow`` defaults to ``capacity``: the network's flow is fixed by
    construction. Source and sink edges carry no unit price.
    """

    src: TfnNode
    dst: TfnNode
    capacity: Fraction
    unit_price: Optional[Fraction] = None
    origin_pair: Optional[tuple[AgentId, AgentId]] = None
    flow: Optional[Fraction] = None

    @property
    def value(self) -> Fraction:
        return self.capacity if self.flow is None else self.flow

    @property
    def key(self) -> tuple[TfnNode, TfnNode]:
        return (self.src, self.dst)

    @property
    def is_artificial(self) -> bool:
        return self.src == SOURCE or self.dst == SINK


@dataclass(frozen=True)
class TradeFlowNetwork:
    nodes: frozenset
    edges: tuple  # TfnEdge, sorted by (src, dst)

    def edge_map(self) -> dict[tuple[TfnNode, TfnNode], TfnEdge]:
        return {e.key: e for e in self.edges}

    def trade_edges(self) -> list[TfnEdge]:
        return [e for e in self.edges if not e.is_artificial]

    def excess_nodes(self, kind: NodeKind) -> dict[AgentId, Fraction]:
        """Excess T carried by each NS (outflow) or NR (inflow) node."""
        out: dict[AgentId, Fraction] = {}
        for e in self.trade_edges():
            if kind is NodeKind.NS and e.src.kind is NodeKind.NS:
                out[e.src.agent] = out.get(e.src.agent, ZERO) + e.capacity
            if kind is NodeKind.NR and e.dst.kind is NodeKind.NR:
                out[e.dst.agent] = out.get(e.dst.agent, ZERO) + e.capacity
        return dict(sorted(out.items()))

    @property
    def total_flow(self) -> Fraction:
        return sum((e.value for e in self.edges if e.src == SOURCE), ZERO)

    def to_json(self) -> str:
        doc = {
            "nodes": [{"agent": n.agent, "kind": n.kind.value} for n in sorted(self.nodes)],
            "edges": [
                {
                    "from": e.src.label,
                    "to": e.dst.label,
                    "capacity": format_rational(e.capacity),
                    "unit_price": None if e.unit_price is None else format_rational(e.unit_price),
                    "origin_pair": None if e.origin_pair is None else list(e.origin_pair),
                }
                for e in self.edges
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)


class SplitGraph:
    """Mutable netted T graph that is split agent by agent.

    Before an agent is split its single node is held as ``BT_agent``; an
    agent whose imbalance is zero simply keeps it.
    """

    def __init__(self, edges: Iterable[NettedEdge]):
        self.cap: dict[tuple[TfnNode, TfnNode], Fraction] = {}
        self.price: dict[tuple[TfnNode, TfnNode], Fraction] = {}
        self.origin: dict[tuple[TfnNode, TfnNode], tuple[AgentId, AgentId]] = {}
        self.out_adj: dict[TfnNode, set[TfnNode]] = defaultdict(set)
        self.in_adj: dict[TfnNode, set[TfnNode]] = defaultdict(set)
        self.agents: set[AgentId] = set()
        self.split_done: set[AgentId] = set()
        for e in edges:
            self._add(bt(e.src), bt(e.dst), e.t_units, e.unit_price, e.pair)
            self.agents.update(e.pair)

    def _add(self, u: TfnNode, v: TfnNode, amount: Fraction, price: Fraction,
             origin: tuple[AgentId, AgentId]) -> None:
        key = (u, v)
        self.cap[key] = self.cap.get(key, ZERO) + amount
        self.price[key] = price
        self.origin[key] = origin
        self.out_adj[u].add(v)
        self.in_adj[v].add(u)

    def _take(self, u: TfnNode, v: TfnNode, amount: Fraction) -> None:
        key = (u, v)
        left = self.cap[key] - amount
        if left == 0:
            del self.cap[key], self.price[key], self.origin[key]
            self.out_adj[u].discard(v)
            self.in_adj[v].discard(u)
        else:
            self.cap[key] = left

    def imbalance(self, agent: AgentId) -> Fraction:
        """Net T outflow of the agent over all of its current child nodes."""
        total = ZERO
        for node in (bt(agent), ns(agent), nr(agent)):
            total += sum((self.cap[node, v] for v in self.out_adj.get(node, ())), ZERO)
            total -= sum((self.cap[u, node] for u in self.in_adj.get(node, ())), ZERO)
        return total


def select_by_price(candidates: list[tuple[Fraction, tuple, Fraction]], amount: Fraction):
    """Greedy cheapest-first selection of ``amount`` units.

    ``candidates`` are ``(unit_price, tie_key, capacity)``; returns
    ``[(tie_key, units)]`` with the marginal edge split fractionally.
    """
    picks = []
    remaining = amount
    for price, key, capacity in sorted(candidates, key=lambda c: (c[0], c[1])):
        if remaining == 0:
            break
        take = min(capacity, remaining)
        picks.append((key, take))
        remaining -= take
    if remaining != 0:
        raise ValueError("selection exceeds available capacity")
    return picks


def split_node(graph: SplitGraph, agent: AgentId) -> SplitGraph:
    """Split one agent into a balanced node and an excess node, in place.

    The excess is peeled off the agent's outgoing (imbalance > 0) or
    incoming (imbalance < 0) edges in ascending unit price, ties broken by
    counterparty id and then node kind.
    """
    if agent not in graph.agents:
        raise KeyError(f"agent {agent!r} not in graph")
    if agent in graph.split_done:
        return graph
    gamma = graph.imbalance(agent)
    graph.split_done.add(agent)
    if gamma == 0:
        return graph
    here = bt(agent)
    if gamma > 0:
        excess = ns(agent)
        cands = [(graph.price[here, v], v.sort_key(), graph.cap[here, v]) for v in graph.out_adj[here]]
        by_key = {v.sort_key(): v for v in graph.out_adj[here]}
        for key, units in select_by_price(cands, gamma):
            v = by_key[key]
            price, origin = graph.price[here, v], graph.origin[here, v]
            graph._take(here, v, units)
            graph._add(excess, v, units, price, origin)
    else:
        excess = nr(agent)
        cands = [(graph.price[u, here], u.sort_key(), graph.cap[u, here]) for u in graph.in_adj[here]]
        by_key = {u.sort_key(): u for u in graph.in_adj[here]}
        for key, units in select_by_price(cands, -gamma):
            u = by_key[key]
            price, origin = graph.price[u, here], graph.origin[u, here]
            graph._take(u, here, units)
            graph._add(u, excess, units, price, origin)
    return graph


def build_tfn(edges: Iterable[NettedEdge], split_order: Optional[Iterable[AgentId]] = None) -> TradeFlowNetwork:
    """Split every agent and attach the artificial source and sink.

    ``split_order`` defaults to lexicographic agent order.
    """
    graph = SplitGraph(edges)
    order = sorted(graph.agents) if split_order is None else list(split_order)
    if set(order) != graph.agents or len(order) != len(graph.agents):
        raise ValueError("split_order must be a permutation of the book's agents")
    for agent in order:
        split_node(graph, agent)

    tfn_edges = [
        TfnEdge(u, v, cap, graph.price[u, v], graph.origin[u, v])
        for (u, v), cap in graph.cap.items()
    ]
    ns_out: dict[TfnNode, Fraction] = defaultdict(Fraction)
    nr_in: dict[TfnNode, Fraction] = defaultdict(Fraction)
    for e in tfn_edges:
        if e.src.kind is NodeKind.NS:
            ns_out[e.src] += e.capacity
        if e.dst.kind is NodeKind.NR:
            nr_in[e.dst] += e.capacity
    tfn_edges += [TfnEdge(SOURCE, n, c) for n, c in ns_out.items()]
    tfn_edges += [TfnEdge(n, SINK, c) for n, c in nr_in.items()]
    tfn_edges.sort(key=lambda e: (e.src.sort_key(), e.dst.sort_key()))
    nodes = {SOURCE, SINK}
    for e in tfn_edges:
        nodes.update(e.key)
    return TradeFlowNetwork(frozenset(nodes), tuple(tfn_edges))


def cut_flow(network: TradeFlowNetwork, s_side: Iterable[TfnNode]) -> Fraction:
    """Net flow across the cut ``(s_side, rest)``."""
    s_side = set(s_side)
    if SOURCE not in s_side or SINK in s_side:
        raise ValueError("a cut must put Source on the S side and Sink on the other")
    unknown = s_side - network.nodes
    if unknown:
        raise ValueError(f"cut names nodes outside the network: {sorted(unknown)}")
    total = ZERO
    for e in network.edges:
        if e.src in s_side and e.dst not in s_side:
            total += e.value
        elif e.dst in s_side and e.src not in s_side:
            total -= e.value
    return total


@dataclass
class FlowViolation:
    condition: str  # capacity | skew_symmetry | conservation | structure
    subject: str
    detail: str


@dataclass
class FlowReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, condition: str, subject: str, detail: str) -> None:
        self.violations.append(FlowViolation(condition, subject, detail))


def validate_flow_conditions(network: TradeFlowNetwork) -> FlowReport:
    """Check capacity, skew symmetry, conservation and TFN node typing."""
    report = FlowReport()
    seen: set[tuple[TfnNode, TfnNode]] = set()
    inflow: dict[TfnNode, Fraction] = defaultdict(Fraction)
    outflow: dict[TfnNode, Fraction] = defaultdict(Fraction)
    for e in network.edges:
        name = f"{e.src.label}->{e.dst.label}"
        if e.key in seen:
            report.add("structure", name, "duplicate edge")
        seen.add(e.key)
        if e.src not in network.nodes or e.dst not in network.nodes:
            report.add("structure", name, "endpoint not in node set")
        if not 0 <= e.value <= e.capacity:
            report.add("capacity", name,
                       f"flow {format_rational(e.value)} outside [0, {format_rational(e.capacity)}]")
        if e.capacity <= 0:
            report.add("capacity", name, "nonpositive capacity")
        if e.src == SOURCE and e.dst.kind is not NodeKind.NS:
            report.add("structure", name, "source edge must target an NS node")
        if e.dst == SINK and e.src.kind is not NodeKind.NR:
            report.add("structure", name, "sink edge must leave an NR node")
        if e.src.kind is NodeKind.NS and e.dst.kind in (NodeKind.NS, NodeKind.SOURCE):
            report.add("structure", name, "NS node may only receive from Source")
        if e.dst.kind is NodeKind.NS and e.src != SOURCE:
            report.add("structure", name, "NS node may only receive from Source")
        if e.src.kind is NodeKind.NR and e.dst != SINK:
            report.add("structure", name, "NR node may only send to Sink")
        outflow[e.src] += e.value
        inflow[e.dst] += e.value
    for u, v in seen:
        if (v, u) in seen and (u.sort_key(), v.sort_key()) < (v.sort_key(), u.sort_key()):
            report.add("skew_symmetry", f"{u.label}<->{v.label}",
                       "antiparallel edges: net flow between the pair is not single-valued")
    for node in sorted(network.nodes):
        if node in (SOURCE, SINK):
            continue
        if inflow[node] != outflow[node]:
            report.add("conservation", node.label,
                       f"inflow {format_rational(inflow[node])} != outflow {format_rational(outflow[node])}")
    return report


def excess_m_by_agent(network: TradeFlowNetwork) -> dict[AgentId, Fraction]:
    """M attached to each agent's excess-node edges (its residual M)."""
    out: dict[AgentId, Fraction] = defaultdict(Fraction)
    for e in network.trade_edges():
        if e.src.kind is NodeKind.NS:
            out[e.src.agent] += e.capacity * e.unit_price
        if e.dst.kind is NodeKind.NR:
            out[e.dst.agent] += e.capacity * e.unit_price
    return dict(sorted(out.items()))
