"""Decomposition of the trade flow network into chains and cycles."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional

from .network import SINK, SOURCE, NodeKind, TfnNode, TradeFlowNetwork
from .rational import ZERO, format_rational, parse_rational

Residual = dict  # (TfnNode, TfnNode) -> Fraction


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class Chain:
    """Simple NS -> ... -> NR path carrying a constant T volume."""

    nodes: tuple
    t_volume: Fraction

    def __post_init__(self) -> None:
        if len(self.nodes) < 2:
            raise DecompositionError("a chain needs at least two nodes")
        if self.nodes[0].kind is not NodeKind.NS or self.nodes[-1].kind is not NodeKind.NR:
            raise DecompositionError(f"chain must run NS -> NR, got {self.labels}")
        if any(n.kind is not NodeKind.BT for n in self.nodes[1:-1]):
            raise DecompositionError(f"chain interior must be BT nodes: {self.labels}")
        if len(set(self.nodes)) != len(self.nodes):
            raise DecompositionError(f"chain repeats a node: {self.labels}")
        if self.t_volume <= 0:
            raise DecompositionError("chain volume must be positive")

    @property
    def labels(self) -> list[str]:
        return [n.label for n in self.nodes]

    def hops(self) -> list[tuple[TfnNode, TfnNode]]:
        return list(zip(self.nodes, self.nodes[1:]))


@dataclass(frozen=True)
class Cycle:
    """Closed BT-only loop; ``nodes[0] == nodes[-1]``."""

    nodes: tuple
    t_volume: Fraction

    def __post_init__(self) -> None:
        if len(self.nodes) < 3 or self.nodes[0] != self.nodes[-1]:
            raise DecompositionError("a cycle must close on its first node")
        body = self.nodes[:-1]
        if len(set(body)) != len(body):
            raise DecompositionError(f"cycle repeats a node: {self.labels}")
        if any(n.kind is not NodeKind.BT for n in body):
            raise DecompositionError(f"cycle may only contain BT nodes: {self.labels}")
        if self.t_volume <= 0:
            raise DecompositionError("cycle volume must be positive")

    @property
    def labels(self) -> list[str]:
        return [n.label for n in self.nodes]

    def hops(self) -> list[tuple[TfnNode, TfnNode]]:
        return list(zip(self.nodes, self.nodes[1:]))


@dataclass
class Decomposition:
    chains: list = field(default_factory=list)
    cycles: list = field(default_factory=list)

    def groups(self) -> list:
        return [*self.chains, *self.cycles]

    def to_json(self) -> str:
        def entry(g):
            return {"nodes": g.labels, "t_volume": format_rational(g.t_volume)}
        doc = {"chains": [entry(c) for c in self.chains], "cycles": [entry(c) for c in self.cycles]}
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Decomposition":
        doc = json.loads(text)
        def build(kind, entry):
            nodes = tuple(TfnNode.parse(label) for label in entry["nodes"])
            return kind(nodes, parse_rational(entry["t_volume"]))
        return cls([build(Chain, e) for e in doc.get("chains", [])],
                   [build(Cycle, e) for e in doc.get("cycles", [])])


def residual_of(network: TradeFlowNetwork) -> Residual:
    return {e.key: e.value for e in network.edges if e.value > 0}


class _Adjacency:
    """Sorted successor lists over a residual map, skipping exhausted edges.

    Residuals only ever decrease, so a per-node cursor can permanently
    step past zeroed edges.
    """

    def __init__(self, residual: Mapping):
        self.residual = residual
        succ: dict[TfnNode, list[TfnNode]] = defaultdict(list)
        for (u, v), amount in residual.items():
            if amount > 0:
                succ[u].append(v)
        self.succ = {u: sorted(vs, key=TfnNode.sort_key) for u, vs in succ.items()}
        self.cursor = {u: 0 for u in self.succ}

    def live(self, u: TfnNode):
        vs = self.succ.get(u)
        if not vs:
            return
        i = self.cursor[u]
        while i < len(vs) and self.residual.get((u, vs[i]), ZERO) <= 0:
            i += 1
        self.cursor[u] = i
        for v in vs[i:]:
            if self.residual.get((u, v), ZERO) > 0:
                yield v

    def first_live(self, u: TfnNode) -> Optional[TfnNode]:
        return next(self.live(u), None)


def _dfs_path(adj: _Adjacency, start: TfnNode, goal: TfnNode) -> Optional[list[TfnNode]]:
    stack = [(start, adj.live(start))]
    on_path = [start]
    visited = {start}
    while stack:
        node, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            stack.pop()
            on_path.pop()
            continue
        if nxt in visited:
            continue
        visited.add(nxt)
        on_path.append(nxt)
        if nxt == goal:
            return on_path
        stack.append((nxt, adj.live(nxt)))
    return None


def find_st_path(residual: Mapping, _adj: Optional[_Adjacency] = None) -> Optional[list[TfnNode]]:
    """Simple Source -> Sink path with positive residual on every edge.

    Depth-first, successors in ascending (agent, kind) order.
    """
    adj = _adj or _Adjacency(residual)
    return _dfs_path(adj, SOURCE, SINK)


def find_cycle(residual: Mapping, _adj: Optional[_Adjacency] = None) -> Optional[list[TfnNode]]:
    """Directed cycle with positive residual on every edge, closing node repeated."""
    adj = _adj or _Adjacency(residual)
    state: dict[TfnNode, int] = {}  # 1 on stack, 2 finished
    starts = sorted({u for (u, _), amount in residual.items() if amount > 0}, key=TfnNode.sort_key)
    for root in starts:
        if root in state:
            continue
        path = [root]
        stack = [adj.live(root)]
        state[root] = 1
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                state[path.pop()] = 2
                stack.pop()
                continue
            mark = state.get(nxt)
            if mark == 1:
                return path[path.index(nxt):] + [nxt]
            if mark == 2:
                continue
            state[nxt] = 1
            path.append(nxt)
            stack.append(adj.live(nxt))
    return None


def _extract(residual: dict, path: list[TfnNode]) -> Fraction:
    hops = list(zip(path, path[1:]))
    volume = min(residual[h] for h in hops)
    for h in hops:
        left = residual[h] - volume
        if left:
            residual[h] = left
        else:
            del residual[h]
    return volume


def decompose(network: TradeFlowNetwork) -> Decomposition:
    """Extract chains along source-sink paths, then cycles from what remains."""
    residual = residual_of(network)
    adj = _Adjacency(residual)
    out = Decomposition()
    while True:
        path = find_st_path(residual, adj)
        if path is None:
            break
        volume = _extract(residual, path)
        out.chains.append(Chain(tuple(path[1:-1]), volume))
    while residual:
        loop = find_cycle(residual, adj)
        if loop is None:
            raise DecompositionError("residual flow left that lies on no cycle; network is not conservative")
        volume = _extract(residual, loop)
        out.cycles.append(Cycle(tuple(loop), volume))
    return out


def edge_usage(decomposition: Decomposition) -> dict[tuple[TfnNode, TfnNode], Fraction]:
    """T volume carried over each node-level hop, summed across groups."""
    usage: dict[tuple[TfnNode, TfnNode], Fraction] = defaultdict(Fraction)
    for g in decomposition.groups():
        for hop in g.hops():
            usage[hop] += g.t_volume
    return dict(usage)


def check_reconstruction(decomposition: Decomposition, network: TradeFlowNetwork) -> list[str]:
    """Mismatches between the decomposition and the network's trade edges."""
    usage = edge_usage(decomposition)
    problems = []
    caps = {e.key: e.value for e in network.trade_edges()}
    for key in sorted(set(usage) | set(caps), key=lambda k: (k[0].sort_key(), k[1].sort_key())):
        used, cap = usage.get(key, ZERO), caps.get(key, ZERO)
        if used != cap:
            problems.append(f"{key[0].label}->{key[1].label}: groups carry {format_rational(used)}, "
                            f"edge holds {format_rational(cap)}")
    return problems
