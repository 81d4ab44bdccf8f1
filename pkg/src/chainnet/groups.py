"""Netting groups: assigned trades on a chain or cycle and their net obligations."""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Optional

from .book import AgentId, NettedEdge, net_positions
from .network import NodeKind, TfnNode
from .rational import ZERO, format_rational


class GroupKind(enum.Enum):
    CHAIN = "chain"
    CYCLE = "cycle"
    RESIDUAL_CHAIN = "residual_chain"


class GroupState(enum.Enum):
    PENDING = "pending"
    EXECUTABLE = "executable"
    EXECUTED = "executed"
    DECOMPOSED = "decomposed"


class Mode(enum.Enum):
    TWO_OBJECT = "two_object"
    SINGLE_OBJECT = "single_object"


_TRANSITIONS = {
    GroupState.PENDING: {GroupState.EXECUTABLE, GroupState.DECOMPOSED},
    GroupState.EXECUTABLE: {GroupState.EXECUTED},
    GroupState.EXECUTED: set(),
    GroupState.DECOMPOSED: set(),
}


class GroupError(ValueError):
    pass


@dataclass(frozen=True)
class AssignedTrade:
    """Fraction ``lam`` of the netted trade ``origin_pair`` placed on one group.

    T goes ``src -> dst``; ``m_amount`` of M goes back ``dst -> src``.
    """

    src: TfnNode
    dst: TfnNode
    t_units: Fraction
    m_amount: Fraction
    unit_price: Fraction
    origin_pair: tuple
    lam: Fraction

    @property
    def sender(self) -> AgentId:
        return self.src.agent

    @property
    def receiver(self) -> AgentId:
        return self.dst.agent

    def render(self, mode: "Mode" = Mode.TWO_OBJECT) -> str:
        if mode is Mode.SINGLE_OBJECT:
            return f"{self.src.label} —{format_rational(self.t_units)}T→ {self.dst.label}"
        return (f"{self.src.label} —{format_rational(self.t_units)}T/"
                f"{format_rational(self.m_amount)}M→ {self.dst.label}")


@dataclass(frozen=True)
class NetObligation:
    """Positive ``net_t`` / ``net_m`` means the node must deliver that object."""

    node: TfnNode
    net_t: Fraction
    net_m: Fraction


def _components(trades: Iterable[AssignedTrade]) -> list[list[AssignedTrade]]:
    parent: dict[TfnNode, TfnNode] = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    trades = list(trades)
    for t in trades:
        parent[find(t.src)] = find(t.dst)
    buckets: dict[TfnNode, list[AssignedTrade]] = {}
    for t in trades:
        buckets.setdefault(find(t.src), []).append(t)
    return list(buckets.values())


def net_obligations(trades: Iterable[AssignedTrade]) -> list[NetObligation]:
    """Outflow minus inflow of T and of M at every node, in order of appearance."""
    trades = list(trades)
    if len(_components(trades)) > 1:
        raise GroupError("trades do not form one connected group")
    order: list[TfnNode] = []
    net_t: dict[TfnNode, Fraction] = {}
    net_m: dict[TfnNode, Fraction] = {}
    for t in trades:
        for node in (t.src, t.dst):
            if node not in net_t:
                order.append(node)
                net_t[node] = ZERO
                net_m[node] = ZERO
        net_t[t.src] += t.t_units
        net_t[t.dst] -= t.t_units
        net_m[t.dst] += t.m_amount
        net_m[t.src] -= t.m_amount
    return [NetObligation(n, net_t[n], net_m[n]) for n in order]


@dataclass
class NettingGroup:
    group_id: str
    kind: GroupKind
    trades: tuple
    mode: Mode = Mode.TWO_OBJECT
    state: GroupState = GroupState.PENDING
    parent_id: Optional[str] = None
    root_id: Optional[str] = None
    _obligations: Optional[list] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.trades = tuple(self.trades)
        if not self.trades:
            raise GroupError(f"group {self.group_id} has no trades")
        if self.root_id is None:
            self.root_id = self.group_id

    @property
    def obligations(self) -> list[NetObligation]:
        if self._obligations is None:
            self._obligations = net_obligations(self.trades)
        return self._obligations

    def obligation_of(self, node: TfnNode) -> NetObligation:
        for ob in self.obligations:
            if ob.node == node:
                return ob
        raise GroupError(f"{node.label} is not a member of group {self.group_id}")

    @property
    def nodes(self) -> list[TfnNode]:
        return [ob.node for ob in self.obligations]

    @property
    def agents(self) -> set[AgentId]:
        return {n.agent for n in self.nodes}

    def transition(self, new_state: GroupState) -> None:
        if new_state not in _TRANSITIONS[self.state]:
            raise GroupError(f"group {self.group_id}: illegal transition {self.state.value} -> {new_state.value}")
        self.state = new_state

    def render(self) -> str:
        """Edge listing followed by the net obligation table."""
        head = f"{self.group_id} ({self.kind.value}, {self.mode.value})"
        chain_text = self.trades[0].src.label
        contiguous = all(a.dst == b.src for a, b in zip(self.trades, self.trades[1:]))
        if contiguous:
            for t in self.trades:
                piece = t.render(self.mode)
                chain_text += piece[len(t.src.label):]
            lines = [head, "  " + chain_text]
        else:
            lines = [head] + ["  " + t.render(self.mode) for t in self.trades]
        lines.append(_obligation_table(self.obligations, self.mode))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "id": self.group_id,
            "kind": self.kind.value,
            "mode": self.mode.value,
            "state": self.state.value,
            "parent": self.parent_id,
            "trades": [
                {
                    "from": t.src.label,
                    "to": t.dst.label,
                    "t_units": format_rational(t.t_units),
                    "m_amount": format_rational(t.m_amount),
                    "unit_price": format_rational(t.unit_price),
                    "origin_pair": list(t.origin_pair),
                    "lambda": format_rational(t.lam),
                }
                for t in self.trades
            ],
            "obligations": [
                {"node": ob.node.label, "net_t": format_rational(ob.net_t), "net_m": format_rational(ob.net_m)}
                for ob in self.obligations
            ],
        }


def _cell(value: Fraction) -> str:
    if value > 0:
        return f"{format_rational(value)} - out"
    if value < 0:
        return f"{format_rational(-value)} - in"
    return ""


def _obligation_table(obligations: list[NetObligation], mode: Mode) -> str:
    header = ["Object flow"] + [ob.node.label for ob in obligations] + ["Net"]
    rows = [["T - flow"] + [_cell(ob.net_t) for ob in obligations]
            + [format_rational(sum((ob.net_t for ob in obligations), ZERO))]]
    if mode is Mode.TWO_OBJECT:
        rows.append(["M - flow"] + [_cell(ob.net_m) for ob in obligations]
                    + [format_rational(sum((ob.net_m for ob in obligations), ZERO))])
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    fmt = lambda r: "  " + " | ".join(c.ljust(w) for c, w in zip(r, widths))
    return "\n".join(fmt(r) for r in [header, *rows])


def strip_m(group: NettingGroup) -> NettingGroup:
    """Single-object copy of a group: every M amount and price set to zero."""
    trades = tuple(replace(t, m_amount=ZERO, unit_price=ZERO) for t in group.trades)
    return NettingGroup(group.group_id, group.kind, trades, Mode.SINGLE_OBJECT,
                        GroupState.PENDING, group.parent_id, group.root_id)


def agent_positions(groups: Iterable[NettingGroup]) -> dict[AgentId, tuple[Fraction, Fraction]]:
    """Per-agent (T delivered, M received) summed over the groups' obligations."""
    t: dict[AgentId, Fraction] = defaultdict(Fraction)
    m: dict[AgentId, Fraction] = defaultdict(Fraction)
    for g in groups:
        for ob in g.obligations:
            t[ob.node.agent] += ob.net_t
            m[ob.node.agent] -= ob.net_m
    return {a: (t[a], m[a]) for a in sorted(set(t) | set(m))}


@dataclass
class NettingReport:
    imbalance: dict
    residual_t: dict
    residual_m: dict
    minimum_m: dict
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_maximal_netting(groups: Iterable[NettingGroup], edges: Iterable[NettedEdge],
                          max_oracle_edges: int = 6) -> NettingReport:
    """Check both halves of the maximal-netting claim on a formed set of groups.

    (1) The T each agent still delivers or receives after netting equals its
    imbalance, and only excess (NS/NR) nodes carry it. (2) The M riding on
    each agent's excess-node trades equals the brute-force minimum over all
    admissible splits; agents with more than ``max_oracle_edges`` candidate
    edges are skipped (``minimum_m`` holds ``None``).
    """
    from .verifier import oracle_min_residual_m

    groups = list(groups)
    edges = list(edges)
    imbalance = {a: pos[0] for a, pos in net_positions(edges).items()}
    residual_t: dict[AgentId, Fraction] = {a: ZERO for a in imbalance}
    residual_m: dict[AgentId, Fraction] = defaultdict(Fraction)
    violations = []
    for g in groups:
        for ob in g.obligations:
            residual_t[ob.node.agent] = residual_t.get(ob.node.agent, ZERO) + ob.net_t
            if ob.net_t != 0 and ob.node.kind not in (NodeKind.NS, NodeKind.NR):
                violations.append(f"{g.group_id}: balanced node {ob.node.label} carries net T "
                                  f"{format_rational(ob.net_t)}")
        for t in g.trades:
            if t.src.kind is NodeKind.NS:
                residual_m[t.src.agent] += t.m_amount
            if t.dst.kind is NodeKind.NR:
                residual_m[t.dst.agent] += t.m_amount
    for agent in sorted(set(imbalance) | set(residual_t)):
        if residual_t.get(agent, ZERO) != imbalance.get(agent, ZERO):
            violations.append(f"agent {agent}: residual T {format_rational(residual_t.get(agent, ZERO))} "
                              f"!= imbalance {format_rational(imbalance.get(agent, ZERO))}")

    minimum_m: dict[AgentId, Optional[Fraction]] = {}
    for agent, gamma in imbalance.items():
        if gamma == 0:
            continue
        if gamma > 0:
            incident = [(e.unit_price, e.t_units) for e in edges if e.src == agent]
        else:
            incident = [(e.unit_price, e.t_units) for e in edges if e.dst == agent]
        if len(incident) > max_oracle_edges:
            minimum_m[agent] = None
            continue
        best = oracle_min_residual_m(incident, abs(gamma))
        minimum_m[agent] = best
        if residual_m.get(agent, ZERO) != best:
            violations.append(f"agent {agent}: excess-node M {format_rational(residual_m.get(agent, ZERO))} "
                              f"exceeds minimum {format_rational(best)}")
    return NettingReport(imbalance, residual_t, dict(residual_m), minimum_m, violations)
