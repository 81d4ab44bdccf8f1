"""Escrow, deficiency recovery and execution of netting groups.

The engine is deterministic: which agents fall short is read from a
scenario, and everyone else is assumed to commit what they owe.
"""

from __future__ import annotations

import enum
import json
import string
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional

from .book import AgentId
from .groups import AssignedTrade, GroupKind, GroupState, NettingGroup
from .network import NodeKind, TfnNode
from .rational import ZERO, format_rational, parse_rational


class Obj(enum.Enum):
    T = "T"
    M = "M"


class SettlementError(ValueError):
    pass


class ScenarioError(SettlementError):
    """A deficiency event cannot be resolved against the live groups."""


class EscrowError(SettlementError):
    pass


@dataclass(frozen=True)
class DeficiencyEvent:
    group_id: str  # original or residual group id, or "auto"
    node: TfnNode
    obj: Obj
    amount: Fraction

    def __post_init__(self) -> None:
        if self.amount <= 0:
            raise ScenarioError("shortfall amount must be positive")


@dataclass(frozen=True)
class RecoveredContract:
    """A removed assignment reinstated between its original counterparties."""

    contract_id: str
    src: AgentId  # T sender
    dst: AgentId
    t_units: Fraction
    m_amount: Fraction
    unit_price: Fraction
    origin_pair: tuple
    source_group: str
    lam: Fraction
    removed: Optional[AssignedTrade] = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "id": self.contract_id,
            "from": self.src,
            "to": self.dst,
            "t_units": format_rational(self.t_units),
            "m_amount": format_rational(self.m_amount),
            "unit_price": format_rational(self.unit_price),
            "origin_pair": list(self.origin_pair),
            "source_group": self.source_group,
            "lambda": format_rational(self.lam),
        }


@dataclass(frozen=True)
class Transfer:
    group_id: str
    agent: AgentId
    obj: Obj
    amount: Fraction
    direction: str  # "deliver" to escrow or "receive" from escrow

    def to_dict(self) -> dict:
        return {"group": self.group_id, "agent": self.agent, "object": self.obj.value,
                "amount": format_rational(self.amount), "direction": self.direction}


def agent_obligations(group: NettingGroup) -> dict[AgentId, tuple[Fraction, Fraction]]:
    """Obligations summed over each agent's nodes in the group, in appearance order."""
    out: dict[AgentId, tuple[Fraction, Fraction]] = {}
    for ob in group.obligations:
        t, m = out.get(ob.node.agent, (ZERO, ZERO))
        out[ob.node.agent] = (t + ob.net_t, m + ob.net_m)
    return out


def requirements(group: NettingGroup) -> dict[AgentId, tuple[Fraction, Fraction]]:
    """What each agent must lock in escrow for the group: the positive parts."""
    return {a: (max(t, ZERO), max(m, ZERO)) for a, (t, m) in agent_obligations(group).items()}


@dataclass
class EscrowEntry:
    committed_t: Fraction = ZERO
    committed_m: Fraction = ZERO
    locked: bool = False


class EscrowLedger:
    """Commitments per (group, agent); locked amounts only leave on release."""

    def __init__(self) -> None:
        self._entries: dict[tuple[str, AgentId], EscrowEntry] = {}
        self.history: list[tuple[str, AgentId, str, Fraction]] = []

    def commit(self, group_id: str, agent: AgentId, t: Fraction = ZERO, m: Fraction = ZERO) -> None:
        if t < 0 or m < 0:
            raise EscrowError("commitments cannot be negative; use release")
        entry = self._entries.setdefault((group_id, agent), EscrowEntry())
        entry.committed_t += t
        entry.committed_m += m
        entry.locked = True
        if t:
            self.history.append((group_id, agent, "T", t))
        if m:
            self.history.append((group_id, agent, "M", m))

    def withdraw(self, group_id: str, agent: AgentId, t: Fraction = ZERO, m: Fraction = ZERO) -> None:
        entry = self._entries.get((group_id, agent))
        if entry is None:
            raise EscrowError(f"nothing committed by {agent} to {group_id}")
        if entry.locked:
            raise EscrowError(f"{agent}'s commitment to {group_id} is locked until execution or decomposition")
        if t > entry.committed_t or m > entry.committed_m:
            raise EscrowError("withdrawal exceeds commitment")
        entry.committed_t -= t
        entry.committed_m -= m

    def committed(self, group_id: str, agent: AgentId) -> tuple[Fraction, Fraction]:
        entry = self._entries.get((group_id, agent))
        return (ZERO, ZERO) if entry is None else (entry.committed_t, entry.committed_m)

    def is_locked(self, group_id: str, agent: AgentId) -> bool:
        entry = self._entries.get((group_id, agent))
        return bool(entry and entry.locked)

    def shortfalls(self, group: NettingGroup) -> list[tuple[AgentId, Obj, Fraction]]:
        missing = []
        for agent, (need_t, need_m) in requirements(group).items():
            have_t, have_m = self.committed(group.group_id, agent)
            if need_t > have_t:
                missing.append((agent, Obj.T, need_t - have_t))
            if need_m > have_m:
                missing.append((agent, Obj.M, need_m - have_m))
        return missing

    def covers(self, group: NettingGroup) -> bool:
        return not self.shortfalls(group)

    def release(self, group_id: str) -> dict[AgentId, tuple[Fraction, Fraction]]:
        """Unlock and remove every commitment to a group, returning the amounts."""
        out = {}
        for key in [k for k in self._entries if k[0] == group_id]:
            entry = self._entries.pop(key)
            out[key[1]] = (entry.committed_t, entry.committed_m)
            if entry.committed_t:
                self.history.append((group_id, key[1], "T", -entry.committed_t))
            if entry.committed_m:
                self.history.append((group_id, key[1], "M", -entry.committed_m))
        return out

    def fund_fully(self, group: NettingGroup) -> None:
        for agent, obj, amount in self.shortfalls(group):
            if obj is Obj.T:
                self.commit(group.group_id, agent, t=amount)
            else:
                self.commit(group.group_id, agent, m=amount)


def _owes(trade: AssignedTrade, node: TfnNode, obj: Obj) -> bool:
    if obj is Obj.T:
        return trade.src == node
    return (trade.dst == node and trade.m_amount > 0) or (trade.src == node and trade.m_amount < 0)


def delivery_edge(group: NettingGroup, node: TfnNode, obj: Optional[Obj] = None) -> AssignedTrade:
    """The incident assigned trade on which ``node`` delivers its net object.

    T is delivered on the edge to the node's right, M on the edge to its
    left (where the node is the T receiver). With ``obj`` omitted, T takes
    precedence when the node owes both.
    """
    ob = group.obligation_of(node)
    if obj is None:
        if ob.net_t > 0:
            obj = Obj.T
        elif ob.net_m > 0:
            obj = Obj.M
        else:
            raise SettlementError(f"{node.label} owes nothing in {group.group_id}; no delivery edge")
    owed = ob.net_t if obj is Obj.T else ob.net_m
    if owed <= 0:
        raise SettlementError(f"{node.label} owes no {obj.value} in {group.group_id}")
    candidates = [t for t in group.trades if _owes(t, node, obj)]
    # left edge (node receives T) first for M, the only choice for T
    candidates.sort(key=lambda t: 0 if t.dst == node else 1)
    if not candidates:
        raise SettlementError(f"{node.label} has no edge carrying its {obj.value} outflow in {group.group_id}")
    return candidates[0]


def _split_residue(group: NettingGroup, index: int) -> list[tuple[AssignedTrade, ...]]:
    trades = group.trades
    if group.kind is GroupKind.CYCLE:
        rest = trades[index + 1:] + trades[:index]
        return [rest] if rest else []
    pieces = [trades[:index], trades[index + 1:]]
    return [p for p in pieces if p]


def process_deficiency(group: NettingGroup,
                       event: DeficiencyEvent) -> tuple[RecoveredContract, list[NettingGroup]]:
    """Remove the deficient node's delivery edge and re-net what is left.

    The removed assignment comes back as a bilateral contract; each
    remaining connected piece becomes a pending residual chain that keeps
    its trades and their order. The source group is marked decomposed.
    """
    if group.state is not GroupState.PENDING:
        raise SettlementError(f"group {group.group_id} is {group.state.value}, not pending")
    try:
        ob = group.obligation_of(event.node)
    except ValueError:
        raise ScenarioError(f"{event.node.label} is not a member of group {group.group_id}") from None
    owed = ob.net_t if event.obj is Obj.T else ob.net_m
    if owed <= 0:
        raise ScenarioError(f"{event.node.label} owes no {event.obj.value} in {group.group_id}; not deficient")
    if event.amount > owed:
        raise ScenarioError(f"shortfall {format_rational(event.amount)} exceeds {event.node.label}'s "
                            f"obligation {format_rational(owed)} in {group.group_id}")
    edge = delivery_edge(group, event.node, event.obj)
    index = group.trades.index(edge)
    pieces = _split_residue(group, index)
    letters = iter(string.ascii_lowercase)
    residuals = [
        NettingGroup(f"{group.group_id}{next(letters)}", GroupKind.RESIDUAL_CHAIN, piece,
                     group.mode, GroupState.PENDING, group.group_id, group.root_id)
        for piece in pieces
    ]
    recovered = RecoveredContract(
        contract_id=f"{group.group_id}{next(letters)}",
        src=edge.sender, dst=edge.receiver,
        t_units=edge.t_units, m_amount=edge.m_amount, unit_price=edge.unit_price,
        origin_pair=edge.origin_pair, source_group=group.group_id, lam=edge.lam, removed=edge,
    )
    group.transition(GroupState.DECOMPOSED)
    return recovered, residuals


@dataclass
class Settlement:
    executable: list
    recovered: list
    decomposed: list = field(default_factory=list)
    top_ups: list = field(default_factory=list)  # (group_id, agent, Obj, amount)
    removals: int = 0
    ledger: EscrowLedger = field(default_factory=EscrowLedger)

    def __iter__(self):
        yield self.executable
        yield self.recovered


def _ancestors(group_id: str, parents: dict[str, Optional[str]]) -> list[str]:
    chain = []
    current: Optional[str] = group_id
    while current is not None:
        chain.append(current)
        current = parents.get(current)
    return chain


def _owed(group: NettingGroup, node: TfnNode, obj: Obj) -> Fraction:
    ob = group.obligation_of(node)
    return ob.net_t if obj is Obj.T else ob.net_m


def settle(groups: Iterable[NettingGroup], scenario: Iterable[DeficiencyEvent] = (),
           ledger: Optional[EscrowLedger] = None,
           defaulter: Optional[Callable[[NettingGroup, list], object]] = None) -> Settlement:
    """Run the replacement procedure until every surviving group is executable.

    Agents commit their full requirement less any shortfall the scenario
    records against them. Every event matching a group withholds at once;
    the first one that bites removes its node's delivery edge. Events
    follow their node into the residual chains that still contain it and
    are discharged once they no longer bite there. Residual chains inherit
    the commitments their members had already locked; increases are
    recorded in ``top_ups`` and committed.

    ``defaulter``, if given, is asked for events (one, a list, or None) for
    every group that no scenario event matches, residual chains included.
    It receives the group and the agents' outstanding ``(agent, Obj,
    amount)`` commitments. Its events apply to that group only.
    """
    groups = list(groups)
    pending = list(scenario)
    ledger = ledger or EscrowLedger()
    parents: dict[str, Optional[str]] = {g.group_id: None for g in groups}
    for ev in pending:
        if ev.group_id != "auto" and ev.group_id not in parents:
            raise ScenarioError(f"event references unknown group {ev.group_id!r}")
    bitten: set[int] = set()  # ids of scenario events that withheld something at least once
    edge_budget = sum(len(g.trades) for g in groups)
    queue = deque(groups)
    result = Settlement([], [], ledger=ledger)

    while queue:
        group = queue.popleft()
        lineage = _ancestors(group.group_id, parents)
        members = set(group.nodes)
        matched = [ev for ev in pending
                   if ev.node in members and (ev.group_id == "auto" or ev.group_id in lineage)]
        outstanding = ledger.shortfalls(group)
        if not matched and defaulter is not None:
            drawn = defaulter(group, outstanding)
            matched = [] if drawn is None else [drawn] if isinstance(drawn, DeficiencyEvent) else list(drawn)
        gaps = {(agent, obj): amount for agent, obj, amount in outstanding}
        withheld: dict[tuple[AgentId, Obj], Fraction] = {}
        biting = []
        for ev in matched:
            key = (ev.node.agent, ev.obj)
            owed = _owed(group, ev.node, ev.obj)
            if owed > 0 and gaps.get(key, ZERO) > 0:
                withheld[key] = withheld.get(key, ZERO) + min(ev.amount, owed)
                biting.append(ev)
                bitten.add(id(ev))
        for agent, obj, amount in outstanding:
            amount -= withheld.get((agent, obj), ZERO)
            if amount > 0:
                if group.parent_id is not None:
                    result.top_ups.append((group.group_id, agent, obj, amount))
                if obj is Obj.T:
                    ledger.commit(group.group_id, agent, t=amount)
                else:
                    ledger.commit(group.group_id, agent, m=amount)
        for ev in matched:
            if ev not in biting and ev in pending:
                if id(ev) not in bitten:
                    raise ScenarioError(f"event for {ev.node.label} in {group.group_id} leaves no shortfall "
                                        f"at the agent level")
                pending.remove(ev)  # it bit upstream and is spent here
        if ledger.covers(group):
            group.transition(GroupState.EXECUTABLE)
            result.executable.append(group)
            continue
        if not biting:
            raise SettlementError(f"group {group.group_id} under-funded without a deficiency event")
        trigger = biting[0]
        owed = _owed(group, trigger.node, trigger.obj)
        recovered, residuals = process_deficiency(
            group, DeficiencyEvent(group.group_id, trigger.node, trigger.obj, min(trigger.amount, owed)))
        result.removals += 1
        if result.removals > edge_budget:
            raise SettlementError("edge-removal budget exceeded; procedure failed to terminate")
        result.recovered.append(recovered)
        result.decomposed.append(group)
        carried = ledger.release(group.group_id)
        for residual in residuals:
            parents[residual.group_id] = group.group_id
            for agent, (need_t, need_m) in requirements(residual).items():
                have_t, have_m = carried.get(agent, (ZERO, ZERO))
                keep_t, keep_m = min(have_t, need_t), min(have_m, need_m)
                if keep_t or keep_m:
                    ledger.commit(residual.group_id, agent, t=keep_t, m=keep_m)
                    carried[agent] = (have_t - keep_t, have_m - keep_m)
            queue.append(residual)
    unresolved = [ev for ev in pending if id(ev) not in bitten]
    if unresolved:
        labels = ", ".join(f"{ev.group_id}/{ev.node.label}/{ev.obj.value}" for ev in unresolved)
        raise ScenarioError(f"unresolvable scenario events: {labels}")
    return result


def execute(group: NettingGroup, ledger: EscrowLedger) -> list[Transfer]:
    """Deliver an executable group's net obligations through escrow."""
    if group.state is not GroupState.EXECUTABLE:
        raise SettlementError(f"group {group.group_id} is {group.state.value}, not executable")
    missing = ledger.shortfalls(group)
    if missing:
        agent, obj, amount = missing[0]
        raise EscrowError(f"{group.group_id}: {agent} is short {format_rational(amount)} {obj.value} in escrow")
    owed = agent_obligations(group)
    transfers = []
    for obj, index in ((Obj.T, 0), (Obj.M, 1)):
        for agent, amounts in owed.items():
            if amounts[index] > 0:
                transfers.append(Transfer(group.group_id, agent, obj, amounts[index], "deliver"))
        for agent, amounts in owed.items():
            if amounts[index] < 0:
                transfers.append(Transfer(group.group_id, agent, obj, -amounts[index], "receive"))
    ledger.release(group.group_id)
    group.transition(GroupState.EXECUTED)
    return transfers


def load_scenario(text: str) -> list[DeficiencyEvent]:
    """Parse a JSON scenario: ``[{group, agent, node_kind, object, amount}, ...]``."""
    if not text.strip():
        return []
    try:
        rows = json.loads(text, parse_float=Fraction, parse_int=Fraction)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid scenario JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(rows, list):
        raise ScenarioError("scenario must be a JSON array")
    events = []
    for i, row in enumerate(rows, start=1):
        try:
            kind = NodeKind(row["node_kind"])
            if kind in (NodeKind.SOURCE, NodeKind.SINK):
                raise ValueError("events must name a BT, NS or NR node")
            events.append(DeficiencyEvent(
                group_id=str(row.get("group", "auto")),
                node=TfnNode(str(row["agent"]), kind),
                obj=Obj(row["object"]),
                amount=parse_rational(row["amount"]),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"scenario entry {i}: {exc}") from None
    return events
