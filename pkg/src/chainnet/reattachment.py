"""Re-attach netted M flows to the chains and cycles of a decomposition."""

from __future__ import annotations

from collections import defaultdict
from fractions import Fraction
from typing import Iterable

from .book import AgentId, NettedEdge
from .decomposition import Chain, Decomposition
from .groups import AssignedTrade, GroupKind, NettingGroup
from .rational import ZERO, format_rational


class ReconstructionError(ValueError):
    """Decomposition does not add back up to the netted edges."""


def attach_m(decomposition: Decomposition, edges: Iterable[NettedEdge]) -> list[NettingGroup]:
    """Turn every chain and cycle into a pending netting group.

    Each hop becomes an :class:`AssignedTrade` priced at its parent netted
    edge's unit price. Raises :class:`ReconstructionError` if a hop has no
    parent edge or a pair's assigned T does not sum to its netted T.
    """
    parents = {e.pair: e for e in edges}
    assigned: dict[tuple[AgentId, AgentId], Fraction] = defaultdict(Fraction)
    groups = []
    n_chain = n_cycle = 0
    for g in decomposition.groups():
        if isinstance(g, Chain):
            n_chain += 1
            gid, kind = f"chain{n_chain}", GroupKind.CHAIN
        else:
            n_cycle += 1
            gid, kind = f"cycle{n_cycle}", GroupKind.CYCLE
        trades = []
        for u, v in g.hops():
            pair = (u.agent, v.agent)
            parent = parents.get(pair)
            if parent is None:
                raise ReconstructionError(f"{gid}: hop {u.label}->{v.label} has no netted edge {pair[0]}->{pair[1]}")
            assigned[pair] += g.t_volume
            trades.append(AssignedTrade(
                src=u, dst=v,
                t_units=g.t_volume,
                m_amount=g.t_volume * parent.unit_price,
                unit_price=parent.unit_price,
                origin_pair=pair,
                lam=g.t_volume / parent.t_units,
            ))
        groups.append(NettingGroup(gid, kind, tuple(trades)))
    problems = [
        f"{a}->{b}: assigned {format_rational(assigned.get(pair, ZERO))} of {format_rational(e.t_units)}"
        for pair, e in sorted(parents.items())
        for a, b in [pair]
        if assigned.get(pair, ZERO) != e.t_units
    ]
    if problems:
        raise ReconstructionError("decomposition does not reconstruct the netted edges: " + "; ".join(problems))
    return groups


def lambda_table(groups: Iterable[NettingGroup]) -> dict[tuple[AgentId, AgentId], list[tuple[str, Fraction]]]:
    """Per netted pair, the (group id, fraction) of every assignment."""
    table: dict[tuple[AgentId, AgentId], list[tuple[str, Fraction]]] = defaultdict(list)
    for g in groups:
        for t in g.trades:
            table[t.origin_pair].append((g.group_id, t.lam))
    return dict(sorted(table.items()))
