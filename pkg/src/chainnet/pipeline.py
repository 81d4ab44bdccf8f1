"""End-to-end wiring: book -> netted edges -> TFN -> decomposition -> groups."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .book import Contract, bilateral_net, money_only_transfers
from .decomposition import Chain, Cycle, Decomposition, DecompositionError, decompose
from .groups import Mode, NettingGroup, strip_m
from .network import TfnNode, TradeFlowNetwork, build_tfn
from .rational import format_rational, parse_rational
from .reattachment import ReconstructionError, attach_m


class FixtureError(ValueError):
    pass


@dataclass
class Fixture:
    decomposition: Decomposition
    group_ids: list
    expected_m: dict  # (group_id, hop index) -> Fraction, where the fixture lists M


def load_fixture(text: str) -> Fixture:
    """Read a decomposition written in the group-dump layout.

    ``{"groups": [{"id", "kind": "chain"|"cycle", "trades": [{"from", "to",
    "t_units", "m_amount"?}, ...]}]}``. Trades must be contiguous and carry
    one T volume; a cycle's last trade returns to its first node.
    """
    try:
        doc = json.loads(text)
        entries = doc["groups"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FixtureError(f"unreadable fixture: {exc}") from None
    chains, cycles, expected = [], [], {}
    for entry in entries:
        gid = entry.get("id")
        trades = entry.get("trades") or []
        if not gid or not trades:
            raise FixtureError("every fixture group needs an id and trades")
        try:
            hops = [(TfnNode.parse(t["from"]), TfnNode.parse(t["to"])) for t in trades]
            volumes = {parse_rational(t["t_units"]) for t in trades}
        except (KeyError, TypeError, ValueError) as exc:
            raise FixtureError(f"{gid}: {exc}") from None
        if len(volumes) != 1:
            raise FixtureError(f"{gid}: T volume must be constant along the group")
        if any(a[1] != b[0] for a, b in zip(hops, hops[1:])):
            raise FixtureError(f"{gid}: trades are not contiguous")
        nodes = tuple([hops[0][0]] + [v for _, v in hops])
        volume = volumes.pop()
        try:
            if entry.get("kind") == "cycle":
                cycles.append((gid, Cycle(nodes, volume)))
            elif entry.get("kind") == "chain":
                chains.append((gid, Chain(nodes, volume)))
            else:
                raise FixtureError(f"{gid}: kind must be chain or cycle")
        except DecompositionError as exc:
            raise FixtureError(f"{gid}: {exc}") from None
        for i, t in enumerate(trades):
            if "m_amount" in t:
                expected[gid, i] = parse_rational(t["m_amount"])
    ordered = chains + cycles
    return Fixture(Decomposition([c for _, c in chains], [c for _, c in cycles]),
                   [gid for gid, _ in ordered], expected)


@dataclass
class PipelineResult:
    contracts: list
    edges: list
    money_only: list
    network: TradeFlowNetwork
    decomposition: Decomposition
    groups: list


def groups_from_fixture(fixture: Fixture, edges) -> list[NettingGroup]:
    """Attach M to a fixture decomposition, checking any M amounts it lists."""
    try:
        groups = attach_m(fixture.decomposition, edges)
    except ReconstructionError as exc:
        raise FixtureError(str(exc)) from None
    for group, gid in zip(groups, fixture.group_ids):
        group.group_id = gid
        group.root_id = gid
    mismatches = []
    for group in groups:
        for i, trade in enumerate(group.trades):
            want: Optional[Fraction] = fixture.expected_m.get((group.group_id, i))
            if want is not None and want != trade.m_amount:
                mismatches.append(f"{group.group_id} hop {i}: fixture {format_rational(want)}, "
                                  f"derived {format_rational(trade.m_amount)}")
    if mismatches:
        raise FixtureError("fixture M amounts disagree with the book: " + "; ".join(mismatches))
    return groups


def run_pipeline(contracts: list[Contract], fixture: Optional[Fixture] = None,
                 mode: Mode = Mode.TWO_OBJECT) -> PipelineResult:
    edges = bilateral_net(contracts)
    network = build_tfn(edges)
    if fixture is None:
        decomposition = decompose(network)
        groups = attach_m(decomposition, edges)
    else:
        decomposition = fixture.decomposition
        groups = groups_from_fixture(fixture, edges)
    if mode is Mode.SINGLE_OBJECT:
        groups = [strip_m(g) for g in groups]
    return PipelineResult(contracts, edges, money_only_transfers(contracts), network, decomposition, groups)


def dump_groups(groups) -> str:
    return json.dumps({"groups": [g.to_dict() for g in groups]}, indent=2, sort_keys=True)
