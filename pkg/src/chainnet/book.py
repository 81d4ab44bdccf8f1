"""Initial contract book: ingestion, validation and pairwise netting on T."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable, Union

from .rational import ZERO, format_rational, parse_rational

AgentId = str

CSV_COLUMNS = ("contract_number", "t_sender", "m_sender", "unit_price", "t_units")


class BookError(ValueError):
    """A contract book failed to parse or violates a book invariant."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Contract:
    """One bilateral trade: ``t_sender`` delivers T, ``m_sender`` pays M."""

    contract_number: int
    t_sender: AgentId
    m_sender: AgentId
    unit_price: Fraction
    t_units: Fraction

    def __post_init__(self) -> None:
        if not isinstance(self.contract_number, int) or self.contract_number <= 0:
            raise BookError(f"contract_number must be a positive integer, got {self.contract_number!r}")
        if not self.t_sender or not self.m_sender:
            raise BookError(f"contract {self.contract_number}: empty agent id")
        if self.t_sender == self.m_sender:
            raise BookError(f"contract {self.contract_number}: self-trade by {self.t_sender!r}")
        if self.t_units <= 0:
            raise BookError(f"contract {self.contract_number}: t_units must be positive")
        if self.unit_price < 0:
            raise BookError(f"contract {self.contract_number}: negative unit_price")

    @property
    def m_amount(self) -> Fraction:
        return self.unit_price * self.t_units


@dataclass(frozen=True)
class NettedEdge:
    """Net T flow ``src -> dst`` with the net M flowing back ``dst -> src``.

    ``m_amount`` keeps its sign: when the gross M paid against the net
    direction exceeds the M received, the edge carries negative M.
    """

    src: AgentId
    dst: AgentId
    t_units: Fraction
    m_amount: Fraction

    @property
    def unit_price(self) -> Fraction:
        return self.m_amount / self.t_units

    @property
    def pair(self) -> tuple[AgentId, AgentId]:
        return (self.src, self.dst)


@dataclass(frozen=True)
class MoneyTransfer:
    """Money-only remainder of a pair whose T nets to exactly zero."""

    payer: AgentId
    payee: AgentId
    amount: Fraction


def _contract_from_fields(fields: dict, line: int | None) -> Contract:
    try:
        raw_number = fields["contract_number"]
        if isinstance(raw_number, Fraction):
            if raw_number.denominator != 1:
                raise ValueError("contract_number must be an integer")
            number = int(raw_number)
        else:
            number = int(str(raw_number).strip())
        t_sender = str(fields["t_sender"]).strip()
        m_sender = str(fields["m_sender"]).strip()
        price = parse_rational(fields["unit_price"])
        units = parse_rational(fields["t_units"])
    except KeyError as exc:
        raise BookError(f"missing field {exc.args[0]!r}", line) from None
    except (TypeError, ValueError) as exc:
        raise BookError(f"malformed row: {exc}", line) from None
    try:
        return Contract(number, t_sender, m_sender, price, units)
    except BookError as exc:
        raise BookError(str(exc), line) from None


def _read_csv(text: str) -> list[Contract]:
    reader = csv.reader(io.StringIO(text))
    contracts = []
    header = None
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if header is None:
            header = tuple(cell.strip() for cell in row)
            if header != CSV_COLUMNS:
                raise BookError(f"expected header {','.join(CSV_COLUMNS)}", line)
            continue
        if len(row) != len(CSV_COLUMNS):
            raise BookError(f"expected {len(CSV_COLUMNS)} fields, got {len(row)}", line)
        contracts.append(_contract_from_fields(dict(zip(CSV_COLUMNS, row)), line))
    return contracts


def _read_json(text: str) -> list[Contract]:
    if not text.strip():
        return []
    try:
        rows = json.loads(text, parse_float=Fraction, parse_int=Fraction)
    except json.JSONDecodeError as exc:
        raise BookError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(rows, list):
        raise BookError("JSON book must be an array of contract objects")
    contracts = []
    for index, row in enumerate(rows, start=1):
        if not isinstance(row, dict):
            raise BookError(f"entry {index} is not an object")
        contracts.append(_contract_from_fields(row, None))
    return contracts


def load_contracts(source: Union[bytes, str, IO], format: str = "csv") -> list[Contract]:
    """Parse a contract book from bytes, text or a file object.

    Contracts come back in file order. Raises :class:`BookError` on a
    malformed row, a duplicate contract number, a self-trade, nonpositive
    units or a negative price.
    """
    if hasattr(source, "read"):
        source = source.read()
    text = source.decode("utf-8") if isinstance(source, bytes) else source
    if format == "csv":
        contracts = _read_csv(text)
    elif format == "json":
        contracts = _read_json(text)
    else:
        raise ValueError(f"unknown book format {format!r}")
    seen = set()
    for contract in contracts:
        if contract.contract_number in seen:
            raise BookError(f"duplicate contract_number {contract.contract_number}")
        seen.add(contract.contract_number)
    return contracts


def dump_contracts(contracts: Iterable[Contract], format: str = "csv") -> str:
    if format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for c in contracts:
            writer.writerow([c.contract_number, c.t_sender, c.m_sender,
                             format_rational(c.unit_price), format_rational(c.t_units)])
        return out.getvalue()
    if format == "json":
        rows = [
            {
                "contract_number": c.contract_number,
                "t_sender": c.t_sender,
                "m_sender": c.m_sender,
                "unit_price": format_rational(c.unit_price),
                "t_units": format_rational(c.t_units),
            }
            for c in contracts
        ]
        return json.dumps(rows, indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown book format {format!r}")


def _gross_by_pair(contracts: Iterable[Contract]):
    gross_t: dict[tuple[AgentId, AgentId], Fraction] = defaultdict(Fraction)
    gross_m: dict[tuple[AgentId, AgentId], Fraction] = defaultdict(Fraction)
    for c in contracts:
        gross_t[c.t_sender, c.m_sender] += c.t_units
        gross_m[c.t_sender, c.m_sender] += c.m_amount
    return gross_t, gross_m


def _net_pairs(contracts: Iterable[Contract]):
    gross_t, gross_m = _gross_by_pair(contracts)
    pairs = sorted({tuple(sorted(p)) for p in gross_t})
    for a, b in pairs:
        net_t = gross_t.get((a, b), ZERO) - gross_t.get((b, a), ZERO)
        net_m = gross_m.get((a, b), ZERO) - gross_m.get((b, a), ZERO)
        yield a, b, net_t, net_m


def bilateral_net(contracts: Iterable[Contract]) -> list[NettedEdge]:
    """Offset the two gross directions of every agent pair on T.

    M is netted alongside and attached to the surviving T direction. Pairs
    whose T cancels exactly produce no edge; see :func:`money_only_transfers`
    for the M they may leave behind. Output is sorted by ``(src, dst)``.
    """
    edges = []
    for a, b, net_t, net_m in _net_pairs(contracts):
        if net_t > 0:
            edges.append(NettedEdge(a, b, net_t, net_m))
        elif net_t < 0:
            edges.append(NettedEdge(b, a, -net_t, -net_m))
    edges.sort(key=lambda e: (e.src, e.dst))
    return edges


def money_only_transfers(contracts: Iterable[Contract]) -> list[MoneyTransfer]:
    """Standalone M obligations of pairs whose T nets to zero but M does not."""
    transfers = []
    for a, b, net_t, net_m in _net_pairs(contracts):
        if net_t == 0 and net_m != 0:
            # net_m > 0 means b's gross M to a exceeds a's gross M to b
            if net_m > 0:
                transfers.append(MoneyTransfer(payer=b, payee=a, amount=net_m))
            else:
                transfers.append(MoneyTransfer(payer=a, payee=b, amount=-net_m))
    return transfers


def net_positions(edges: Iterable[NettedEdge],
                  transfers: Iterable[MoneyTransfer] = ()) -> dict[AgentId, tuple[Fraction, Fraction]]:
    """Per-agent ``(net T outflow, net M inflow)`` over netted edges.

    Net T outflow is the agent's imbalance; net M inflow is its profit from
    the initial trades. Money-only transfers, if given, count towards M.
    """
    net_t: dict[AgentId, Fraction] = defaultdict(Fraction)
    net_m: dict[AgentId, Fraction] = defaultdict(Fraction)
    for e in edges:
        net_t[e.src] += e.t_units
        net_t[e.dst] -= e.t_units
        net_m[e.src] += e.m_amount
        net_m[e.dst] -= e.m_amount
    for tr in transfers:
        net_t[tr.payer] += ZERO
        net_t[tr.payee] += ZERO
        net_m[tr.payer] -= tr.amount
        net_m[tr.payee] += tr.amount
    agents = sorted(set(net_t) | set(net_m))
    return {a: (net_t[a], net_m[a]) for a in agents}
