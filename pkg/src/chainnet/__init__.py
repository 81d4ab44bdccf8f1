"""Multilateral netting of bilateral two-object trade books on chains and cycles."""

from .book import Contract, NettedEdge, bilateral_net, load_contracts, net_positions
from .decomposition import Chain, Cycle, Decomposition, decompose
from .groups import AssignedTrade, NetObligation, NettingGroup, check_maximal_netting, net_obligations, strip_m
from .network import TradeFlowNetwork, build_tfn, cut_flow, validate_flow_conditions
from .pipeline import run_pipeline
from .reattachment import attach_m, lambda_table
from .settlement import DeficiencyEvent, EscrowLedger, delivery_edge, execute, process_deficiency, settle

__all__ = [
    "AssignedTrade", "Chain", "Contract", "Cycle", "Decomposition", "DeficiencyEvent", "EscrowLedger",
    "NetObligation", "NettedEdge", "NettingGroup", "TradeFlowNetwork", "attach_m", "bilateral_net",
    "build_tfn", "check_maximal_netting", "cut_flow", "decompose", "delivery_edge", "execute",
    "lambda_table", "load_contracts", "net_obligations", "net_positions", "process_deficiency",
    "run_pipeline", "settle", "strip_m", "validate_flow_conditions",
]
