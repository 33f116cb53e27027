"""Oscillating-decaying probes: symbol, cutoff, correction chain and corrector."""
from od_enclosure.core.od.profile import Cutoff, CutoffError, ODParams, leading_profile
from od_enclosure.core.od.solution import (
    ODSolution,
    assemble_od_solution,
    depth_ratio,
    layer_integrals,
    trace_defect,
    write_debug_csv,
)
from od_enclosure.core.od.symbol import SymbolData, SymbolDegeneracyError, build_symbol
from od_enclosure.core.od.transport import (
    ResolutionError,
    TransportChain,
    build_chain,
    transport_corrections,
)

__all__ = (
    "Cutoff",
    "CutoffError",
    "ODParams",
    "ODSolution",
    "ResolutionError",
    "SymbolData",
    "SymbolDegeneracyError",
    "TransportChain",
    "assemble_od_solution",
    "build_chain",
    "build_symbol",
    "depth_ratio",
    "layer_integrals",
    "leading_profile",
    "trace_defect",
    "transport_corrections",
    "write_debug_csv",
)
