"""Crossbar-core network: data model, tiling compiler, validator and simulator."""

from .compiler import TileLayout, compile_flow_network
from .fabric import read_spike_log, simulate, write_spike_log
from .model import (
    CORE_SIZE,
    DS_POPULATIONS,
    AxonKind,
    CoreSpec,
    Layer,
    NetworkSpec,
    NeuronId,
    Population,
    SpikeLog,
    SpikeRecord,
    axons_per_core,
    neurons_per_core,
)
from .placement import read_placement, write_placement
from .validate import ValidationReport, validate

__all__ = [
    "CORE_SIZE",
    "DS_POPULATIONS",
    "AxonKind",
    "CoreSpec",
    "Layer",
    "NetworkSpec",
    "NeuronId",
    "Population",
    "SpikeLog",
    "SpikeRecord",
    "TileLayout",
    "ValidationReport",
    "axons_per_core",
    "compile_flow_network",
    "neurons_per_core",
    "read_placement",
    "read_spike_log",
    "simulate",
    "validate",
    "write_placement",
    "write_spike_log",
]
