"""Protocol-based quantumness benchmarks for noisy device models.

Two parties, Alice and Bob, sit on disjoint blocks of a device's coupling
graph; qubits travel between them by swaps. Each protocol's success rate is
compared with the best classical strategy, per placement, per distance and
as a five-component vector for the whole device.
"""

from .bench import (
    DeviceTooSmall,
    NoPassingSubchip,
    ProtocolRunResult,
    ProtocolVector,
    SubchipResult,
    TopologyMismatch,
    compare_reports,
    find_effective_subchip,
    protocol_vector,
    run_placement,
    scan_protocol,
)
from .fixtures import device, noise_model
from .noise import NoiseModel, load_noise_model
from .protocols import THRESHOLD_VECTOR, ProtocolKind, ProtocolSpec, is_quantum
from .topology import ConnectivityGraph, Placement, enumerate_placements, load_device

__version__ = "0.1.0"

__all__ = [
    "ConnectivityGraph",
    "DeviceTooSmall",
    "NoPassingSubchip",
    "NoiseModel",
    "Placement",
    "ProtocolKind",
    "ProtocolRunResult",
    "ProtocolSpec",
    "ProtocolVector",
    "SubchipResult",
    "THRESHOLD_VECTOR",
    "TopologyMismatch",
    "compare_reports",
    "device",
    "enumerate_placements",
    "find_effective_subchip",
    "is_quantum",
    "load_device",
    "load_noise_model",
    "noise_model",
    "protocol_vector",
    "run_placement",
    "scan_protocol",
]
