"""Simulator of a cortex-inspired accelerator: CLA on a torus network-on-chip."""

from .accel import Machine, PacketFormats, Placement, map_cortex, verify_against_reference
from .cla_ref import CortexConfig, CortexState, EpochResult, ReferenceCortex
from .errors import ConfigError, ProtocolError, SimulationFault, UsageError
from .noc import Kind, NetConfig, Network, Packet
from .sdr import Sdr, SdrParams, encode, overlap, union_sdr

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "CortexConfig", "CortexState", "EpochResult", "Kind", "Machine", "NetConfig",
    "Network", "PacketFormats", "Packet", "Placement", "ProtocolError", "ReferenceCortex", "Sdr",
    "SdrParams", "SimulationFault", "UsageError", "encode", "map_cortex", "overlap", "union_sdr",
    "verify_against_reference",
]
