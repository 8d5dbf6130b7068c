"""Sensor network simulation: topology, consensus and transmission accounting."""
from .topology import (
    TopologyError,
    NotPerfectSquare,
    NotConnected,
    SensorNetwork,
    ConsensusWeights,
    build_jittered_grid,
    metropolis_weights,
    save_topology,
    load_topology,
)
from .consensus import (
    run_consensus,
    consensus_sum,
    ConsensusSummer,
    ExactSummer,
    Summer,
)
from .ledger import TransmissionLedger
