"""Spiking relational-network P controller for a single simulated joint."""

from .control import DiscreteSequence, LoopConfig, Sinusoid, Step, Trajectory, compute_command, run_closed_loop
from .errors import ConfigurationError, TopologyError
from .experiments import ExperimentConfig, dtp_profile, run_experiment
from .metrics import overshoot, rise_time, rmse
from .plant import Plant, PlantConfig
from .popcode import EncoderConfig, TraceVector, decode_com, encode_value, update_trace
from .snn import NetworkGraph, NeuronParams, PoissonSource, Simulator, SpikeEvent, apply_mismatch, step_network
from .threeway import TopologyConfig, WeightTable, build_network, build_threeway, diag_index, validate_topology

__all__ = [
    "ConfigurationError", "DiscreteSequence", "EncoderConfig", "ExperimentConfig", "LoopConfig",
    "NetworkGraph", "NeuronParams", "Plant", "PlantConfig", "PoissonSource", "Simulator", "Sinusoid",
    "SpikeEvent", "Step", "TopologyConfig", "TopologyError", "TraceVector", "Trajectory", "WeightTable",
    "apply_mismatch", "build_network", "build_threeway", "compute_command", "decode_com", "diag_index",
    "dtp_profile", "encode_value", "overshoot", "rise_time", "rmse", "run_closed_loop", "run_experiment",
    "step_network", "update_trace", "validate_topology",
]
