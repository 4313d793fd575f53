"""Logarithmic temporal coding for spiking networks with exponentiate-and-fire neurons."""
from .coding import (ExponentRange, LaVariant, SpikeTrain, decode_ltc, encode_ltc, la,
                     multi_power_la, single_power_la, spike_count_bound)
from .ef_neuron import EfConfig, simulate_neuron
from .ann import AnalogNetwork, TrainConfig, build_network, forward, train
from .converter import convert, verify_conversion
from .runtime import CostCounters, SnnNetwork, run, run_batch

__version__ = "0.1.0"

__all__ = [
    "ExponentRange", "LaVariant", "SpikeTrain", "decode_ltc", "encode_ltc", "la",
    "multi_power_la", "single_power_la", "spike_count_bound", "EfConfig", "simulate_neuron",
    "AnalogNetwork", "TrainConfig", "build_network", "forward", "train", "convert",
    "verify_conversion", "CostCounters", "SnnNetwork", "run", "run_batch",
]
