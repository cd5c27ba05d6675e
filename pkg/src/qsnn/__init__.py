"""Burst-spiking memristive neurons driving an open qubit-cavity system."""

from .decision import AwarenessClass, ClassificationThresholds, InformationPacket, classify
from .quantum import FockConfig, HamiltonianParams, ThetaSchedule, evolve
from .spiking import MemristanceLaw, NeuronCircuitParams, NeuronNetworkState, count_spikes, simulate

__version__ = "0.1.0"

__all__ = [
    "AwarenessClass",
    "ClassificationThresholds",
    "FockConfig",
    "HamiltonianParams",
    "InformationPacket",
    "MemristanceLaw",
    "NeuronCircuitParams",
    "NeuronNetworkState",
    "ThetaSchedule",
    "classify",
    "count_spikes",
    "evolve",
    "simulate",
]
