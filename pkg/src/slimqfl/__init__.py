"""Seeded simulator of slimmable quantum federated learning.

A 4-qubit statevector engine hosts a quantum classifier whose circuit
angles and measurement poles train separately; devices learn federatedly
over a simulated Rayleigh-fading uplink that opportunistically transmits
pole-only or whole models, with vanilla-QFL, pole-only, and classical
dense baselines.
"""

from .channel import ChannelConfig, ChannelOutcome, Decision
from .classical import DenseParams
from .data import DeviceShard, MiniDataset, RawDataset
from .experiment import ExperimentConfig, load_config, run_experiment
from .federation import GlobalModel, LrSchedule, RoundRecord, RunResult, Scheme, run_scheme
from .qsnn import QsnnConfig, QsnnParams
from .statevector import GateOp, StateVector

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig",
    "ChannelOutcome",
    "Decision",
    "DenseParams",
    "DeviceShard",
    "ExperimentConfig",
    "GateOp",
    "GlobalModel",
    "LrSchedule",
    "MiniDataset",
    "QsnnConfig",
    "QsnnParams",
    "RawDataset",
    "RoundRecord",
    "RunResult",
    "Scheme",
    "StateVector",
    "load_config",
    "run_experiment",
    "run_scheme",
    "__version__",
]
