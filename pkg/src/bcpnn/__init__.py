"""Feedforward BCPNN: Hebbian-Bayesian learning with structural plasticity."""

from .encoding import DogFilterBank, encode_dog, encode_gmm, encode_intensity, fit_gmm
from .errors import BcpnnError, ConfigurationError, LoadError
from .evaluation import MetricsReport, ProbeConfig, evaluate, train_probe
from .io import load_checkpoint, load_idx, save_checkpoint
from .network import forward, hidden_codes, init_network
from .oracle import em_oracle
from .plasticity import PlasticityConfig, structural_step, update_traces
from .state import LayerGeometry, NetworkState, Traces
from .trainer import TrainingConfig, train, train_unsupervised

__all__ = [
    "BcpnnError",
    "ConfigurationError",
    "DogFilterBank",
    "LayerGeometry",
    "LoadError",
    "MetricsReport",
    "NetworkState",
    "PlasticityConfig",
    "ProbeConfig",
    "Traces",
    "TrainingConfig",
    "em_oracle",
    "encode_dog",
    "encode_gmm",
    "encode_intensity",
    "evaluate",
    "fit_gmm",
    "forward",
    "hidden_codes",
    "init_network",
    "load_checkpoint",
    "load_idx",
    "save_checkpoint",
    "structural_step",
    "train",
    "train_probe",
    "train_unsupervised",
    "update_traces",
]
