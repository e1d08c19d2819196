# -*- coding: utf-8 -*-
"""
**Multi-source domain generalization for motor-imagery EEG**

Learn domain-invariant features from several labeled source domains by jointly minimizing
the marginal (MMD) and the class-conditional (class geometry) discrepancies between domains,
then classify samples of unseen target domains through a domain-weighted fusion of per-domain branches.

The library ships its own small reverse-mode automatic differentiation engine (`eegdg.tensor`),
the EEG preprocessing pipeline (`eegdg.signal`), a simulated benchmark (`eegdg.simulation`),
the network (`eegdg.model`), the objectives (`eegdg.losses`), the trainer (`eegdg.trainer`),
scores and baselines (`eegdg.evaluation`) and the ``eegdg`` command line (`eegdg.cli`).
"""

from .core.config import EegDgConfig
from .core.errors import (
    EegDgError,
    DimensionError,
    ConfigurationError,
    ContractError,
    FormatError,
    IngestionError,
    NumericError,
    DivergenceError,
)
from .core.session import EegDgSession
from .tensor import Tensor, no_grad, gradcheck
from .signal import (
    DomainDataset,
    RawRecording,
    SignalConfig,
    load_domain_file,
    save_domain_file,
)
from .simulation import SimConfig, generate
from .model import EegDgModel, ExtractorConfig, load_checkpoint, save_checkpoint
from .losses import KernelSpec, LossBreakdown
from .trainer import TrainConfig, TrainResult, MetricsLog, train, evaluate_on_target
from .evaluation import MetricsReport, accuracy, kappa, run_baselines
from .__version__ import __version__ as VERSION

# Objects part of the public API of the library
__all__ = [
    "EegDgConfig", "EegDgSession", "EegDgError", "DimensionError", "ConfigurationError",
    "ContractError", "FormatError", "IngestionError", "NumericError", "DivergenceError",
    "Tensor", "no_grad", "gradcheck", "DomainDataset", "RawRecording", "SignalConfig",
    "load_domain_file", "save_domain_file", "SimConfig", "generate", "EegDgModel",
    "ExtractorConfig", "load_checkpoint", "save_checkpoint", "KernelSpec", "LossBreakdown",
    "TrainConfig", "TrainResult", "MetricsLog", "train", "evaluate_on_target",
    "MetricsReport", "accuracy", "kappa", "run_baselines",
]
