"""Linear ICA by minimizing a neural mutual-information estimate.

A trainable linear encoder with a differentiable whitening layer is pitted
against a statistics network estimating the mutual information between each
encoder output and the rest (Donsker-Varadhan bound). Alternating their
updates drives the outputs toward independence, recovering the sources of a
linear mixture. A FastICA baseline, analytic Gaussian MI oracles, and a
finite-difference gradient checker validate the pipeline.
"""

from .autodiff import Tensor, backward, no_grad
from .cli import (ExperimentConfig, GaussianMiResult, analytic_gaussian_mi,
                  main, train_gaussian_mi)
from .errors import (ContractError, DomainError, MineIcaError, NumericalError,
                     ShapeError)
from .evaluation import (EvalReport, UnmixResult, amari_index,
                         effective_unmixing, evaluate_unmixing, fastica,
                         matched_correlation)
from .mine import (MineBatch, build_statistics_network, make_mine_batch,
                   mine_loss_component, mine_loss_total)
from .nn import EncoderModel, LinearLayer, Mlp, WhiteningLayer
from .optim import Nadam
from .signals import (BENCHMARK_MIXING_MATRIX, SignalSet, SourceSpec,
                      default_specs, make_signal_set, benchmark_signals)
from .trainer import TrainConfig, TrainTrace, TrainingAbort
from .trainer import run as train

__all__ = [
    "Tensor", "backward", "no_grad",
    "MineIcaError", "ShapeError", "DomainError", "ContractError",
    "NumericalError",
    "LinearLayer", "Mlp", "WhiteningLayer", "EncoderModel",
    "Nadam",
    "MineBatch", "build_statistics_network", "make_mine_batch",
    "mine_loss_component", "mine_loss_total",
    "SourceSpec", "SignalSet", "BENCHMARK_MIXING_MATRIX", "default_specs",
    "make_signal_set", "benchmark_signals",
    "TrainConfig", "TrainTrace", "TrainingAbort", "train",
    "UnmixResult", "EvalReport", "fastica", "matched_correlation",
    "amari_index", "effective_unmixing", "evaluate_unmixing",
    "ExperimentConfig", "GaussianMiResult", "analytic_gaussian_mi",
    "train_gaussian_mi", "main",
]
