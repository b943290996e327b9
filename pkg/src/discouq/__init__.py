"""Noise-conditioned neural networks trained on the energy score.

A deterministic network ``f(x, a)`` fed with uniform noise ``a`` produces an
ensemble forecast of ``p(y | x)``. The package contains the network and its
hand-written reverse-mode gradients, the loss, a trainer, distribution
metrics, synthetic and tabular data, and a numerical propriety check.
"""

from .core import DivergenceError, ShapeError, TapeError
from .data import Dataset, QuantileNormalTransform, generate, load_csv, qnt_apply, qnt_fit, qnt_invert
from .inference import EnsembleForecast, predict_ensemble, predict_ensembles, sample_function, sample_functions
from .loss import energy_loss, energy_loss_grad, minibatch_loss
from .model import ModelConfig, ModelParams, forward, init_params, load_params, save_params
from .trainer import TrainConfig, TrainHistory, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DivergenceError", "EnsembleForecast", "ModelConfig", "ModelParams",
    "QuantileNormalTransform", "ShapeError", "TapeError", "TrainConfig", "TrainHistory",
    "energy_loss", "energy_loss_grad", "forward", "generate", "init_params", "load_csv",
    "load_params", "minibatch_loss", "predict_ensemble", "predict_ensembles", "qnt_apply",
    "qnt_fit", "qnt_invert", "sample_function", "sample_functions", "save_params", "train",
]
