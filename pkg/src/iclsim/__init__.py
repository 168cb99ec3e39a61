"""In-context learning of Gaussian single-index tasks with a small
MLP-embedding + linear-attention model, trained by one gradient step on the
features followed by ridge regression on the attention matrix."""

from .hermite import (BasisIndex, basis_size, chi_even_moment, enumerate_basis,
                      hermite, relu_hermite_coeff)
from .model import Gamma, ModelParams, forward, load_params, predict_queries, save_params
from .tasks import ProblemConfig, Prompt, TaskSpec, exact_correlation, sample_prompt, sample_task
from .training import TrainConfig, TrainReport, pretrain

__all__ = [
    "BasisIndex", "basis_size", "chi_even_moment", "enumerate_basis",
    "hermite", "relu_hermite_coeff",
    "Gamma", "ModelParams", "forward", "load_params", "predict_queries",
    "save_params",
    "ProblemConfig", "Prompt", "TaskSpec", "exact_correlation",
    "sample_prompt", "sample_task",
    "TrainConfig", "TrainReport", "pretrain",
]

__version__ = "0.1.0"
