"""Robust posterior bootstrap for discrete outcomes via total variation distance."""
from .distributions import (
    ConditionalPMF,
    DataError,
    Dataset,
    ModelSpec,
    NumericalDomainError,
    WeightedEmpirical,
    build_empirical,
    model_mean,
    model_pmf,
    read_csv,
    write_csv,
)
from .kernels import BACKEND
from .losses import LossKind, Objective, kld_loss, loss_grad, tvd_between, tvd_loss
from .npl import NplConfig, PosteriorError, PosteriorSamples, posterior_bootstrap
from .optimizer import BfgsOptions, OptimResult, bfgs, fit_theta, weighted_mle

__version__ = "0.1.0"
