"""Synthetic benchmark generators and random train/test splits."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
from scipy.special import expit, ndtr

from .distributions import DataError, Dataset

__all__ = [
    "EpsPoisson",
    "ZeroInfBinomial",
    "NoisyProbit",
    "SimConfig",
    "K_GRID",
    "EPS_GRID",
    "gen_eps_poisson",
    "gen_zero_inflated_binomial",
    "gen_noisy_probit",
    "simulate",
    "train_test_split",
]

K_GRID = (0, 5, 10, 15, 20)
EPS_GRID = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25)


@dataclass(frozen=True)
class EpsPoisson:
    """``y = Poisson(lam) + k * Bernoulli(eps)``."""

    lam: float = 3.0
    eps: float = 0.15
    k: int = 10

    def __post_init__(self):
        if not 0 <= self.eps < 1:
            raise ValueError("eps must lie in [0, 1)")
        if self.k < 0 or int(self.k) != self.k:
            raise ValueError("k must be a nonnegative integer")


@dataclass(frozen=True)
class ZeroInfBinomial:
    """Binomial(m, logistic(beta0 + beta1 * level)) zeroed with probability eps."""

    beta0: float = 0.8
    beta1: float = 0.25
    m: int = 8
    eps: float = 0.1
    levels: int = 4

    def __post_init__(self):
        if not 0 <= self.eps <= 1:
            raise ValueError("eps must lie in [0, 1]")


@dataclass(frozen=True)
class NoisyProbit:
    """Probit labels on standard-normal covariates, flipped with probability ``flip_eps``.

    ``beta[0]`` is the intercept; the covariate dimension is ``len(beta) - 1``.
    """

    beta: Tuple[float, ...] = (0.5, 1.5, -1.0)
    flip_eps: float = 0.1


Scenario = Union[EpsPoisson, ZeroInfBinomial, NoisyProbit]


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario = field(default_factory=EpsPoisson)
    n_train: int = 400
    n_test: int = 100
    seed: int = 0

    @property
    def n(self) -> int:
        return self.n_train + self.n_test


def gen_eps_poisson(cfg: SimConfig, return_flags: bool = False):
    sc = cfg.scenario
    if not isinstance(sc, EpsPoisson):
        raise TypeError("gen_eps_poisson needs an EpsPoisson scenario")
    rng = np.random.default_rng(cfg.seed)
    base = rng.poisson(sc.lam, cfg.n)
    flags = rng.random(cfg.n) < sc.eps
    data = Dataset.from_outcomes(base + sc.k * flags)
    return (data, flags) if return_flags else data


def gen_zero_inflated_binomial(cfg: SimConfig) -> Dataset:
    """Levels are stored as the integer score ``0..levels-1`` in one column.

    Use :func:`tvdnpl.distributions.one_hot` for a dummy-coded design.
    """
    sc = cfg.scenario
    if not isinstance(sc, ZeroInfBinomial):
        raise TypeError("gen_zero_inflated_binomial needs a ZeroInfBinomial scenario")
    rng = np.random.default_rng(cfg.seed)
    level = rng.integers(0, sc.levels, cfg.n)
    pi = expit(sc.beta0 + sc.beta1 * level)
    y = rng.binomial(sc.m, pi)
    keep = rng.random(cfg.n) >= sc.eps
    return Dataset(level.astype(np.float64).reshape(-1, 1), y * keep,
                   covariate_kind="discrete", feature_names=("level",))


def gen_noisy_probit(cfg: SimConfig) -> Dataset:
    sc = cfg.scenario
    if not isinstance(sc, NoisyProbit):
        raise TypeError("gen_noisy_probit needs a NoisyProbit scenario")
    rng = np.random.default_rng(cfg.seed)
    beta = np.asarray(sc.beta, dtype=np.float64)
    d = len(beta) - 1
    X = rng.standard_normal((cfg.n, d))
    y = (rng.random(cfg.n) < ndtr(beta[0] + X @ beta[1:])).astype(np.int64)
    flip = rng.random(cfg.n) < sc.flip_eps
    return Dataset(X, y ^ flip, covariate_kind="continuous",
                   feature_names=tuple(f"x{k}" for k in range(1, d + 1)))


def simulate(cfg: SimConfig) -> Dataset:
    sc = cfg.scenario
    if isinstance(sc, EpsPoisson):
        return gen_eps_poisson(cfg)
    if isinstance(sc, ZeroInfBinomial):
        return gen_zero_inflated_binomial(cfg)
    if isinstance(sc, NoisyProbit):
        return gen_noisy_probit(cfg)
    raise TypeError(f"unknown scenario {sc!r}")


def train_test_split(data: Dataset, n_train: int, seed) -> Tuple[Dataset, Dataset]:
    """Uniform random permutation; the first ``n_train`` rows train."""
    if not 0 < n_train < data.n:
        raise DataError(f"n_train={n_train} must lie strictly between 0 and n={data.n}")
    perm = np.random.default_rng(seed).permutation(data.n)
    return data.subset(perm[:n_train]), data.subset(perm[n_train:])
