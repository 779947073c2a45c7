"""Posterior bootstrap sampling with Dirichlet-weighted empirical measures.

Each draw reweights the data with Dirichlet weights (optionally augmented
by ``T`` pseudo-observations from a prior sampler) and minimises the
chosen loss under that weighting.  Draw ``j`` uses its own generator seeded
from ``(master_seed, j)``, so results do not depend on how draws are
distributed over workers.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np
from scipy.special import logsumexp

from .distributions import Dataset, ModelSpec, build_empirical
from .losses import LossKind
from .optimizer import BfgsOptions, OptimResult, fit_theta

__all__ = [
    "NplConfig",
    "Draw",
    "PosteriorSamples",
    "PosteriorError",
    "draw_rng",
    "dirichlet_uniform",
    "dirichlet_augmented",
    "draw_weights",
    "posterior_bootstrap",
]

log = logging.getLogger(__name__)


class PosteriorError(RuntimeError):
    """Every bootstrap draw failed to converge."""


@dataclass(frozen=True)
class NplConfig:
    B: int = 200
    alpha: float = 0.0
    T: int = 0
    prior_sampler: Optional[Callable] = None
    master_seed: int = 0
    parallelism: int = 1
    options: BfgsOptions = field(default_factory=BfgsOptions)

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.alpha > 0 and (self.T < 1 or self.prior_sampler is None):
            raise ValueError("alpha > 0 needs T >= 1 and a prior_sampler")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass
class Draw:
    index: int
    params: np.ndarray
    objective: float
    converged: bool
    status: str
    init: Optional[np.ndarray] = None
    init_objective: float = float("nan")
    init_converged: bool = True


@dataclass
class PosteriorSamples:
    draws: List[Draw]
    loss: LossKind
    model: ModelSpec
    excluded_count: int
    B: int
    failed: List[Draw] = field(default_factory=list)

    @property
    def params(self) -> np.ndarray:
        """``(n_draws, param_dim)`` array of retained draws."""
        if not self.draws:
            return np.empty((0, self.model.param_dim))
        return np.array([d.params for d in self.draws])

    def __len__(self):
        return len(self.draws)

    def initializers(self) -> "PosteriorSamples":
        """The weighted-MLE starting points as a KLD posterior sample.

        They solve the KLD problem under the same Dirichlet weights, so
        this equals a separate KLD run with the same seed.
        """
        every = sorted(self.draws + self.failed, key=lambda d: d.index)
        out = [Draw(d.index, d.init, d.init_objective, d.init_converged, "init",
                    d.init, d.init_objective, d.init_converged) for d in every]
        kept = [d for d in out if d.converged]
        return PosteriorSamples(kept, LossKind.KLD, self.model, len(out) - len(kept), self.B,
                                [d for d in out if not d.converged])


def draw_rng(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for draw ``index``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), int(index)])))


def dirichlet_uniform(n: int, rng) -> np.ndarray:
    """Dir(1, ..., 1) weights via normalised standard exponentials."""
    if n < 1:
        raise ValueError("n must be >= 1")
    g = rng.standard_exponential(n)
    return g / g.sum()


def dirichlet_augmented(n: int, T: int, alpha: float, rng):
    """Dir(1 x n, alpha/T x T) split into data and pseudo-sample weights.

    Small-shape gammas are drawn on the log scale
    (``G(a) = G(a + 1) * U**(1/a)``) so ``alpha -> 0`` does not underflow.
    """
    if alpha <= 0 or T < 1:
        raise ValueError("need alpha > 0 and T >= 1")
    a = alpha / T
    log_data = np.log(rng.standard_exponential(n))
    log_pseudo = np.log(rng.standard_gamma(a + 1.0, T)) + np.log(rng.random(T)) / a
    logs = np.concatenate([log_data, log_pseudo])
    w = np.exp(logs - logsumexp(logs))
    w /= w.sum()
    return w[:n], w[n:]


def draw_weights(n: int, cfg: NplConfig, rng):
    """Weights (and pseudo-data) for one draw, as consumed by ``_one_draw``."""
    if cfg.alpha > 0:
        pseudo = cfg.prior_sampler(rng, cfg.T)
        w, wt = dirichlet_augmented(n, cfg.T, cfg.alpha, rng)
        return np.concatenate([w, wt]), pseudo
    return dirichlet_uniform(n, rng), None


def _one_draw(data: Dataset, model: ModelSpec, loss: LossKind, cfg: NplConfig, j: int) -> Draw:
    rng = draw_rng(cfg.master_seed, j)
    weights, pseudo = draw_weights(data.n, cfg, rng)
    fit_data = data if pseudo is None else data.concat(pseudo)
    emp = build_empirical(fit_data, weights)
    res: OptimResult = fit_theta(emp, fit_data, weights, model, loss, rng=rng,
                                 options=cfg.options)
    return Draw(j, res.params, res.objective, res.converged, res.status,
                res.init, res.init_objective, res.init_converged)


def _draw_chunk(args):
    data, model, loss, cfg, idx = args
    return [_one_draw(data, model, loss, cfg, j) for j in idx]


def posterior_bootstrap(data: Dataset, model: ModelSpec, loss, cfg: NplConfig,
                        executor=None) -> PosteriorSamples:
    """Run ``cfg.B`` independent draws and keep the converged ones.

    ``executor`` may be an existing ``concurrent.futures`` executor; otherwise
    a process pool of ``cfg.parallelism`` workers is created when above 1.
    """
    loss = LossKind(loss)
    if data.d != model.n_features:
        raise ValueError(f"model has {model.n_features} features, data has {data.d}")
    idx = list(range(cfg.B))
    workers = cfg.parallelism
    if executor is None and workers == 1:
        results = _draw_chunk((data, model, loss, cfg, idx))
    else:
        nchunks = min(cfg.B, 4 * workers)
        chunks = [idx[i::nchunks] for i in range(nchunks)]
        payload = [(data, model, loss, replace(cfg, parallelism=1), c) for c in chunks]
        if executor is None:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_draw_chunk, payload))
        else:
            parts = list(executor.map(_draw_chunk, payload))
        results = sorted((d for part in parts for d in part), key=lambda d: d.index)
    kept = [d for d in results if d.converged]
    failed = [d for d in results if not d.converged]
    if failed:
        log.info("excluded %d of %d draws (%s)", len(failed), cfg.B,
                 ", ".join(sorted({d.status for d in failed})))
    if not kept:
        raise PosteriorError(f"all {cfg.B} draws failed to converge")
    return PosteriorSamples(kept, loss, model, len(failed), cfg.B, failed)
