"""TVD and KLD losses between a weighted empirical and a model, with gradients."""
from __future__ import annotations

import enum
import math
from typing import Mapping

import numpy as np

from . import kernels
from .distributions import (
    ConditionalPMF,
    ModelSpec,
    NumericalDomainError,
    WeightedEmpirical,
)

__all__ = [
    "LossKind",
    "tvd_between",
    "tvd_loss",
    "kld_loss",
    "loss_grad",
    "Objective",
]


class LossKind(str, enum.Enum):
    TVD = "tvd"
    KLD = "kld"


def tvd_between(p: Mapping[int, float], q: ConditionalPMF) -> float:
    """Half the L1 distance between a finite pmf ``p`` and ``q``.

    ``q.head`` must cover the support of ``p``; mass of ``q`` outside its
    head is ``q.tail_mass``, where ``p`` is zero, so the result is exact.
    """
    if any(v < 0 for v in p.values()):
        raise ValueError("p has negative mass")
    if abs(sum(p.values()) - 1.0) > 1e-10:
        raise ValueError("p does not sum to one")
    missing = set(p) - set(q.head)
    if missing:
        raise ValueError(f"q is undefined on outcomes {sorted(missing)}")
    total = sum(abs(p.get(y, 0.0) - qy) for y, qy in q.head.items())
    return 0.5 * (total + q.tail_mass)


class Objective:
    """Loss and gradient of one weighted empirical as a function of ``params``.

    Caches the grouped arrays so repeated evaluation inside an optimiser
    only pays for the kernel call.
    """

    def __init__(self, kind, emp: WeightedEmpirical, model: ModelSpec, backend=None):
        self.kind = LossKind(kind)
        self.model = model
        self.k = backend if backend is not None else kernels
        self.family = model.kernel_family
        self.m = model.kernel_trials
        if self.kind is LossKind.TVD:
            self.X = np.ascontiguousarray(emp.xs)
            self.offsets = np.ascontiguousarray(emp.offsets, dtype=np.int64)
            self.outcomes = np.ascontiguousarray(emp.outcomes, dtype=np.int64)
            self.probs = np.ascontiguousarray(emp.cond_probs)
            self.w = np.ascontiguousarray(emp.group_weight)
        else:
            live = emp.weights > 0
            self.X = np.ascontiguousarray(emp.data.X[live])
            self.outcomes = np.ascontiguousarray(emp.data.y[live], dtype=np.int64)
            self.w = np.ascontiguousarray(emp.weights[live])
        if self.X.shape[1] != model.n_features:
            raise ValueError(f"model has {model.n_features} features, data has {self.X.shape[1]}")
        self.mlp = model.family == "mlp"
        if not self.mlp:
            # intercept column folded in so eta and its pullback are one matmul each
            self.design = np.hstack([np.ones((self.X.shape[0], 1)), self.X])
        self.n_evals = 0

    def _eval(self, params):
        self.n_evals += 1
        params = np.asarray(params, dtype=np.float64)
        if self.mlp:
            eta, cache = self.k.mlp_forward(params, self.X, self.model.hidden)
        else:
            eta, cache = self.design @ params, None
        if self.kind is LossKind.TVD:
            val, deta = self.k.tvd_eta(self.family, self.m, eta, self.offsets,
                                       self.outcomes, self.probs, self.w)
        else:
            val, deta = self.k.kld_eta(self.family, self.m, eta, self.outcomes, self.w)
        return val, deta, params, cache

    def _pullback(self, params, cache, deta):
        if self.mlp:
            return self.k.mlp_backward(params, self.X, cache, deta, self.model.hidden)
        return deta @ self.design

    def value(self, params) -> float:
        val = self._eval(params)[0]
        if math.isnan(val):
            raise NumericalDomainError(f"{self.kind.value} loss is NaN")
        return val

    def __call__(self, params):
        """``(loss, gradient)`` at ``params``."""
        val, deta, params, cache = self._eval(params)
        if math.isnan(val):
            raise NumericalDomainError(f"{self.kind.value} loss is NaN")
        return val, self._pullback(params, cache, deta)


def tvd_loss(emp: WeightedEmpirical, model: ModelSpec, params) -> float:
    """Marginal-weighted average of per-group conditional TVDs."""
    params = model.check(params)
    if not np.all(np.isfinite(params)):
        raise NumericalDomainError("non-finite parameters")
    return Objective(LossKind.TVD, emp, model).value(params)


def kld_loss(emp: WeightedEmpirical, model: ModelSpec, params) -> float:
    """Weighted negative log-likelihood over the original rows.

    Returns ``inf`` when some positively weighted row has zero model mass.
    """
    params = model.check(params)
    if not np.all(np.isfinite(params)):
        raise NumericalDomainError("non-finite parameters")
    return Objective(LossKind.KLD, emp, model).value(params)


def loss_grad(kind, emp: WeightedEmpirical, model: ModelSpec, params) -> np.ndarray:
    """Analytic (sub)gradient of the chosen loss.  TVD ties use sign 0."""
    params = model.check(params)
    return Objective(kind, emp, model)(params)[1]
