"""Parameter error, absolute prediction error and predictive likelihood."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .distributions import Dataset, ModelSpec, model_means, model_pmf_at
from .npl import PosteriorSamples

__all__ = [
    "param_error",
    "abs_error",
    "predictive_likelihood",
    "quantile_summary",
    "EvalRecord",
    "EvalReport",
]

DEFAULT_PROBS = (0.25, 0.5, 0.75)


def natural_params(model: ModelSpec, params: np.ndarray) -> np.ndarray:
    """Map optimiser parameters to the scale reported in tables (Poisson rate)."""
    params = np.asarray(params, dtype=np.float64)
    if model.family == "poisson" and model.n_features == 0:
        return np.exp(params)
    return params


def param_error(samples: PosteriorSamples, truth: float, index: int = 0) -> float:
    """Mean over draws of ``|theta_j[index] - truth|`` on the natural scale."""
    if len(samples) == 0:
        raise ValueError("no posterior draws")
    if not 0 <= index < samples.model.param_dim:
        raise IndexError(f"parameter index {index} out of range")
    vals = natural_params(samples.model, samples.params)[:, index]
    return float(np.mean(np.abs(vals - truth)))


def _per_draw(samples, test, fn):
    if len(samples) == 0:
        raise ValueError("no posterior draws")
    if test.n == 0:
        raise ValueError("empty test set")
    acc = np.zeros(test.n)
    for theta in samples.params:
        acc += fn(theta)
    return acc / len(samples)


def abs_error(samples: PosteriorSamples, test: Dataset, model: ModelSpec = None) -> np.ndarray:
    """Per test row, mean over draws of ``|E_theta[y | x] - y|``."""
    model = model or samples.model
    y = test.y.astype(np.float64)
    return _per_draw(samples, test, lambda th: np.abs(model_means(model, th, test.X) - y))


def predictive_likelihood(samples: PosteriorSamples, test: Dataset,
                          model: ModelSpec = None) -> np.ndarray:
    """Per test row, mean over draws of ``f_theta(y | x)``."""
    model = model or samples.model
    out = _per_draw(samples, test, lambda th: model_pmf_at(model, th, test.X, test.y))
    return np.clip(out, 0.0, 1.0)


def quantile_summary(values, probs: Sequence[float] = DEFAULT_PROBS) -> Dict[float, float]:
    """Linear-interpolation quantiles keyed by probability."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("quantiles of an empty sample")
    qs = np.quantile(values, probs, method="linear")
    return {float(p): float(q) for p, q in zip(probs, qs)}


@dataclass
class EvalRecord:
    """Metrics for one dataset (or split) and one loss."""

    scenario: str
    setting: str
    loss: str
    repeat: int
    seed: int
    param_error: float
    abs_error: List[float]
    pred_lik: List[float]
    n_draws: int
    excluded: int

    def to_json(self) -> str:
        row = {
            "scenario": self.scenario,
            "setting": self.setting,
            "loss": self.loss,
            "repeat": self.repeat,
            "seed": self.seed,
            "param_error": self.param_error,
            "abs_error_q": list(quantile_summary(self.abs_error).values()),
            "pred_lik_q": list(quantile_summary(self.pred_lik).values()),
            "n_draws": self.n_draws,
            "excluded": self.excluded,
        }
        return json.dumps(row, allow_nan=True)


@dataclass
class EvalReport:
    records: List[EvalRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, rec: EvalRecord):
        self.records.append(rec)

    def select(self, **match) -> List[EvalRecord]:
        return [r for r in self.records
                if all(getattr(r, k) == v for k, v in match.items())]

    def pooled(self, metric: str, **match) -> np.ndarray:
        """Concatenate a per-row metric (or stack ``param_error``) over matches."""
        recs = self.select(**match)
        if metric == "param_error":
            return np.array([r.param_error for r in recs])
        return np.concatenate([getattr(r, metric) for r in recs]) if recs else np.empty(0)

    def median(self, metric: str, **match) -> float:
        vals = self.pooled(metric, **match)
        return float(np.median(vals)) if vals.size else math.nan

    def to_jsonl(self) -> str:
        lines = [json.dumps({"meta": self.meta}, sort_keys=True)]
        lines += [r.to_json() for r in self.records]
        return "\n".join(lines) + "\n"
