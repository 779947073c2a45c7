"""Benchmark runs comparing TVD and KLD posteriors on the synthetic scenarios.

One TVD posterior bootstrap per dataset also yields the KLD posterior: the
weighted MLE that initialises each TVD draw is exactly the KLD draw under the
same Dirichlet weights.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .distributions import ModelSpec
from .losses import LossKind
from .metrics import (
    EvalRecord,
    EvalReport,
    abs_error,
    param_error,
    predictive_likelihood,
)
from .npl import NplConfig, posterior_bootstrap
from .simgen import (
    EPS_GRID,
    K_GRID,
    EpsPoisson,
    NoisyProbit,
    SimConfig,
    ZeroInfBinomial,
    simulate,
    train_test_split,
)

__all__ = ["ScenarioRun", "SCENARIOS", "run_scenario", "summary_table", "derive_seed"]

log = logging.getLogger(__name__)

SCENARIOS = ("eps-poisson", "zero-binomial", "probit-synthetic", "mlp-synthetic")


def derive_seed(*keys) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0])


@dataclass
class ScenarioRun:
    """Resolved settings for one ``reproduce`` invocation."""

    name: str
    grid: Sequence = ()
    repeats: int = 20
    B: int = 200
    seed: int = 0
    parallelism: int = 1
    n_train: Optional[int] = None
    n_test: Optional[int] = None
    hidden: int = 8
    flip_eps: float = 0.1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}; choose from {SCENARIOS}")
        if not self.grid:
            self.grid = {"eps-poisson": K_GRID, "zero-binomial": EPS_GRID}.get(
                self.name, (self.flip_eps,))
        if self.n_train is None:
            self.n_train = {"eps-poisson": 400, "zero-binomial": 800}.get(self.name, 450)
        if self.n_test is None:
            self.n_test = {"eps-poisson": 100, "zero-binomial": 200}.get(self.name, 50)

    def as_dict(self) -> dict:
        return {
            "name": self.name, "grid": list(self.grid), "repeats": self.repeats,
            "B": self.B, "seed": self.seed, "parallelism": self.parallelism,
            "n_train": self.n_train, "n_test": self.n_test, "hidden": self.hidden,
            "flip_eps": self.flip_eps,
        }


def _cell(run: ScenarioRun, value):
    """(model, truth, truth index, dataset factory) for one grid value."""
    if run.name == "eps-poisson":
        sc = EpsPoisson(lam=3.0, eps=0.15, k=int(value))
        return ModelSpec.poisson(), 3.0, 0, sc
    if run.name == "zero-binomial":
        sc = ZeroInfBinomial(eps=float(value))
        return ModelSpec.binomial(sc.m, 1), sc.beta1, 1, sc
    sc = NoisyProbit(flip_eps=float(value))
    d = len(sc.beta) - 1
    if run.name == "probit-synthetic":
        return ModelSpec.probit(d), sc.beta[1], 1, sc
    return ModelSpec.mlp(d, run.hidden), float("nan"), 0, sc


def _record(run, setting, loss, rep, seed, samples, test, truth, idx):
    perr = param_error(samples, truth, idx) if np.isfinite(truth) else float("nan")
    return EvalRecord(run.name, setting, loss, rep, seed, perr,
                      abs_error(samples, test).tolist(),
                      predictive_likelihood(samples, test).tolist(),
                      len(samples), samples.excluded_count)


def run_scenario(run: ScenarioRun, executor=None) -> EvalReport:
    """Run every grid cell and repeat for both losses."""
    report = EvalReport(meta={"run": run.as_dict(), **run.meta})
    t0 = time.perf_counter()
    for ci, value in enumerate(run.grid):
        model, truth, idx, sc = _cell(run, value)
        setting = f"{value:g}"
        split_mode = run.name in ("probit-synthetic", "mlp-synthetic")
        if split_mode:
            full = simulate(SimConfig(sc, run.n_train, run.n_test, derive_seed(run.seed, ci)))
        for rep in range(run.repeats):
            dseed = derive_seed(run.seed, ci, rep)
            if split_mode:
                train, test = train_test_split(full, run.n_train, dseed)
            else:
                data = simulate(SimConfig(sc, run.n_train, run.n_test, dseed))
                train, test = train_test_split(data, run.n_train, dseed)
            cfg = NplConfig(B=run.B, master_seed=derive_seed(run.seed, ci, rep, 1),
                            parallelism=run.parallelism)
            tvd = posterior_bootstrap(train, model, LossKind.TVD, cfg, executor=executor)
            kld = tvd.initializers()
            for loss, samples in (("tvd", tvd), ("kld", kld)):
                report.add(_record(run, setting, loss, rep, dseed, samples, test, truth, idx))
        log.info("%s %s done after %.1fs", run.name, setting, time.perf_counter() - t0)
    # wall time stays out of the report so reruns are byte-identical
    log.info("%s finished in %.1fs", run.name, time.perf_counter() - t0)
    return report


def summary_table(report: EvalReport) -> list:
    """Rows of median/quartile summaries per (setting, loss)."""
    from .metrics import quantile_summary

    rows = []
    settings = []
    for r in report.records:
        if r.setting not in settings:
            settings.append(r.setting)
    for setting in settings:
        for loss in ("tvd", "kld"):
            recs = report.select(setting=setting, loss=loss)
            if not recs:
                continue
            row = {"scenario": recs[0].scenario, "setting": setting, "loss": loss}
            for metric in ("param_error", "abs_error", "pred_lik"):
                vals = report.pooled(metric, setting=setting, loss=loss)
                finite = vals[np.isfinite(vals)]
                q = quantile_summary(finite) if finite.size else {0.25: np.nan, 0.5: np.nan, 0.75: np.nan}
                row[f"{metric}_q25"], row[f"{metric}_q50"], row[f"{metric}_q75"] = q[0.25], q[0.5], q[0.75]
            row["excluded"] = sum(r.excluded for r in recs)
            row["draws"] = sum(r.n_draws + r.excluded for r in recs)
            rows.append(row)
    return rows
