"""Monte Carlo and exact checks of the TVD estimator's theoretical guarantees.

Every check works on instances whose population quantities can be computed
exactly (finite spaces, or Poisson pmfs summed until the remaining mass is
below 1e-300), so the only randomness is on the estimated side.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit, gammaln

from .distributions import Dataset, ModelSpec, build_empirical
from .losses import LossKind, Objective
from .optimizer import fit_theta

__all__ = [
    "BoundReport",
    "FiniteFamily",
    "bernoulli_logit_family",
    "joint_tvd",
    "check_robustness_bound",
    "check_concentration",
    "concentration_delta",
    "check_consistency",
    "CLAIMS",
    "run_claims",
]


@dataclass
class BoundReport:
    claim: str
    trials: int
    observed: float
    bound: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), default=float)


@dataclass(frozen=True)
class FiniteFamily:
    """Conditional tables ``cond(theta)[x, y]`` with a fixed covariate marginal."""

    px: np.ndarray
    cond: Callable[[float], np.ndarray]

    def joint(self, theta) -> np.ndarray:
        return self.cond(theta) * self.px[:, None]


def bernoulli_logit_family(px=(0.5, 0.5), slope=1.0) -> FiniteFamily:
    """``P(y=1 | x) = logistic(theta + slope * x)`` on ``x = 0..K_x-1``."""
    px = np.asarray(px, dtype=np.float64)
    xs = np.arange(len(px))

    def cond(theta):
        p1 = expit(theta + slope * xs)
        return np.column_stack([1.0 - p1, p1])

    return FiniteFamily(px, cond)


def joint_tvd(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def _estimated_tvd(counts: np.ndarray, cond: np.ndarray) -> float:
    """Plug-in estimator from a table of cell counts (rows x, columns y)."""
    n = counts.sum()
    rows = counts.sum(axis=1, keepdims=True)
    live = rows[:, 0] > 0
    phat = counts[live] / rows[live]
    return float(np.sum(rows[live, 0] / n * 0.5 * np.abs(phat - cond[live]).sum(axis=1)))


def check_robustness_bound(family: FiniteFamily, q: np.ndarray, eps: float,
                           theta_grid: Sequence[float], theta_true: float,
                           sample_sizes: Sequence[int] = (1000, 10000),
                           slack: float = 0.05, seed: int = 0,
                           tol: float = 1e-12) -> BoundReport:
    """``|TVD(c, p_theta) - TVD(p_true, p_theta)| <= 2 eps`` on a grid.

    ``c = (1 - eps) p_true + eps q`` is built exactly.  The empirical version
    draws samples from ``c`` and compares the plug-in estimate against the
    uncontaminated TVD with an extra allowance ``slack``.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != family.joint(theta_true).shape or np.any(q < 0) or abs(q.sum() - 1) > 1e-12:
        raise ValueError("q must be a pmf on the family's product space")
    ptrue = family.joint(theta_true)
    c = (1.0 - eps) * ptrue + eps * q
    exact_gap = 0.0
    for th in theta_grid:
        pth = family.joint(th)
        exact_gap = max(exact_gap, abs(joint_tvd(c, pth) - joint_tvd(ptrue, pth)))
    rng = np.random.default_rng(seed)
    emp_gap = {}
    for n in sample_sizes:
        counts = rng.multinomial(n, c.ravel()).reshape(c.shape)
        emp_gap[n] = max(abs(_estimated_tvd(counts, family.cond(th)) - joint_tvd(ptrue, family.joint(th)))
                         for th in theta_grid)
    passed = exact_gap <= 2 * eps + tol and all(g <= 2 * eps + slack for g in emp_gap.values())
    return BoundReport("robustness", len(theta_grid), exact_gap, 2 * eps, passed,
                       {"eps": eps, "empirical_gap": {str(k): v for k, v in emp_gap.items()},
                        "empirical_slack": slack})


def concentration_delta(n: int, eps: float, Kx: int, Ky: int) -> float:
    return (2.0 ** (Ky + Kx + 1) - 4.0) * math.exp(-n * eps * eps / 2.0)


DEFAULT_JOINT_2X2 = np.array([[0.3, 0.2], [0.1, 0.4]])


def _cell_dataset(Kx, Ky):
    xs, ys = np.meshgrid(np.arange(Kx), np.arange(Ky), indexing="ij")
    return Dataset(xs.ravel().astype(np.float64).reshape(-1, 1), ys.ravel())


def check_concentration(Kx: int = 2, Ky: int = 2, theta=(0.2, 1.0), true_joint=None,
                        n_grid: Sequence[int] = (125, 500, 2000), trials: int = 2000,
                        eps: float = 0.2, seed: int = 0, rate_tol: float = 0.3) -> BoundReport:
    """Exceedance frequency of ``|TVD_hat - TVD| > eps`` against ``delta_n``.

    The model is binomial(``Ky - 1``) with logit ``theta[0] + theta[1] * x``
    on ``x = 0..Kx-1``; the estimate is computed by the library's TVD loss
    on a weighted cell dataset, so the check covers the production path.
    The RMS error must shrink like ``1/sqrt(n)`` within ``rate_tol``.
    """
    if Kx * Ky > 12:
        raise ValueError("keep K_x * K_y <= 12")
    rng = np.random.default_rng(seed)
    if true_joint is None:
        if (Kx, Ky) == (2, 2):
            true_joint = DEFAULT_JOINT_2X2
        else:
            true_joint = rng.dirichlet(np.full(Kx * Ky, 2.0)).reshape(Kx, Ky)
    true_joint = np.asarray(true_joint, dtype=np.float64)
    model = ModelSpec.binomial(Ky - 1, 1)
    theta = np.asarray(theta, dtype=np.float64)
    cells = _cell_dataset(Kx, Ky)
    cond = np.exp(_binom_logpmf(Ky - 1, theta[0] + theta[1] * np.arange(Kx)))
    px = true_joint.sum(axis=1)
    truth = float(np.sum(px * 0.5 * np.abs(true_joint / px[:, None] - cond).sum(axis=1)))
    rows = []
    ok = True
    for n in n_grid:
        errs = np.empty(trials)
        for t in range(trials):
            counts = rng.multinomial(n, true_joint.ravel())
            emp = build_empirical(cells, counts / n)
            errs[t] = Objective(LossKind.TVD, emp, model).value(theta) - truth
        freq = float(np.mean(np.abs(errs) > eps))
        delta = concentration_delta(n, eps, Kx, Ky)
        vacuous = delta >= 1.0
        if not vacuous and freq > delta:
            ok = False
        rows.append({"n": n, "exceedance": freq, "delta": delta, "vacuous": vacuous,
                     "rms": float(np.sqrt(np.mean(errs ** 2)))})
    worst = 0.0
    for a, b in zip(rows, rows[1:]):
        expected = math.sqrt(b["n"] / a["n"])
        ratio = a["rms"] / b["rms"]
        a["rms_ratio_next"] = ratio
        worst = max(worst, abs(ratio / expected - 1.0))
        if abs(ratio / expected - 1.0) > rate_tol:
            ok = False
        # doubling n must not raise exceedance beyond 2 Monte Carlo sds
        sd = math.sqrt(max(a["exceedance"] * (1 - a["exceedance"]), 1.0 / trials) / trials)
        if b["exceedance"] > a["exceedance"] + 2 * sd:
            ok = False
    return BoundReport("concentration", trials, worst, rate_tol, ok,
                       {"truth": truth, "eps": eps, "K_x": Kx, "K_y": Ky, "by_n": rows})


def _binom_logpmf(m, eta):
    y = np.arange(m + 1)
    eta = np.asarray(eta, dtype=np.float64)[:, None]
    return (gammaln(m + 1) - gammaln(y + 1) - gammaln(m - y + 1)
            - m * np.logaddexp(0.0, eta) + y * eta)


def _poisson_pmf_table(lams, ymax):
    y = np.arange(ymax + 1)
    lams = np.asarray(lams, dtype=np.float64)[:, None]
    return np.exp(y * np.log(lams) - lams - gammaln(y + 1))


def contaminated_poisson_pmf(lam: float, eps: float, k: int, ymax: int = 400) -> np.ndarray:
    base = _poisson_pmf_table([lam], ymax)[0]
    shifted = np.zeros_like(base)
    shifted[k:] = base[: len(base) - k]
    return (1 - eps) * base + eps * shifted


def poisson_tvd_minimiser(pmf: np.ndarray, lo=0.05, hi=40.0, step=1e-3) -> float:
    """Grid oracle for ``argmin_lambda TVD(pmf, Poisson(lambda))``.

    ``pmf`` lives on ``0..len(pmf)-1``; Poisson mass beyond that is added
    as tail.  A coarse grid is refined twice around its minimum.
    """
    ymax = len(pmf) - 1

    def tvd(lams):
        table = _poisson_pmf_table(lams, ymax)
        tail = np.clip(1.0 - table.sum(axis=1), 0.0, None)
        return 0.5 * (np.abs(table - pmf).sum(axis=1) + tail)

    grid = np.arange(lo, hi, step)
    best = grid[np.argmin(tvd(grid))]
    for width, fine in ((step, step / 100), (step / 100, step / 10000)):
        grid = np.arange(best - width, best + width, fine)
        best = grid[np.argmin(tvd(grid))]
    return float(best)


def check_consistency(lam: float = 3.0, eps: float = 0.15, k: int = 10,
                      n_grid: Sequence[int] = (100, 400, 1600), trials: int = 50,
                      seed: int = 0, final_tol: float = 0.05) -> BoundReport:
    """Minimisers of the estimated TVD approach the population minimiser.

    The truth is the shifted-contamination Poisson mixture; the target is
    found by grid search on the exact TVD, estimates by ``fit_theta`` on
    uniformly weighted samples.  Errors are measured on the model parameter
    ``theta = log(lambda)``; rate-scale quartiles are reported alongside.
    """
    pmf = contaminated_poisson_pmf(lam, eps, k)
    target = poisson_tvd_minimiser(pmf)
    mle_target = lam + eps * k
    rng = np.random.default_rng(seed)
    model = ModelSpec.poisson()
    rows = []
    for n in n_grid:
        est = np.empty(trials)
        for t in range(trials):
            y = rng.poisson(lam, n) + k * (rng.random(n) < eps)
            data = Dataset.from_outcomes(y)
            emp = build_empirical(data)
            est[t] = fit_theta(emp, data, emp.weights, model, LossKind.TVD).params[0]
        errs = np.abs(est - math.log(target))
        q25, q50, q75 = np.quantile(errs, [0.25, 0.5, 0.75])
        rate_q = np.quantile(np.abs(np.exp(est) - target), [0.25, 0.5, 0.75])
        rows.append({"n": n, "median_abs_err": float(q50), "q25": float(q25), "q75": float(q75),
                     "rate_scale_q": [float(v) for v in rate_q]})
    meds = [r["median_abs_err"] for r in rows]
    monotone = all(b < a for a, b in zip(meds, meds[1:]))
    passed = monotone and meds[-1] < final_tol
    return BoundReport("consistency", trials, meds[-1], final_tol, passed,
                       {"target": target, "mle_target": mle_target, "monotone": monotone,
                        "by_n": rows})


def default_robustness(eps_values=(0.0, 0.05, 0.15, 0.3), seed=0) -> list:
    """2x2 Bernoulli-logit instance on a 101-point grid against every point-mass contaminant."""
    fam = bernoulli_logit_family()
    grid = np.linspace(-5.0, 5.0, 101)
    reports = []
    for eps in eps_values:
        for cell in range(4):
            q = np.zeros(4)
            q[cell] = 1.0
            rep = check_robustness_bound(fam, q.reshape(2, 2), eps, grid, theta_true=0.3, seed=seed)
            rep.details["contaminant_cell"] = cell
            reports.append(rep)
    return reports


CLAIMS = ("robustness", "concentration", "consistency")


def run_claims(claims: Optional[Sequence[str]] = None, seed: int = 0, trials: Optional[int] = None) -> list:
    claims = CLAIMS if not claims else claims
    out = []
    for claim in claims:
        if claim == "robustness":
            out.extend(default_robustness(seed=seed))
        elif claim == "concentration":
            out.append(check_concentration(trials=trials or 2000, seed=seed))
        elif claim == "consistency":
            out.append(check_consistency(trials=trials or 50, seed=seed))
        else:
            raise ValueError(f"unknown claim {claim!r}; choose from {CLAIMS}")
    return out
