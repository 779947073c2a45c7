"""Datasets, weighted empirical distributions and the discrete model families."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit, ndtr

from . import kernels

__all__ = [
    "DataError",
    "NumericalDomainError",
    "Dataset",
    "WeightedEmpirical",
    "ModelSpec",
    "ConditionalPMF",
    "build_empirical",
    "model_pmf",
    "model_mean",
    "read_csv",
    "write_csv",
    "one_hot",
]

WEIGHT_SUM_TOL = 1e-8


class DataError(ValueError):
    """Malformed dataset, weights or file contents."""


class NumericalDomainError(ArithmeticError):
    """A pmf or loss evaluated to a non-finite value."""


def _canonical(X):
    # -0.0 and 0.0 must land in the same group
    return np.ascontiguousarray(np.asarray(X, dtype=np.float64) + 0.0)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows ``(x_i, y_i)`` with covariates ``X`` of shape ``(n, d)``.

    ``d`` may be zero.  Outcomes are nonnegative integers.
    """

    X: np.ndarray
    y: np.ndarray
    outcome_support: Optional[tuple] = None
    covariate_kind: str = "discrete"
    feature_names: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        if X.ndim == 1:
            X = X.reshape(len(y), 0) if X.size == 0 else X.reshape(-1, 1)
        if y.ndim != 1:
            raise DataError("outcomes must be one-dimensional")
        if len(y) < 1:
            raise DataError("dataset needs at least one row")
        if X.shape[0] != len(y):
            raise DataError(f"{X.shape[0]} covariate rows for {len(y)} outcomes")
        if not np.all(np.isfinite(X)):
            raise DataError("covariates must be finite")
        if y.dtype.kind == "f":
            if not np.all(y == np.round(y)):
                raise DataError("outcomes must be integers")
        y = y.astype(np.int64)
        if np.any(y < 0):
            raise DataError("outcomes must be nonnegative")
        if self.outcome_support is not None:
            support = tuple(sorted(int(v) for v in self.outcome_support))
            if not np.all(np.isin(y, support)):
                raise DataError("outcome outside the declared support")
            object.__setattr__(self, "outcome_support", support)
        if self.covariate_kind not in ("discrete", "continuous"):
            raise DataError(f"unknown covariate kind {self.covariate_kind!r}")
        X = _canonical(X)
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @classmethod
    def from_outcomes(cls, y, **kwargs) -> "Dataset":
        """Dataset without covariates (``d = 0``)."""
        y = np.asarray(y)
        return cls(np.empty((len(y), 0)), y, **kwargs)

    @classmethod
    def from_rows(cls, rows: Iterable, **kwargs) -> "Dataset":
        rows = list(rows)
        xs = [np.atleast_1d(np.asarray(x, dtype=np.float64)) for x, _ in rows]
        dims = {len(x) for x in xs}
        if len(dims) > 1:
            raise DataError("covariate vectors differ in dimension")
        d = dims.pop() if dims else 0
        X = np.array(xs, dtype=np.float64).reshape(len(rows), d)
        return cls(X, np.array([y for _, y in rows]), **kwargs)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def rows(self):
        return [(tuple(float(v) for v in x), int(y)) for x, y in zip(self.X, self.y)]

    @property
    def K_x(self) -> int:
        return len(self._grouping[1])

    @property
    def K_y(self) -> int:
        return len(np.unique(self.y))

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.X[index], self.y[index], self.outcome_support,
                       self.covariate_kind, self.feature_names)

    def concat(self, other: "Dataset") -> "Dataset":
        if other.d != self.d:
            raise DataError("cannot concatenate datasets of different dimension")
        return Dataset(np.vstack([self.X, other.X]), np.concatenate([self.y, other.y]),
                       None, self.covariate_kind, self.feature_names)

    @cached_property
    def _grouping(self):
        """(group index per row, unique covariate rows) under exact equality."""
        if self.d == 0:
            return np.zeros(self.n, dtype=np.int64), np.zeros((1, 0))
        # lexicographic numeric order; -0.0 was canonicalised and NaN rejected,
        # so value equality here is bitwise equality
        xs, inverse = np.unique(self.X, axis=0, return_inverse=True)
        return inverse.astype(np.int64).ravel(), xs


@dataclass(frozen=True, eq=False)
class WeightedEmpirical:
    """Grouped empirical distribution under one weight vector.

    Groups are stored in flat arrays: group ``g`` has covariate ``xs[g]``,
    weight ``group_weight[g]`` and conditional pmf over
    ``outcomes[offsets[g]:offsets[g+1]]`` with probabilities ``cond_probs``.
    The weighted rows are kept for row-wise losses.
    """

    xs: np.ndarray
    group_weight: np.ndarray
    offsets: np.ndarray
    outcomes: np.ndarray
    cond_probs: np.ndarray
    data: Dataset
    weights: np.ndarray
    total_weight: float = 1.0

    @property
    def n_groups(self) -> int:
        return len(self.group_weight)

    def conditional(self, g: int) -> dict:
        lo, hi = self.offsets[g], self.offsets[g + 1]
        return {int(y): float(p) for y, p in zip(self.outcomes[lo:hi], self.cond_probs[lo:hi])}

    @property
    def groups(self):
        return [(tuple(float(v) for v in self.xs[g]), float(self.group_weight[g]), self.conditional(g))
                for g in range(self.n_groups)]

    def joint(self) -> dict:
        """``{(x, y): probability}`` of the weighted joint empirical."""
        out = {}
        for x, w, cond in self.groups:
            for y, p in cond.items():
                out[(x, y)] = w * p
        return out


def _check_weights(weights, n):
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise DataError(f"expected {n} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DataError("weights must be finite and nonnegative")
    s = w.sum()
    if abs(s - 1.0) > WEIGHT_SUM_TOL:
        raise DataError(f"weights sum to {s!r}, not 1")
    return w


def build_empirical(data: Dataset, weights=None) -> WeightedEmpirical:
    """Group rows by covariate value and form weighted conditionals.

    With ``weights=None`` every row gets ``1/n``.
    """
    if weights is None:
        weights = np.full(data.n, 1.0 / data.n)
    w = _check_weights(weights, data.n)
    gidx, xs = data._grouping
    live = w > 0
    gl, yl, wl = gidx[live], data.y[live], w[live]
    span = int(data.y.max()) + 1
    codes = gl * span + yl
    ucodes, inv = np.unique(codes, return_inverse=True)
    cell = np.bincount(inv.ravel(), weights=wl, minlength=len(ucodes))
    cell_group = ucodes // span
    cell_y = ucodes % span
    used, cell_g = np.unique(cell_group, return_inverse=True)
    cell_g = cell_g.ravel()
    W = np.bincount(cell_g, weights=cell, minlength=len(used))
    offsets = np.zeros(len(used) + 1, dtype=np.int64)
    np.cumsum(np.bincount(cell_g, minlength=len(used)), out=offsets[1:])
    return WeightedEmpirical(
        xs=xs[used],
        group_weight=W,
        offsets=offsets,
        outcomes=cell_y.astype(np.int64),
        cond_probs=cell / W[cell_g],
        data=data,
        weights=w,
        total_weight=float(w.sum()),
    )


def one_hot(levels, n_levels=None) -> np.ndarray:
    """Dummy-code integer levels with the first level as baseline."""
    levels = np.asarray(levels, dtype=np.int64)
    k = int(levels.max()) + 1 if n_levels is None else n_levels
    out = np.zeros((len(levels), k - 1))
    for j in range(1, k):
        out[:, j - 1] = levels == j
    return out


_FAMILIES = ("poisson", "binomial", "probit", "mlp")


@dataclass(frozen=True)
class ModelSpec:
    """A discrete conditional model ``f_theta(y | x)``.

    ``poisson`` uses a log link, ``binomial`` a logit link with ``trials``
    trials, ``probit`` the normal cdf, and ``mlp`` a one-hidden-layer tanh
    network with a logistic output for binary outcomes.  The linear models
    carry an intercept as ``params[0]``.
    """

    family: str
    n_features: int = 0
    trials: int = 1
    hidden: int = 0
    activation: str = "tanh"

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.n_features < 0:
            raise ValueError("n_features must be >= 0")
        if self.family == "binomial" and self.trials < 1:
            raise ValueError("binomial needs trials >= 1")
        if self.family == "mlp":
            if self.hidden < 1:
                raise ValueError("mlp needs hidden >= 1")
            if self.activation != "tanh":
                raise ValueError("only tanh activation is supported")

    @classmethod
    def poisson(cls, n_features=0):
        return cls("poisson", n_features)

    @classmethod
    def binomial(cls, trials, n_features=1):
        return cls("binomial", n_features, trials=trials)

    @classmethod
    def probit(cls, n_features):
        return cls("probit", n_features)

    @classmethod
    def mlp(cls, n_features, hidden):
        return cls("mlp", n_features, hidden=hidden)

    @property
    def param_dim(self) -> int:
        if self.family == "mlp":
            return (self.n_features + 1) * self.hidden + self.hidden + 1
        return 1 + self.n_features

    @property
    def kernel_family(self) -> int:
        return {"poisson": kernels.POISSON, "binomial": kernels.BINOMIAL,
                "probit": kernels.PROBIT, "mlp": kernels.BINOMIAL}[self.family]

    @property
    def kernel_trials(self) -> int:
        return self.trials if self.family == "binomial" else 1

    @property
    def support(self) -> Optional[tuple]:
        """Finite outcome set, or ``None`` for unbounded families."""
        if self.family == "poisson":
            return None
        if self.family == "binomial":
            return tuple(range(self.trials + 1))
        return (0, 1)

    def param_names(self) -> list:
        if self.family == "mlp":
            d, h = self.n_features, self.hidden
            return ([f"W1_{j}_{k}" for j in range(h) for k in range(d)]
                    + [f"b1_{j}" for j in range(h)]
                    + [f"w2_{j}" for j in range(h)] + ["b2"])
        return ["intercept"] + [f"beta_{k}" for k in range(1, self.n_features + 1)]

    def check(self, params, X=None):
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.param_dim,):
            raise ValueError(f"{self.family} expects {self.param_dim} parameters, got {params.shape}")
        if X is not None and X.shape[1] != self.n_features:
            raise DataError(f"model has {self.n_features} features, data has {X.shape[1]}")
        return params

    def eta(self, params, X):
        """Linear predictor per row plus a cache for :meth:`backprop`."""
        if self.family == "mlp":
            return kernels.mlp_forward(params, np.ascontiguousarray(X), self.hidden)
        if self.n_features == 0:
            return np.full(X.shape[0], params[0]), None
        return params[0] + X @ params[1:], None

    def backprop(self, params, X, cache, deta):
        """Gradient in ``params`` given ``d loss / d eta`` per row."""
        if self.family == "mlp":
            return kernels.mlp_backward(params, np.ascontiguousarray(X), cache,
                                        np.ascontiguousarray(deta), self.hidden)
        g = np.empty(self.param_dim)
        g[0] = deta.sum()
        if self.n_features:
            g[1:] = deta @ X
        return g

    def init_params(self, rng=None, scale=0.1):
        if self.family == "mlp":
            rng = np.random.default_rng(0) if rng is None else rng
            return rng.normal(0.0, scale, self.param_dim)
        return np.zeros(self.param_dim)


@dataclass(frozen=True)
class ConditionalPMF:
    """``f(. | x)`` as explicit head probabilities plus the leftover tail mass."""

    head: dict = field(default_factory=dict)
    tail_mass: float = 0.0

    def __post_init__(self):
        if any(p < 0 for p in self.head.values()) or self.tail_mass < 0:
            raise ValueError("negative probability")
        total = sum(self.head.values()) + self.tail_mass
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"pmf sums to {total!r}")


def _eta_at(model, params, x):
    params = model.check(params)
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != model.n_features:
        raise DataError(f"model has {model.n_features} features, x has {x.shape[1]}")
    if not np.all(np.isfinite(params)):
        raise NumericalDomainError("non-finite parameters")
    eta = float(model.eta(params, x)[0][0])
    if not math.isfinite(eta) or (model.family == "poisson" and eta > 709.0):
        raise NumericalDomainError(f"linear predictor {eta!r} overflows the {model.family} pmf")
    return eta


def model_pmf(model: ModelSpec, params, x, head_set: Sequence[int]) -> ConditionalPMF:
    """Evaluate ``f_theta(y | x)`` on ``head_set`` with exact tail mass."""
    head_set = sorted({int(y) for y in head_set})
    if not head_set:
        raise ValueError("head_set must be nonempty")
    eta = _eta_at(model, params, x)
    f, _ = kernels.pmf(model.kernel_family, model.kernel_trials,
                       np.full(len(head_set), eta), np.array(head_set))
    if not np.all(np.isfinite(f)):
        raise NumericalDomainError("non-finite pmf value")
    head = {y: float(p) for y, p in zip(head_set, f)}
    support = model.support
    if support is not None and set(support) <= set(head_set):
        tail = 0.0
    else:
        tail = max(0.0, 1.0 - float(f.sum()))
    return ConditionalPMF(head, tail)


def model_mean(model: ModelSpec, params, x) -> float:
    """Expected outcome under ``f_theta(. | x)``."""
    eta = _eta_at(model, params, x)
    if model.family == "poisson":
        return math.exp(eta)
    if model.family == "binomial":
        return model.trials * float(expit(eta))
    if model.family == "probit":
        return float(ndtr(eta))
    return float(expit(eta))


def model_means(model: ModelSpec, params, X) -> np.ndarray:
    """Vectorised :func:`model_mean` over the rows of ``X``."""
    eta, _ = model.eta(model.check(params, X), X)
    if model.family == "poisson":
        with np.errstate(over="ignore"):
            return np.exp(eta)
    if model.family == "binomial":
        return model.trials * expit(eta)
    if model.family == "probit":
        return ndtr(eta)
    return expit(eta)


def model_pmf_at(model: ModelSpec, params, X, y) -> np.ndarray:
    """``f_theta(y_i | x_i)`` for every row."""
    eta, _ = model.eta(model.check(params, X), X)
    f, _ = kernels.pmf(model.kernel_family, model.kernel_trials, eta, y)
    return f


# --- delimited text I/O -----------------------------------------------------

def read_csv(path, outcome: str, covariates: Optional[Sequence[str]] = None,
             covariate_kind: str = "discrete", delimiter: str = ",") -> Dataset:
    """Read a header-row delimited file; ``outcome`` names the label column.

    All other columns (or just ``covariates``) become numeric covariates.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if outcome not in header:
            raise DataError(f"{path}: no column named {outcome!r} in header {header}")
        if covariates is None:
            covariates = [h for h in header if h != outcome]
        missing = [c for c in covariates if c not in header]
        if missing:
            raise DataError(f"{path}: missing covariate columns {missing}")
        yi = header.index(outcome)
        xi = [header.index(c) for c in covariates]
        X, y = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                yv = float(row[yi])
                xv = [float(row[i]) for i in xi]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if yv != int(yv) or yv < 0:
                raise DataError(f"{path}:{lineno}: outcome {row[yi]!r} is not a nonnegative integer")
            X.append(xv)
            y.append(int(yv))
    if not y:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(X, dtype=np.float64).reshape(len(y), len(xi)), np.array(y),
                   covariate_kind=covariate_kind, feature_names=tuple(covariates))


def write_csv(data: Dataset, path, outcome: str = "y") -> None:
    names = list(data.feature_names) or [f"x{k}" for k in range(1, data.d + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + [outcome])
        for x, y in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in x] + [int(y)])
