"""Pure numpy implementations of the hot loss kernels.

These mirror ``_kernels.pyx`` exactly and are used whenever the compiled
extension is unavailable (or ``TVDNPL_PURE_PYTHON=1`` is set).  Every
function takes the linear predictor ``eta`` rather than the parameter
vector, so the chain rule through the design lives in the callers.
"""
import numpy as np
from scipy.special import expit, gammaln, log_expit, log_ndtr, ndtr

POISSON = 0
BINOMIAL = 1
PROBIT = 2

_INV_SQRT_2PI = 0.3989422804014327


def _norm_pdf(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def log_pmf(family, m, eta, y):
    """Elementwise ``log f(y | eta)`` and ``d log f / d eta``.

    Outcomes outside the model support give ``-inf`` with zero derivative.
    """
    eta = np.asarray(eta, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    eta, y = np.broadcast_arrays(eta, y)
    yf = y.astype(np.float64)
    if family == POISSON:
        with np.errstate(over="ignore", invalid="ignore"):
            lam = np.exp(eta)
            lp = yf * eta - lam - gammaln(yf + 1.0)
            dlp = yf - lam
        bad = y < 0
    elif family == BINOMIAL:
        mf = float(m)
        lchoose = gammaln(mf + 1.0) - gammaln(yf + 1.0) - gammaln(mf - yf + 1.0)
        lp = lchoose + yf * log_expit(eta) + (mf - yf) * log_expit(-eta)
        dlp = yf - mf * expit(eta)
        bad = (y < 0) | (y > m)
    elif family == PROBIT:
        pos = y == 1
        lp = np.where(pos, log_ndtr(eta), log_ndtr(-eta))
        # phi / Phi through logs keeps the ratio finite deep in the tails
        lphi = -0.5 * eta * eta - 0.9189385332046727
        dlp = np.where(pos, np.exp(lphi - log_ndtr(eta)), -np.exp(lphi - log_ndtr(-eta)))
        bad = (y < 0) | (y > 1)
    else:
        raise ValueError(f"unknown family code {family}")
    if bad.any():
        lp = np.where(bad, -np.inf, lp)
        dlp = np.where(bad, 0.0, dlp)
    return lp, dlp


def pmf(family, m, eta, y):
    """Elementwise ``f(y | eta)`` and ``d f / d eta``."""
    y = np.asarray(y, dtype=np.int64)
    if family == PROBIT:
        eta = np.asarray(eta, dtype=np.float64)
        eta, y = np.broadcast_arrays(eta, y)
        pos = y == 1
        f = np.where(pos, ndtr(eta), ndtr(-eta))
        df = np.where(pos, _norm_pdf(eta), -_norm_pdf(eta))
        bad = (y < 0) | (y > 1)
        return np.where(bad, 0.0, f), np.where(bad, 0.0, df)
    lp, dlp = log_pmf(family, m, eta, y)
    with np.errstate(invalid="ignore"):
        f = np.exp(lp)
        df = np.where(f > 0.0, f * dlp, 0.0)
    return f, df


def tvd_eta(family, m, eta, offsets, outcomes, probs, weights):
    """Grouped TVD loss and its derivative with respect to each group's ``eta``.

    Group ``g`` owns ``outcomes[offsets[g]:offsets[g + 1]]`` with empirical
    conditional probabilities ``probs[...]`` and marginal weight ``weights[g]``.
    """
    eta = np.asarray(eta, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.int64)
    counts = np.diff(offsets)
    eta_rows = np.repeat(eta, counts)
    f, df = pmf(family, m, eta_rows, outcomes)
    starts = offsets[:-1]
    head = np.add.reduceat(f, starts) if len(f) else np.zeros(len(eta))
    dhead = np.add.reduceat(df, starts) if len(f) else np.zeros(len(eta))
    tail = np.maximum(1.0 - head, 0.0)
    absdiff = np.add.reduceat(np.abs(probs - f), starts)
    loss = 0.5 * float(np.dot(weights, absdiff + tail))
    sgn = np.sign(f - probs)
    dsig = np.add.reduceat(sgn * df, starts)
    deta = 0.5 * weights * (dsig - dhead)
    return loss, deta


def kld_eta(family, m, eta, y, w):
    """Weighted negative log-likelihood and its derivative in ``eta``."""
    lp, dlp = log_pmf(family, m, eta, y)
    w = np.asarray(w, dtype=np.float64)
    live = w > 0.0
    if not live.all():
        lp = np.where(live, lp, 0.0)
    loss = -float(np.dot(w, lp))
    return loss, -w * dlp


def mlp_forward(params, X, hidden):
    """Output logit and hidden activations of a one-hidden-layer tanh network."""
    n, d = X.shape
    W1 = params[: hidden * d].reshape(hidden, d)
    b1 = params[hidden * d: hidden * d + hidden]
    w2 = params[hidden * d + hidden: hidden * d + 2 * hidden]
    b2 = params[hidden * d + 2 * hidden]
    H = np.tanh(X @ W1.T + b1)
    return H @ w2 + b2, H


def mlp_backward(params, X, H, deta, hidden):
    """Parameter gradient given ``d loss / d eta`` for every row."""
    n, d = X.shape
    w2 = params[hidden * d + hidden: hidden * d + 2 * hidden]
    dpre = np.outer(deta, w2) * (1.0 - H * H)
    return np.concatenate([
        (dpre.T @ X).ravel(),
        dpre.sum(axis=0),
        H.T @ deta,
        [deta.sum()],
    ])


def mlp_sgd_epoch(params, X, y, w, order, batch_size, step, hidden):
    """One epoch of minibatch SGD on the weighted Bernoulli NLL, in place.

    Batches follow ``order``; each batch gradient is rescaled by
    ``n / batch`` so its expectation is the full-data gradient.
    """
    n = len(y)
    for lo in range(0, n, batch_size):
        idx = order[lo: lo + batch_size]
        Xb = np.ascontiguousarray(X[idx])
        eta, H = mlp_forward(params, Xb, hidden)
        _, deta = kld_eta(BINOMIAL, 1, eta, y[idx], w[idx] * (n / len(idx)))
        params -= step * mlp_backward(params, Xb, H, deta, hidden)
    return params
