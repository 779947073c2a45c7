# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled loss kernels.  Semantics match ``_kernels_py`` line for line."""
import numpy as np

from libc.math cimport exp, log, lgamma, tanh, fabs, INFINITY
from scipy.special.cython_special cimport ndtr, log_ndtr

cdef enum:
    POISSON = 0
    BINOMIAL = 1
    PROBIT = 2

cdef double LOG_SQRT_2PI = 0.9189385332046727
cdef double INV_SQRT_2PI = 0.3989422804014327


cdef inline double _log_sigmoid(double x) noexcept nogil:
    if x >= 0.0:
        return -log(1.0 + exp(-x))
    return x - log(1.0 + exp(x))


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double z
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    z = exp(x)
    return z / (1.0 + z)


cdef inline double _log_ndtr(double x) noexcept nogil:
    return log_ndtr(x)


cdef double _LOGFACT[1024]
cdef Py_ssize_t _t
_LOGFACT[0] = 0.0
for _t in range(1, 1024):
    _LOGFACT[_t] = _LOGFACT[_t - 1] + log(<double>_t)


cdef inline double _log_fact(long y) noexcept nogil:
    # glibc lgamma is slow; outcomes are almost always small counts
    if y < 1024:
        return _LOGFACT[y]
    return lgamma(<double>y + 1.0)


cdef inline void _log_pmf(int family, long m, double eta, long y,
                          double* lp, double* dlp) noexcept nogil:
    cdef double lam, yf = <double>y, mf = <double>m
    if family == POISSON:
        if y < 0:
            lp[0] = -INFINITY
            dlp[0] = 0.0
            return
        lam = exp(eta)
        lp[0] = yf * eta - lam - _log_fact(y)
        dlp[0] = yf - lam
    elif family == BINOMIAL:
        if y < 0 or y > m:
            lp[0] = -INFINITY
            dlp[0] = 0.0
            return
        lp[0] = (_log_fact(m) - _log_fact(y) - _log_fact(m - y)
                 + yf * _log_sigmoid(eta) + (mf - yf) * _log_sigmoid(-eta))
        dlp[0] = yf - mf * _sigmoid(eta)
    else:
        if y == 1:
            lp[0] = _log_ndtr(eta)
            dlp[0] = exp(-0.5 * eta * eta - LOG_SQRT_2PI - lp[0])
        elif y == 0:
            lp[0] = _log_ndtr(-eta)
            dlp[0] = -exp(-0.5 * eta * eta - LOG_SQRT_2PI - lp[0])
        else:
            lp[0] = -INFINITY
            dlp[0] = 0.0


cdef inline void _pmf(int family, long m, double eta, long y,
                      double* f, double* df) noexcept nogil:
    cdef double lp, dlp, phi
    if family == PROBIT:
        phi = INV_SQRT_2PI * exp(-0.5 * eta * eta)
        if y == 1:
            f[0] = ndtr(eta)
            df[0] = phi
        elif y == 0:
            f[0] = ndtr(-eta)
            df[0] = -phi
        else:
            f[0] = 0.0
            df[0] = 0.0
        return
    _log_pmf(family, m, eta, y, &lp, &dlp)
    f[0] = exp(lp)
    if f[0] > 0.0:
        df[0] = f[0] * dlp
    else:
        df[0] = 0.0


def tvd_eta(int family, long m, const double[::1] eta, const long[::1] offsets,
            const long[::1] outcomes, const double[::1] probs,
            const double[::1] weights):
    cdef Py_ssize_t G = eta.shape[0]
    cdef Py_ssize_t g, k
    cdef double f, df, head, dhead, absdiff, dsig, diff, tail, loss = 0.0
    deta_arr = np.empty(G, dtype=np.float64)
    cdef double[::1] deta = deta_arr
    with nogil:
        for g in range(G):
            head = 0.0
            dhead = 0.0
            absdiff = 0.0
            dsig = 0.0
            for k in range(offsets[g], offsets[g + 1]):
                _pmf(family, m, eta[g], outcomes[k], &f, &df)
                head += f
                dhead += df
                diff = f - probs[k]
                absdiff += fabs(diff)
                if diff > 0.0:
                    dsig += df
                elif diff < 0.0:
                    dsig -= df
            tail = 1.0 - head
            if tail < 0.0:
                tail = 0.0
            loss += weights[g] * (absdiff + tail)
            deta[g] = 0.5 * weights[g] * (dsig - dhead)
    return 0.5 * loss, deta_arr


def kld_eta(int family, long m, const double[::1] eta, const long[::1] y,
            const double[::1] w):
    cdef Py_ssize_t n = eta.shape[0]
    cdef Py_ssize_t i
    cdef double lp, dlp, loss = 0.0
    deta_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] deta = deta_arr
    with nogil:
        for i in range(n):
            _log_pmf(family, m, eta[i], y[i], &lp, &dlp)
            if w[i] > 0.0:
                loss -= w[i] * lp
            deta[i] = -w[i] * dlp
    return loss, deta_arr


def mlp_forward(const double[::1] params, const double[:, ::1] X, int hidden):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t ob1 = hidden * d, ow2 = hidden * d + hidden
    cdef double b2 = params[hidden * d + 2 * hidden]
    cdef double acc, out
    eta_arr = np.empty(n, dtype=np.float64)
    H_arr = np.empty((n, hidden), dtype=np.float64)
    cdef double[::1] eta = eta_arr
    cdef double[:, ::1] H = H_arr
    with nogil:
        for i in range(n):
            out = b2
            for j in range(hidden):
                acc = params[ob1 + j]
                for k in range(d):
                    acc = acc + params[j * d + k] * X[i, k]
                acc = tanh(acc)
                H[i, j] = acc
                out = out + params[ow2 + j] * acc
            eta[i] = out
    return eta_arr, H_arr


def mlp_backward(const double[::1] params, const double[:, ::1] X,
                 const double[:, ::1] H, const double[::1] deta, int hidden):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t ob1 = hidden * d, ow2 = hidden * d + hidden
    cdef Py_ssize_t ob2 = hidden * d + 2 * hidden
    cdef double dp, h
    grad_arr = np.zeros(params.shape[0], dtype=np.float64)
    cdef double[::1] grad = grad_arr
    with nogil:
        for i in range(n):
            if deta[i] == 0.0:
                continue
            grad[ob2] += deta[i]
            for j in range(hidden):
                h = H[i, j]
                grad[ow2 + j] += h * deta[i]
                dp = deta[i] * params[ow2 + j] * (1.0 - h * h)
                grad[ob1 + j] += dp
                for k in range(d):
                    grad[j * d + k] += dp * X[i, k]
    return grad_arr


def mlp_sgd_epoch(double[::1] params, const double[:, ::1] X, const long[::1] y,
                  const double[::1] w, const long[::1] order, Py_ssize_t batch_size,
                  double step, int hidden):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], P = params.shape[0]
    cdef Py_ssize_t lo, hi, r, i, j, k
    cdef Py_ssize_t ob1 = hidden * d, ow2 = hidden * d + hidden
    cdef Py_ssize_t ob2 = hidden * d + 2 * hidden
    cdef double acc, eta, deta, dp, h, scale
    grad_arr = np.empty(P, dtype=np.float64)
    H_arr = np.empty(hidden, dtype=np.float64)
    cdef double[::1] grad = grad_arr
    cdef double[::1] Hrow = H_arr
    with nogil:
        lo = 0
        while lo < n:
            hi = lo + batch_size
            if hi > n:
                hi = n
            scale = <double>n / <double>(hi - lo)
            for k in range(P):
                grad[k] = 0.0
            for r in range(lo, hi):
                i = order[r]
                eta = params[ob2]
                for j in range(hidden):
                    acc = params[ob1 + j]
                    for k in range(d):
                        acc = acc + params[j * d + k] * X[i, k]
                    acc = tanh(acc)
                    Hrow[j] = acc
                    eta = eta + params[ow2 + j] * acc
                # d(-log f)/d eta for a Bernoulli outcome
                deta = -w[i] * scale * (<double>y[i] - _sigmoid(eta))
                if deta == 0.0:
                    continue
                grad[ob2] += deta
                for j in range(hidden):
                    h = Hrow[j]
                    grad[ow2 + j] += h * deta
                    dp = deta * params[ow2 + j] * (1.0 - h * h)
                    grad[ob1 + j] += dp
                    for k in range(d):
                        grad[j * d + k] += dp * X[i, k]
            for k in range(P):
                params[k] -= step * grad[k]
            lo = hi
    return np.asarray(params)
