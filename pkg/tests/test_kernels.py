"""Compiled and numpy kernels agree, and the fallback matches scipy."""
import importlib

import numpy as np
import pytest
from scipy import stats

from tvdnpl import _kernels_py as py
from tvdnpl import kernels

try:
    cy = kernels.get_backend("cython")
except ImportError:  # pragma: no cover
    cy = None

needs_cy = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_env_var_forces_fallback(monkeypatch):
    monkeypatch.setenv("TVDNPL_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
        assert mod.tvd_eta is py.tvd_eta
    finally:
        monkeypatch.delenv("TVDNPL_PURE_PYTHON")
        importlib.reload(kernels)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@pytest.mark.parametrize("family, m", [(py.POISSON, 1), (py.BINOMIAL, 7), (py.PROBIT, 1)])
def test_pmf_matches_scipy(family, m):
    eta = np.linspace(-3, 2.5, 12)
    y = np.arange(12) % (m + 1) if family != py.POISSON else np.arange(12)
    f, _ = py.pmf(family, m, eta, y)
    if family == py.POISSON:
        ref = stats.poisson.pmf(y, np.exp(eta))
    elif family == py.BINOMIAL:
        ref = stats.binom.pmf(y, m, 1 / (1 + np.exp(-eta)))
    else:
        ref = np.where(y == 1, stats.norm.cdf(eta), stats.norm.cdf(-eta))
    assert np.allclose(f, ref, rtol=1e-12, atol=0)


def test_out_of_support_pmf_is_zero():
    f, df = py.pmf(py.BINOMIAL, 3, np.zeros(2), np.array([4, 5]))
    assert f.tolist() == [0.0, 0.0] and df.tolist() == [0.0, 0.0]
    lp, _ = py.log_pmf(py.PROBIT, 1, np.zeros(1), np.array([2]))
    assert lp[0] == -np.inf


def _grouped(rng, family, m, G=9):
    sizes = rng.integers(1, 4, G)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    top = {py.POISSON: 12, py.BINOMIAL: m, py.PROBIT: 1}[family]
    outcomes = np.concatenate([rng.choice(top + 1, s, replace=False) if s <= top + 1
                               else np.arange(top + 1) for s in sizes]).astype(np.int64)
    offsets = np.concatenate([[0], np.cumsum([min(s, top + 1) for s in sizes])]).astype(np.int64)
    probs = np.concatenate([rng.dirichlet(np.ones(offsets[g + 1] - offsets[g]))
                            for g in range(G)])
    return rng.normal(0, 1, G), offsets, outcomes, probs, rng.dirichlet(np.ones(G))


@needs_cy
@pytest.mark.parametrize("family, m", [(py.POISSON, 1), (py.BINOMIAL, 8), (py.PROBIT, 1)])
def test_tvd_kernel_parity(family, m):
    rng = np.random.default_rng(family)
    for _ in range(20):
        args = _grouped(rng, family, m)
        a = cy.tvd_eta(family, m, *args)
        b = py.tvd_eta(family, m, *args)
        assert a[0] == pytest.approx(b[0], rel=1e-12, abs=1e-15)
        assert np.allclose(a[1], b[1], rtol=1e-10, atol=1e-14)


@needs_cy
@pytest.mark.parametrize("family, m", [(py.POISSON, 1), (py.BINOMIAL, 2000), (py.PROBIT, 1)])
def test_kld_kernel_parity(family, m):
    rng = np.random.default_rng(7)
    n = 200
    top = {py.POISSON: 1500, py.BINOMIAL: m, py.PROBIT: 1}[family]
    y = rng.integers(0, top + 1, n)
    eta = rng.normal(size=n)
    w = rng.random(n)
    w[::7] = 0.0
    a = cy.kld_eta(family, m, eta, y, w)
    b = py.kld_eta(family, m, eta, y, w)
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    assert np.allclose(a[1], b[1], rtol=1e-10, atol=1e-12)


@needs_cy
def test_mlp_kernel_parity():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 3))
    hidden = 4
    params = rng.normal(size=(3 + 1) * hidden + hidden + 1)
    eta_c, H_c = cy.mlp_forward(params, X, hidden)
    eta_p, H_p = py.mlp_forward(params, X, hidden)
    assert np.allclose(eta_c, eta_p, rtol=1e-13) and np.allclose(H_c, H_p, rtol=1e-13)
    deta = rng.normal(size=50)
    assert np.allclose(cy.mlp_backward(params, X, H_c, deta, hidden),
                       py.mlp_backward(params, X, H_p, deta, hidden), rtol=1e-12)
    y = rng.integers(0, 2, 50)
    w = rng.dirichlet(np.ones(50))
    a, b = params.copy(), params.copy()
    for _ in range(20):
        order = rng.permutation(50)
        cy.mlp_sgd_epoch(a, X, y, w, order, 8, 0.1, hidden)
        py.mlp_sgd_epoch(b, X, y, w, order, 8, 0.1, hidden)
    assert np.allclose(a, b, rtol=1e-10, atol=1e-12)
