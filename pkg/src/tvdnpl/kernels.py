"""Backend selection for the hot loss kernels.

The compiled extension is used when importable; set ``TVDNPL_PURE_PYTHON=1``
to force the numpy fallback.  ``BACKEND`` names whichever was chosen.
"""
import os

from . import _kernels_py

POISSON = _kernels_py.POISSON
BINOMIAL = _kernels_py.BINOMIAL
PROBIT = _kernels_py.PROBIT

_impl = _kernels_py
BACKEND = "python"
if os.environ.get("TVDNPL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on build environment
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

tvd_eta = _impl.tvd_eta
kld_eta = _impl.kld_eta
mlp_forward = _impl.mlp_forward
mlp_backward = _impl.mlp_backward
mlp_sgd_epoch = _impl.mlp_sgd_epoch

# scalar/array pmf helpers are not on the optimisation hot path
pmf = _kernels_py.pmf
log_pmf = _kernels_py.log_pmf


def get_backend(name):
    """Return the kernel module for ``"python"`` or ``"cython"``."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
