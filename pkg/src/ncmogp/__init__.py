"""Non-linear convolved multi-output Gaussian processes.

Outputs are truncated Volterra series of a shared latent GP, approximated by
the GP with the same mean and covariance.
"""
__version__ = "0.1.0"

from .dataset import Dataset  # noqa: E402
from .errors import ConfigError, DataError, NcmogpError, NumericalError  # noqa: E402
from .kernels import KernelParams, cross_cov, cross_cov_grad  # noqa: E402
from .model import ModelSpec, assemble  # noqa: E402
from .moments import enumerate_moment_matrices, product_moment, product_moment_unit  # noqa: E402
from .inference import (  # noqa: E402
    grad_log_marginal,
    log_marginal,
    nlpd,
    nmse,
    optimize,
    predict,
)
from ._backend import core as _core  # noqa: E402

BACKEND = _core.NAME
