"""Sequential design with reduced-rank Gaussian-process surrogates."""

__version__ = "0.1.0"

from .acquisition import AcquisitionContext, hsgp_imse, imse_quadrature
from .bench import ExperimentSuite, make_benchmark, run_experiment
from .design import DesignConfig, RunHistory, lhs_sample, run_sequential
from .gp import GPRegressor
from .hsgp import SineBasis
from .kernels import GaussianKernel, MaternKernel, ProductMaternKernel, make_kernel

__all__ = [
    "AcquisitionContext",
    "DesignConfig",
    "ExperimentSuite",
    "GPRegressor",
    "GaussianKernel",
    "MaternKernel",
    "ProductMaternKernel",
    "RunHistory",
    "SineBasis",
    "__version__",
    "hsgp_imse",
    "imse_quadrature",
    "lhs_sample",
    "make_benchmark",
    "make_kernel",
    "run_experiment",
    "run_sequential",
]
