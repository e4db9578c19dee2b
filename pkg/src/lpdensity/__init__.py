"""Convolution density estimators for linear processes."""
from .arfit import ArFit, fit, fit_least_squares, fit_parametric, pn_rule, residual_diagnostics
from .estimators import (DensityEstimate, bandwidth_rule, conv_estimate, default_grid, estimate,
                         h_sw_ustat, kde, sup_error)
from .kernels import Kernel, build_kernel, self_convolution
from .process import AR, ARMA11, MA1, check_invertibility, invert_ar_to_ma, invert_ma_to_ar, parse_family
from .simulate import Gaussian, GaussianMixture, Logistic, oracle_f, oracle_g, oracle_h, sample_path

__version__ = "0.1.0"

__all__ = [
    "AR", "ARMA11", "ArFit", "DensityEstimate", "Gaussian", "GaussianMixture", "Kernel",
    "Logistic", "MA1", "bandwidth_rule", "build_kernel", "check_invertibility",
    "conv_estimate", "default_grid", "estimate", "fit", "fit_least_squares", "fit_parametric",
    "h_sw_ustat", "invert_ar_to_ma", "invert_ma_to_ar", "kde", "oracle_f", "oracle_g",
    "oracle_h", "parse_family", "pn_rule", "residual_diagnostics", "sample_path",
    "self_convolution", "sup_error",
]
