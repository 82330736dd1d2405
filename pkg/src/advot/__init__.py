"""Adversarial sample-based optimal transport with representer test functions."""

from .core import (ConfigError, DataError, NumericError, RepresenterEnsemble, SampleSet,
                   SolverConfig, init_representers, substream, validate_config)
from .density import (DensityModel, Gaussian, GaussianMixture, kl_monte_carlo, log_density,
                      oracle_cost_1d, transport_cost)
from .maps import ElementaryMap, Monomials, map_apply
from .precondition import AffineTransform, whiten
from .solver import DiagnosticsTrace, FitResult, fit_fixed_features, fit_general
from .testfn import TestFunction, f_eval, f_grad_y, f_hess_y
from .transport import FlowFormatError, FlowRecord, flow_apply, step_apply, step_logdet

__version__ = "0.1.0"

__all__ = [
    "AffineTransform", "ConfigError", "DataError", "DensityModel", "DiagnosticsTrace",
    "ElementaryMap", "FitResult", "FlowFormatError", "FlowRecord", "Gaussian",
    "GaussianMixture", "Monomials", "NumericError", "RepresenterEnsemble", "SampleSet",
    "SolverConfig", "TestFunction", "f_eval", "f_grad_y", "f_hess_y", "fit_fixed_features",
    "fit_general", "flow_apply", "init_representers", "kl_monte_carlo", "log_density",
    "map_apply", "oracle_cost_1d", "step_apply", "step_logdet", "substream",
    "transport_cost", "validate_config", "whiten",
]
