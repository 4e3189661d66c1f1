"""Numerical laboratory for strong laws of dependent sequences and the
functional Hill estimator in the Weibull max-domain."""

from .association import AssocGenerator, check_newman_lemma, empirical_cov_model, generate
from .conditions import (ConditionReport, eval_cesaro, eval_gchr, eval_gcip, eval_process_conditions,
                         eval_stationary_gchr, eval_stationary_variance, maxvar_probe, newman_sigma2)
from .errors import (ConfigError, ContractError, DecompositionError, DivergenceError,
                     EmptyRequestError, EndpointError, ParameterError)
from .estimators import hill_functional, hill_ratio
from .montecarlo import ExperimentConfig, RunResult, compare_to_target, run
from .process import (ProcessParams, WeightFunction, expected_path_value, limit_of_expected,
                      product_cov, product_mean, product_var, simulate_path)
from .sampling import QuantileRep, SeededStream, sample_weibull_domain, uniform_order_stats

__version__ = "0.1.0"

__all__ = [
    "AssocGenerator", "check_newman_lemma", "empirical_cov_model", "generate",
    "ConditionReport", "eval_cesaro", "eval_gchr", "eval_gcip", "eval_process_conditions",
    "eval_stationary_gchr", "eval_stationary_variance", "maxvar_probe", "newman_sigma2",
    "ConfigError", "ContractError", "DecompositionError", "DivergenceError", "EmptyRequestError",
    "EndpointError", "ParameterError",
    "hill_functional", "hill_ratio",
    "ExperimentConfig", "RunResult", "compare_to_target", "run",
    "ProcessParams", "WeightFunction", "expected_path_value", "limit_of_expected",
    "product_cov", "product_mean", "product_var", "simulate_path",
    "QuantileRep", "SeededStream", "sample_weibull_domain", "uniform_order_stats",
]
