"""SIMEX estimation for parametric modal regression with measurement error.

The package provides the kernel-based modal estimator (fit by EM), the
mean/Huber/median comparison estimators, a deterministic SIMEX engine that
corrects all of them for known additive normal covariate error, and a
Monte Carlo study runner with table emission.
"""

from .estimators import (
    Dataset,
    EmDiagnostics,
    ESTIMATORS,
    estep_weights,
    huber_fit,
    huber_rho,
    lse_fit,
    median_fit,
    modal_em,
    modal_objective,
)
from .kernel import Bandwidth, log_phi_h, phi, phi_h, phi_h_deriv
from .model import RegressionModel, evaluate, exponential_model, gradient, linear_model
from .optim import OptimResult, nelder_mead, weighted_gauss_newton
from .simex import (
    ExtrapolationError,
    ExtrapolationFit,
    LambdaTrace,
    PoleError,
    SimexConfig,
    default_lambda_grid,
    evaluate_extrapolant,
    fit_extrapolant,
    linear_normal_attenuation,
    naive_equivalence_check,
    simex_estimate,
    simulate_pseudo,
)
from .simstudy import (
    ErrorMixture,
    METHODS,
    Scenario,
    ScenarioResult,
    emit_table,
    generate_replication,
    run_scenario,
    sample_mixture,
    simex_config_for,
)

__version__ = "0.1.0"

__all__ = [
    "Bandwidth",
    "Dataset",
    "EmDiagnostics",
    "ErrorMixture",
    "ESTIMATORS",
    "ExtrapolationError",
    "ExtrapolationFit",
    "LambdaTrace",
    "METHODS",
    "OptimResult",
    "PoleError",
    "RegressionModel",
    "Scenario",
    "ScenarioResult",
    "SimexConfig",
    "default_lambda_grid",
    "emit_table",
    "estep_weights",
    "evaluate",
    "evaluate_extrapolant",
    "exponential_model",
    "fit_extrapolant",
    "generate_replication",
    "gradient",
    "huber_fit",
    "huber_rho",
    "linear_model",
    "linear_normal_attenuation",
    "log_phi_h",
    "lse_fit",
    "median_fit",
    "modal_em",
    "modal_objective",
    "naive_equivalence_check",
    "nelder_mead",
    "phi",
    "phi_h",
    "phi_h_deriv",
    "run_scenario",
    "sample_mixture",
    "simex_config_for",
    "simex_estimate",
    "simulate_pseudo",
    "weighted_gauss_newton",
]
