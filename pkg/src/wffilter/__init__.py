"""Exact filtering, smoothing and likelihood for a discretely observed
Wright-Fisher diffusion.

All conditional laws of the hidden frequency are finite mixtures of Beta
distributions; see :class:`BetaMixture`.
"""
from .errors import (
    DegenerateMixtureError,
    DegenerateWeightsError,
    DepthError,
    DistinctRatesError,
    DomainError,
    ImpossibleObservationError,
    NumericalError,
    TruncationError,
    WFFilterError,
)
from .kernel import (
    DEFAULT_MAX_DEPTH,
    ModelParams,
    RateLadder,
    drift_coeff,
    eigen_rate,
    exp_divided_difference,
    get_ladder,
    log_beta_ratio,
)
from .mixture import BetaMixture, LatticeIndex, density_at, moment, normalize, prune, stationary
from .observation import ObservationModel, component_marginal, predictive_prob, sample_observation, update
from .propagation import HPolynomial, moment_expansion, propagate, propagate_component
from .filter import FilterState, FilterTrace, log_likelihood, predict_h, run_filter
from .smoother import backward_functions, backward_init, backward_step, smooth_all, smooth_marginal
from .estimation import MLEConfig, MLEResult, estimate_mle, profile_loglik

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_MAX_DEPTH",
    "BetaMixture",
    "DegenerateMixtureError",
    "DegenerateWeightsError",
    "DepthError",
    "DistinctRatesError",
    "DomainError",
    "FilterState",
    "FilterTrace",
    "HPolynomial",
    "ImpossibleObservationError",
    "LatticeIndex",
    "MLEConfig",
    "MLEResult",
    "ModelParams",
    "NumericalError",
    "ObservationModel",
    "RateLadder",
    "TruncationError",
    "WFFilterError",
    "backward_functions",
    "backward_init",
    "backward_step",
    "component_marginal",
    "density_at",
    "drift_coeff",
    "eigen_rate",
    "estimate_mle",
    "exp_divided_difference",
    "get_ladder",
    "log_beta_ratio",
    "log_likelihood",
    "moment",
    "moment_expansion",
    "normalize",
    "predict_h",
    "predictive_prob",
    "profile_loglik",
    "propagate",
    "propagate_component",
    "prune",
    "run_filter",
    "sample_observation",
    "smooth_all",
    "smooth_marginal",
    "stationary",
    "update",
]
