"""Bilevel optimisation with superquantile-Gibbs minima selection."""
from .baselines import PenaltyConfig, PenaltyVariant, pbgd_run, penalty_objective
from .errors import ConfigurationError, EstimatorError, InvalidArgumentError, \
    SamplerDivergenceError
from .gibbs import GibbsSampleBatch, LangevinConfig, lmc_step, sample_gibbs
from .problem import Ball, BilevelProblem, Box, Sense, gradient_mapping, interiorize, project
from .problems import HypercleanSpec, ToySpec, make_hyperclean, make_quadratic, \
    make_quartic_sphere, make_toy
from .pszo import BoundaryMode, OuterConfig, OuterTrajectory, pszo_minsel, \
    stationarity_report, two_point_estimator
from .superquantile import SqConfig, SqEstimate, StepRule, Tail, psgd_beta, sq_estimate

__version__ = "0.1.0"

__all__ = [
    "Ball", "BilevelProblem", "Box", "BoundaryMode", "ConfigurationError", "EstimatorError",
    "GibbsSampleBatch", "HypercleanSpec", "InvalidArgumentError", "LangevinConfig",
    "OuterConfig", "OuterTrajectory", "PenaltyConfig", "PenaltyVariant",
    "SamplerDivergenceError", "Sense", "SqConfig", "SqEstimate", "StepRule", "Tail", "ToySpec",
    "gradient_mapping", "interiorize", "lmc_step", "make_hyperclean", "make_quadratic",
    "make_quartic_sphere", "make_toy", "pbgd_run", "penalty_objective", "project", "psgd_beta",
    "pszo_minsel", "sample_gibbs", "sq_estimate", "stationarity_report", "two_point_estimator",
]
