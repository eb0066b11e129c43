"""Age-of-information analysis, optimization and simulation for random access
networks with active transmitters and passive observers."""

from .core import NetworkShape, Objective, SecondOrderPoint
from .errors import (
    AgeCapError,
    AoIError,
    DegenerateChainError,
    DegenerateProcessError,
    ErgodicityError,
    ParameterError,
)
from .secondorder import approx_aoi_moment, ig_moment, objective, power_sum
from .twostate import (
    LambdaTheta,
    TwoStateParams,
    cubic_roots,
    lemma_checks,
    optimize_two_state,
    two_state_means,
    two_state_moments,
    two_state_variances,
)
from .wag import WagParams, optimize_wag, wag_means, wag_moments, wag_phi, wag_variances

__version__ = "0.1.0"

__all__ = [
    "AgeCapError",
    "AoIError",
    "DegenerateChainError",
    "DegenerateProcessError",
    "ErgodicityError",
    "LambdaTheta",
    "NetworkShape",
    "Objective",
    "ParameterError",
    "SecondOrderPoint",
    "TwoStateParams",
    "WagParams",
    "approx_aoi_moment",
    "cubic_roots",
    "ig_moment",
    "lemma_checks",
    "objective",
    "optimize_two_state",
    "optimize_wag",
    "power_sum",
    "two_state_means",
    "two_state_moments",
    "two_state_variances",
    "wag_means",
    "wag_moments",
    "wag_phi",
    "wag_variances",
]
