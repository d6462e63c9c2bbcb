"""Hawkes process simulation, calibration and bias experiments."""

from .calibrate import FitResult, MultiStartConfig, cost_surface, fit, log_likelihood, profile_cost
from .errors import (
    DegenerateProfileError,
    DomainError,
    FitFailureError,
    HawkesError,
    InsufficientDataError,
    NonpositiveIntensityError,
    ParameterDomainError,
    TruncationError,
)
from .kernels import ApproxPowerLaw, CutoffPowerLaw, Exponential, Omori
from .series import BackgroundProfile, EventSeries, read_series, write_series
from .simulate import HawkesParams, simulate_branching, simulate_hawkes, simulate_thinning

__version__ = "0.1.0"
