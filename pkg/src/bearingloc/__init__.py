"""Bearing-only target localization with iterative WLS and active-sensing control."""

__version__ = "0.1.0"

from .errors import (
    BearingLocError,
    CoincidentPoints,
    ConfigError,
    DegenerateGeometry,
    Singular,
    ZeroVector,
)
from .geometry import bearing, exp_map, orthogonal_projector, rigidity_jacobian
from .sensing import MeasurementSet, NoiseModel, measure, measure_all
from .estimator import Estimate, WlsConfig, initialize, localize, wls_solve
from .controller import ControlConfig, control_input, information_matrix, reward, reward_gradient
from .simulator import SCENARIOS, Scenario, closeness, condition_number, monte_carlo, run_episode
