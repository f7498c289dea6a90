"""Target position estimation from one set of bearing measurements.

The pipeline is a closed-form line-intersection guess followed by an
iterative weighted least-squares (Gauss-Newton) refinement on the chordal
bearing residual.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateGeometry
from .geometry import as_vec3, bearing_function, orthogonal_projector, rigidity_jacobian
from .sensing import stacked_noise_covariance

log = logging.getLogger(__name__)

A_RCOND = 1e-9
NORMAL_RCOND = 1e-12
SEEKER_CLEARANCE = 1e-6
MAX_HALVINGS = 20


@dataclass(frozen=True)
class WlsConfig:
    weight: np.ndarray
    tolerance: float = 1e-4
    max_iterations: int = 50

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if int(self.max_iterations) < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        w = np.asarray(self.weight, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 3:
            raise ConfigError(f"weight must be 3n x 3n, got shape {w.shape}")
        if not np.allclose(w, w.T, rtol=0, atol=1e-10 * max(1.0, np.abs(w).max())):
            raise ConfigError("weight matrix is not symmetric")
        if np.linalg.eigvalsh(w).min() <= 0:
            raise ConfigError("weight matrix is not positive definite")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "max_iterations", int(self.max_iterations))

    @classmethod
    def from_noise(cls, model, tolerance=1e-4, max_iterations=50):
        """Weight = inverse stacked noise covariance (block-diagonal, inverted blockwise)."""
        w = np.kron(np.diag(model.weights), np.eye(3))
        return cls(w, tolerance, max_iterations)


@dataclass(frozen=True)
class Estimate:
    position: np.ndarray
    covariance: np.ndarray
    iterations: int
    converged: bool


def _check_rcond(m, rcond, what):
    ev = np.linalg.eigvalsh(0.5 * (m + m.T))
    if ev[-1] <= 0 or ev[0] / ev[-1] < rcond:
        raise DegenerateGeometry(
            f"{what} is singular (eigenvalues {ev[0]:.3g} .. {ev[-1]:.3g}); "
            "bearings are (nearly) collinear"
        )


def line_distance_cost(p, measurements):
    """Half the summed squared distances from ``p`` to every measured bearing line."""
    p = as_vec3(p)
    total = 0.0
    for b, p_i in zip(measurements.bearings, measurements.seeker_positions):
        # r^T P r == |P r|^2 (P symmetric idempotent); the latter avoids cancellation
        off_line = orthogonal_projector(b) @ (p_i - p)
        total += off_line @ off_line
    return 0.5 * total


def initialize(measurements):
    """Closed-form minimizer of :func:`line_distance_cost`."""
    A = np.zeros((3, 3))
    y = np.zeros(3)
    for b, p_i in zip(measurements.bearings, measurements.seeker_positions):
        P = orthogonal_projector(b)
        A += P
        y += P @ p_i
    _check_rcond(A, A_RCOND, "line-intersection matrix")
    return np.linalg.solve(A, y)


def chordal_cost(p, measurements, weight):
    """Weighted squared chordal residual ``||b_meas - f(p)||_W^2``."""
    r = measurements.stacked - bearing_function(p, measurements.seeker_positions)
    return float(r @ weight @ r)


def estimate_covariance(p_est, measurements, weight, noise_cov):
    """Linearized covariance ``G noise_cov G^T`` with ``G = (F^T W F)^-1 F^T W``."""
    F = rigidity_jacobian(p_est, measurements.seeker_positions)
    normal = F.T @ weight @ F
    _check_rcond(normal, NORMAL_RCOND, "normal matrix")
    gain = np.linalg.solve(normal, F.T @ weight)
    cov = gain @ noise_cov @ gain.T
    return 0.5 * (cov + cov.T)


def _too_close(p, seekers):
    return np.min(np.linalg.norm(seekers - p, axis=1)) < SEEKER_CLEARANCE


def wls_solve(initial, measurements, config, noise_cov=None):
    """Iterative WLS refinement starting from ``initial``.

    Each iteration takes a full Gauss-Newton step on the chordal residual and
    stops once the step norm drops to ``config.tolerance``.  Hitting
    ``max_iterations`` returns a non-converged estimate rather than raising.
    ``noise_cov`` defaults to ``inv(config.weight)``.
    """
    p = as_vec3(initial).copy()
    seekers = measurements.seeker_positions
    W = config.weight
    if W.shape[0] != 3 * measurements.n:
        raise ConfigError(f"weight is {W.shape[0]}x{W.shape[0]}, need {3 * measurements.n}")
    b_meas = measurements.stacked
    converged = False
    iterations = 0
    while iterations < config.max_iterations:
        iterations += 1
        F = rigidity_jacobian(p, seekers)
        residual = b_meas - bearing_function(p, seekers)
        normal = F.T @ W @ F
        _check_rcond(normal, NORMAL_RCOND, "normal matrix")
        step = np.linalg.solve(normal, F.T @ W @ residual)
        for _ in range(MAX_HALVINGS):
            if not _too_close(p + step, seekers):
                break
            step = 0.5 * step
        p = p + step
        if np.linalg.norm(step) <= config.tolerance:
            converged = True
            break
    if not converged:
        log.debug("WLS hit max_iterations=%d at %s", config.max_iterations, p)
    if noise_cov is None:
        noise_cov = np.linalg.inv(W)
    cov = estimate_covariance(p, measurements, W, noise_cov)
    return Estimate(p, cov, iterations, converged)


def localize(measurements, model, tolerance=1e-4, max_iterations=50, previous=None):
    """Cold- or warm-started WLS with the default noise-matched weight."""
    config = WlsConfig.from_noise(model, tolerance, max_iterations)
    if previous is not None and previous.converged:
        start = warm_start(previous)
    else:
        start = initialize(measurements)
    return wls_solve(start, measurements, config, stacked_noise_covariance(model))


def warm_start(previous):
    """Initial guess for the next solve: the previous converged position."""
    if not previous.converged:
        raise ValueError("cannot warm-start from a non-converged estimate; use initialize()")
    return np.array(previous.position, dtype=float)
