"""Noisy bearing synthesis and the additive-noise view of a measurement."""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .errors import ConfigError
from .geometry import as_vec3, bearing, exp_map, orthogonal_projector, sinc

DEFAULT_SIGMA = np.pi / 180.0


@dataclass(frozen=True)
class NoiseModel:
    """Isotropic per-agent bearing noise; ``sigma[i]`` is a standard deviation in radians."""

    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if sigma.ndim != 1 or sigma.size == 0 or np.any(~(sigma > 0)):
            raise ConfigError(f"sigma must be positive for every agent, got {sigma}")
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def uniform(cls, n, sigma=DEFAULT_SIGMA):
        return cls(np.full(n, float(sigma)))

    @property
    def n(self):
        return self.sigma.size

    @property
    def weights(self):
        """Per-agent information weights ``1 / sigma_i**2``."""
        return 1.0 / self.sigma**2


@dataclass(frozen=True)
class MeasurementSet:
    bearings: np.ndarray  # (n, 3), unit rows
    seeker_positions: np.ndarray  # (n, 3)
    timestamp: float = 0.0
    n: int = field(init=False)

    def __post_init__(self):
        b = np.asarray(self.bearings, dtype=float).reshape(-1, 3)
        p = np.asarray(self.seeker_positions, dtype=float).reshape(-1, 3)
        if b.shape != p.shape:
            raise ConfigError(
                f"{b.shape[0]} bearings but {p.shape[0]} seeker positions"
            )
        if b.shape[0] < 2:
            raise ConfigError(f"n >= 2 required, got {b.shape[0]} agent(s)")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(p))):
            raise ConfigError("non-finite bearing or position")
        norms = np.linalg.norm(b, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-6)
        if bad.size:
            raise ConfigError(f"bearing of agent {bad[0]} is not unit norm ({norms[bad[0]]:.9g})")
        b = b / norms[:, None]
        object.__setattr__(self, "bearings", b)
        object.__setattr__(self, "seeker_positions", p)
        object.__setattr__(self, "n", b.shape[0])

    @property
    def stacked(self):
        """Bearings as one ``(3n,)`` vector."""
        return self.bearings.reshape(-1)


def sample_tangent_perturbation(b, sigma, rng):
    """Draw ``w ~ N(0, sigma^2 I)`` and return ``P(b) w``, a tangent vector at ``b``."""
    b = as_vec3(b)
    w = rng.normal(0.0, sigma, size=3)
    return orthogonal_projector(b) @ w


def measure(seeker, target, sigma, rng):
    """One noisy bearing from ``seeker`` toward ``target``."""
    b = bearing(seeker, target)
    return exp_map(b, sample_tangent_perturbation(b, sigma, rng))


def measure_all(seekers, target, model, rng, timestamp=0.0):
    """Noisy bearings from every seeker; draws are taken in seeker order."""
    seekers = np.asarray(seekers, dtype=float).reshape(-1, 3)
    if model.n != seekers.shape[0]:
        raise ConfigError(f"noise model has {model.n} agents, scene has {seekers.shape[0]}")
    bearings = np.array([measure(p, target, s, rng) for p, s in zip(seekers, model.sigma)])
    return MeasurementSet(bearings, seekers.copy(), timestamp)


def additive_noise(b, v):
    """Noise ``n`` such that ``exp_map(b, v) == b + n``."""
    b = as_vec3(b)
    v = as_vec3(v)
    a = float(np.linalg.norm(v))
    return (np.cos(a) - 1.0) * b + sinc(a) * v


def stacked_noise_covariance(model):
    """Block-diagonal ``diag(sigma_1^2 I3, ..., sigma_n^2 I3)``."""
    return block_diag(*[s * s * np.eye(3) for s in model.sigma])
