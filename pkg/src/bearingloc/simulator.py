"""Closed-loop discrete-time world, Monte Carlo harness and scene metrics."""

import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .controller import ControlConfig, control_inputs, information_matrix, reward
from .errors import BearingLocError, CoincidentPoints, ConfigError, Singular
from .estimator import Estimate, localize
from .geometry import bearing
from .sensing import DEFAULT_SIGMA, NoiseModel, measure_all

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.01


class BatchFailed(BearingLocError):
    def __init__(self, message, failures):
        super().__init__(message)
        self.failures = failures


class EpisodeError(BearingLocError):
    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class Scenario:
    target: np.ndarray
    seeker_init: np.ndarray
    sigma: np.ndarray = None  # per-agent std, rad
    sample_period: float = 0.1
    duration: float = 15.0
    gain: float = 0.002
    tolerance: float = 1e-4
    trials: int = 1000
    seed: int = 0
    max_iterations: int = 50
    name: str = ""

    def __post_init__(self):
        target = np.asarray(self.target, dtype=float).reshape(3)
        seekers = np.asarray(self.seeker_init, dtype=float)
        if seekers.ndim != 2 or seekers.shape[1] != 3:
            raise ConfigError(f"seekers must be a list of 3-vectors, got shape {seekers.shape}")
        n = seekers.shape[0]
        if n < 2:
            raise ConfigError(f"n >= 2 required, got {n} seeker(s)")
        sigma = DEFAULT_SIGMA if self.sigma is None else self.sigma
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (n,)).copy()
        if not (self.sample_period > 0):
            raise ConfigError(f"sample_period must be positive, got {self.sample_period}")
        if not (self.duration >= 0):
            raise ConfigError(f"duration must be nonnegative, got {self.duration}")
        if int(self.trials) < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        for i, p in enumerate(seekers):
            if np.linalg.norm(p - target) <= 1e-9:
                raise ConfigError(f"seeker {i} coincides with the target")
        NoiseModel(sigma)
        ControlConfig(self.gain)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "seeker_init", seekers)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n(self):
        return self.seeker_init.shape[0]

    @property
    def noise(self):
        return NoiseModel(self.sigma)

    @property
    def steps(self):
        """Number of logged sample instants, ``floor(duration / T) + 1``."""
        return int(math.floor(self.duration / self.sample_period + 1e-9)) + 1


_ORIGIN = (0.0, 0.0, 0.0)

SCENARIOS = {
    "S_a": Scenario(_ORIGIN, [(-15, 0, 0), (-15, 3, 0), (-15, 0, 1)], name="S_a"),
    "S_b": Scenario(_ORIGIN, [(0, 15, 0), (-15, 3, 0), (-15, 0, 1)], name="S_b"),
    "S_c": Scenario(_ORIGIN, [(0, 15, 0), (-15, 3, 0), (0, 0, 15)], name="S_c"),
}


@dataclass(frozen=True)
class WorldState:
    time: float
    seekers: np.ndarray
    current_estimate: Optional[Estimate] = None
    k: int = 0


@dataclass(frozen=True)
class StepRecord:
    time: float
    seekers: np.ndarray  # positions at which the measurement was taken
    velocities: np.ndarray
    estimate: Estimate
    reward_est: float
    reward_true: float
    condition_number: float  # theoretical covariance at the true target
    condition_number_est: float  # same, evaluated at the estimate


@dataclass(frozen=True)
class TrialResult:
    estimate: Estimate

    @property
    def iterations(self):
        return self.estimate.iterations


@dataclass(frozen=True)
class McSummary:
    empirical_mean: np.ndarray
    empirical_cov: np.ndarray
    theoretical_cov: np.ndarray
    iteration_histogram: dict
    theta_m: float
    reward_value: float
    condition_number: float
    trials: list = field(repr=False)
    failures: dict = field(default_factory=dict)


def closeness(seekers, target):
    """Mean pairwise ``arcsin(|b_i x b_j|)`` over the bearings toward ``target``.

    Evaluated as ``atan2(|b_i x b_j|, |b_i . b_j|)``, equal for unit vectors
    but well conditioned near right angles.  Range is [0, pi/2].
    """
    seekers = np.asarray(seekers, dtype=float).reshape(-1, 3)
    n = len(seekers)
    if n < 2:
        raise ConfigError("closeness needs at least two seekers")
    b = []
    for i, p in enumerate(seekers):
        try:
            b.append(bearing(p, target))
        except CoincidentPoints as exc:
            raise CoincidentPoints(f"seeker {i} coincides with the target", index=i) from exc
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            cross = float(np.linalg.norm(np.cross(b[i], b[j])))
            total += math.atan2(cross, abs(float(b[i] @ b[j])))
    return total / (n * (n - 1) / 2)


def condition_number(m):
    ev = np.linalg.eigvalsh(0.5 * (np.asarray(m) + np.asarray(m).T))
    if ev[0] <= 0:
        raise Singular(f"matrix is not positive definite (min eigenvalue {ev[0]:.3g})")
    return float(ev[-1] / ev[0])


def _cond_or_inf(info):
    ev = np.linalg.eigvalsh(info)
    return float(ev[-1] / ev[0]) if ev[0] > 0 else math.inf


def theoretical_covariance(scenario, seekers=None, point=None):
    """Inverse information matrix at ``point`` (default: the true target)."""
    seekers = scenario.seeker_init if seekers is None else seekers
    point = scenario.target if point is None else point
    return np.linalg.inv(information_matrix(point, seekers, scenario.noise))


def initial_state(scenario):
    return WorldState(0.0, scenario.seeker_init.copy())


def step(state, scenario, rng):
    """Advance one sample period: measure, estimate, control, Euler-integrate.

    Returns ``(new_state, record)`` where ``record`` describes the sample
    instant ``state.time``.
    """
    model = scenario.noise
    try:
        meas = measure_all(state.seekers, scenario.target, model, rng, state.time)
        est = localize(
            meas, model, scenario.tolerance, scenario.max_iterations, previous=state.current_estimate
        )
        u = control_inputs(est.position, state.seekers, model, ControlConfig(scenario.gain))
        M_est = information_matrix(est.position, state.seekers, model)
        M_true = information_matrix(scenario.target, state.seekers, model)
    except BearingLocError as exc:
        raise EpisodeError(f"t={state.time:.6g}s: {exc}", state.time) from exc
    record = StepRecord(
        state.time,
        state.seekers.copy(),
        u,
        est,
        max(float(np.linalg.det(M_est)), 0.0),
        max(float(np.linalg.det(M_true)), 0.0),
        _cond_or_inf(M_true),
        _cond_or_inf(M_est),
    )
    k = state.k + 1
    new = WorldState(k * scenario.sample_period, state.seekers + scenario.sample_period * u, est, k)
    return new, record


def episode_rng(seed):
    return np.random.default_rng(np.random.SeedSequence([int(seed), 0xE915]))


def trial_rng(seed, k):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(k)]))


def run_episode(scenario, rng=None):
    """Closed-loop run; one :class:`StepRecord` per sample instant."""
    rng = episode_rng(scenario.seed) if rng is None else rng
    state = initial_state(scenario)
    records = []
    for _ in range(scenario.steps):
        state, rec = step(state, scenario, rng)
        records.append(rec)
    return records


def run_trial(scenario, k):
    """Single-shot localization at the initial seeker positions."""
    rng = trial_rng(scenario.seed, k)
    model = scenario.noise
    meas = measure_all(scenario.seeker_init, scenario.target, model, rng)
    return TrialResult(localize(meas, model, scenario.tolerance, scenario.max_iterations))


def _safe_trial(args):
    scenario, k = args
    try:
        return k, run_trial(scenario, k), None
    except BearingLocError as exc:
        return k, None, str(exc)


def monte_carlo(scenario, threads=1):
    """Independent localization trials at fixed seeker positions, aggregated.

    Trial ``k`` is seeded from ``(scenario.seed, k)`` so results do not depend
    on ``threads``.
    """
    if scenario.trials < 2:
        raise ConfigError("monte_carlo needs trials >= 2")
    jobs = [(scenario, k) for k in range(scenario.trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_safe_trial, jobs))
    else:
        outcomes = [_safe_trial(j) for j in jobs]
    outcomes.sort(key=lambda o: o[0])

    failures = {k: msg for k, _, msg in outcomes if msg is not None}
    if len(failures) > MAX_FAILURE_FRACTION * scenario.trials:
        raise BatchFailed(
            f"{len(failures)} of {scenario.trials} trials failed "
            f"(first: trial {min(failures)}: {failures[min(failures)]})",
            failures,
        )
    for k, msg in failures.items():
        log.warning("trial %d failed: %s", k, msg)

    results = [r for _, r, _ in outcomes if r is not None]
    positions = np.array([r.estimate.position for r in results])
    mean = positions.mean(axis=0)
    centered = positions - mean
    emp_cov = centered.T @ centered / (len(positions) - 1)
    hist = Counter(r.iterations for r in results)
    theo = theoretical_covariance(scenario)
    return McSummary(
        empirical_mean=mean,
        empirical_cov=emp_cov,
        theoretical_cov=theo,
        iteration_histogram=dict(sorted(hist.items())),
        theta_m=closeness(scenario.seeker_init, scenario.target),
        reward_value=reward(scenario.target, scenario.seeker_init, scenario.noise),
        condition_number=condition_number(theo),
        trials=[(k, r) for k, r, _ in outcomes],
        failures=failures,
    )


def with_overrides(scenario, **kw):
    return replace(scenario, **{k: v for k, v in kw.items() if v is not None})
