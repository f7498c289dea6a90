"""Active-sensing control: D-optimality reward and projected gradient ascent.

The reward is ``J = det(M)`` with the information matrix
``M = sum_i P(b_i) / (sigma_i^2 d_i^2)``, where ``b_i`` and ``d_i`` are the
estimated bearing and distance from seeker ``i`` to the current target
estimate.  Each seeker moves along the tangential part of ``dJ/dp_i`` so its
distance to the estimate is held (to first order).
"""

from dataclasses import dataclass

import numpy as np

from .errors import CoincidentPoints, ConfigError
from .geometry import as_vec3, orthogonal_projector


@dataclass(frozen=True)
class ControlConfig:
    gain: float = 0.002

    def __post_init__(self):
        if not self.gain >= 0:
            raise ConfigError(f"gain must be nonnegative, got {self.gain}")


def _relative(p_est, seekers):
    p_est = as_vec3(p_est)
    seekers = np.asarray(seekers, dtype=float).reshape(-1, 3)
    r = p_est - seekers
    d = np.linalg.norm(r, axis=1)
    for i, di in enumerate(d):
        if di <= 1e-9:
            raise CoincidentPoints(f"seeker {i} coincides with the target estimate", index=i)
    return r, d


def _check_model(model, n):
    if model.n != n:
        raise ConfigError(f"noise model has {model.n} agents, scene has {n}")


def information_matrix(p_est, seekers, model):
    r, d = _relative(p_est, seekers)
    _check_model(model, len(d))
    M = np.zeros((3, 3))
    for ri, di, w in zip(r, d, model.weights):
        M += w / di**2 * orthogonal_projector(ri)
    return M


def reward(p_est, seekers, model):
    """Determinant of the information matrix (clipped at zero for rank-deficient scenes)."""
    return max(float(np.linalg.det(information_matrix(p_est, seekers, model))), 0.0)


def reward_gradient(p_est, seekers, model, i):
    """Analytic ``dJ/dp_i`` via ``dJ = J tr(M^-1 dM)``.

    With ``r = p_est - p_i``, ``d = |r|`` and ``C = M^-1``,
    ``dJ/dp_i = (2 J / (sigma_i^2 d^4)) (tr(C) r + C r - 2 (r^T C r / d^2) r)``.
    For a singular ``M`` the adjugate replaces ``J C`` so the gradient stays finite.
    """
    r, d = _relative(p_est, seekers)
    _check_model(model, len(d))
    M = information_matrix(p_est, seekers, model)
    JC = _adjugate(M)
    ri, di, w = r[i], d[i], model.weights[i]
    JCr = JC @ ri
    return 2.0 * w / di**4 * (np.trace(JC) * ri + JCr - 2.0 * (ri @ JCr) / di**2 * ri)


def _adjugate(M):
    """Adjugate of a 3x3 matrix (``det(M) inv(M)`` when invertible)."""
    c0, c1, c2 = M[:, 0], M[:, 1], M[:, 2]
    return np.array([np.cross(c1, c2), np.cross(c2, c0), np.cross(c0, c1)])


def tangential_gradient(p_est, seekers, model, i):
    """Bearing-direction term ``(dJ/db_i)(db_i/dp_i)``, treating bearing and distance as independent."""
    r, d = _relative(p_est, seekers)
    _check_model(model, len(d))
    JC = _adjugate(information_matrix(p_est, seekers, model))
    b = r[i] / d[i]
    w = model.weights[i]
    dJ_db = -2.0 * w / d[i] ** 2 * (JC @ b)
    db_dp = -orthogonal_projector(b) / d[i]
    return db_dp.T @ dJ_db


def control_input(p_est, seekers, model, i, config):
    """Velocity for seeker ``i``: gain times the gradient projected off the estimated bearing."""
    r, _ = _relative(p_est, seekers)
    return config.gain * orthogonal_projector(r[i]) @ reward_gradient(p_est, seekers, model, i)


def control_inputs(p_est, seekers, model, config):
    seekers = np.asarray(seekers, dtype=float).reshape(-1, 3)
    return np.array([control_input(p_est, seekers, model, i, config) for i in range(len(seekers))])


def finite_difference_gradient(p_est, seekers, model, i, step=1e-5):
    """Central finite-difference ``dJ/dp_i``; a debugging oracle for :func:`reward_gradient`."""
    seekers = np.array(seekers, dtype=float).reshape(-1, 3)
    g = np.zeros(3)
    for k in range(3):
        plus = seekers.copy()
        minus = seekers.copy()
        plus[i, k] += step
        minus[i, k] -= step
        g[k] = (
            np.linalg.det(information_matrix(p_est, plus, model))
            - np.linalg.det(information_matrix(p_est, minus, model))
        ) / (2 * step)
    return g
