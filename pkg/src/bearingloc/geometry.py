"""Sphere and projector primitives.

Vectors are plain ``numpy`` arrays of shape ``(3,)``; bearings are unit
3-vectors and tangent vectors are 3-vectors orthogonal to their base bearing.
"""

import numpy as np

from .errors import CoincidentPoints, ZeroVector

_ZERO_NORM = 1e-12
_COINCIDENT = 1e-9
_SINC_TAYLOR_BELOW = 1e-4


def as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v!r}")
    return v


def orthogonal_projector(x) -> np.ndarray:
    """Return ``I - x x^T / (x^T x)``, the projector onto the plane orthogonal to ``x``."""
    x = as_vec3(x)
    nsq = float(x @ x)
    if np.sqrt(nsq) < _ZERO_NORM:
        raise ZeroVector("cannot build a projector from a zero vector")
    return np.eye(3) - np.outer(x, x) / nsq


def bearing(observer, target) -> np.ndarray:
    """Unit vector pointing from ``observer`` toward ``target``."""
    diff = as_vec3(target) - as_vec3(observer)
    dist = np.linalg.norm(diff)
    if dist <= _COINCIDENT:
        raise CoincidentPoints(f"observer and target coincide (distance {dist:.3g} m)")
    return diff / dist


def sinc(a: float) -> float:
    """sin(a)/a with a Taylor expansion near zero."""
    if abs(a) < _SINC_TAYLOR_BELOW:
        a2 = a * a
        return 1.0 - a2 / 6.0 + a2 * a2 / 120.0
    return np.sin(a) / a


def exp_map(base, v) -> np.ndarray:
    """Exponential map on the unit sphere: move from ``base`` along tangent ``v``.

    ``v`` must be orthogonal to ``base``; its norm is the arc length travelled.
    """
    base = as_vec3(base)
    v = as_vec3(v)
    a = float(np.linalg.norm(v))
    return np.cos(a) * base + sinc(a) * v


def tangent_component(base, x) -> np.ndarray:
    """Project ``x`` onto the tangent plane at unit vector ``base``."""
    base = as_vec3(base)
    x = as_vec3(x)
    return x - (base @ x) * base


def rigidity_jacobian(p_est, seekers) -> np.ndarray:
    """Stacked Jacobian of the bearing function, shape ``(3n, 3)``.

    Block ``i`` is ``P(b_i) / d_i`` where ``b_i`` is the bearing from seeker
    ``i`` to ``p_est`` and ``d_i`` their distance.
    """
    p_est = as_vec3(p_est)
    seekers = np.asarray(seekers, dtype=float).reshape(-1, 3)
    blocks = []
    for i, p_i in enumerate(seekers):
        diff = p_est - p_i
        d = np.linalg.norm(diff)
        if d <= _COINCIDENT:
            raise CoincidentPoints(f"estimate coincides with seeker {i}", index=i)
        blocks.append(orthogonal_projector(diff) / d)
    return np.vstack(blocks)


def bearing_function(p, seekers) -> np.ndarray:
    """Stacked bearings from every seeker toward ``p``, shape ``(3n,)``."""
    out = []
    for i, p_i in enumerate(np.asarray(seekers, dtype=float).reshape(-1, 3)):
        try:
            out.append(bearing(p_i, p))
        except CoincidentPoints as exc:
            raise CoincidentPoints(f"point coincides with seeker {i}", index=i) from exc
    return np.concatenate(out)
