"""Closed-form proximal maps.

Every map here is pointwise, so it is the exact proximal map in any
diagonally weighted inner product as long as the functional is the
matching weighted sum of pointwise terms.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "prox_scaled_quadratic",
    "prox_nonneg_linear",
    "prox_linf_ball",
    "prox_linf_ball_moreau_yosida",
    "prox_state_constraint",
    "prox_state_constraint_conjugate",
    "prox_conjugate_moreau_yosida",
]


def _positive(name, value):
    # step sizes may be arrays (one step per point) as well as scalars
    if not np.all(np.asarray(value) > 0):
        raise ValueError(f"{name} must be positive, got {value}")


def prox_scaled_quadratic(tau, v):
    """Prox of ``tau * 0.5 * ||.||^2``: ``v / (1 + tau)``."""
    if np.any(np.asarray(tau) < 0):
        raise ValueError(f"tau must be nonnegative, got {tau}")
    return np.asarray(v, dtype=float) / (1.0 + tau)


def prox_nonneg_linear(tau, alpha, t):
    """Prox of ``G0(t) = alpha * t`` restricted to ``t >= 0``."""
    _positive("tau", tau)
    _positive("alpha", alpha)
    return np.maximum(0.0, np.asarray(t, dtype=float) - tau * alpha)


def prox_linf_ball(bound, v):
    """Projection onto ``[-bound, bound]``, i.e. the prox of its indicator for every step.

    This is ``prox_{sigma F*}`` for ``F = (1/alpha) ||.||_1`` with ``bound = 1/alpha``.
    """
    _positive("bound", bound)
    return np.clip(np.asarray(v, dtype=float), -bound, bound)


def prox_linf_ball_moreau_yosida(sigma, gamma, bound, v):
    """Prox of ``sigma * (indicator_[-bound, bound] + gamma/2 ||.||^2)``."""
    _positive("sigma", sigma)
    if np.any(np.asarray(gamma) < 0):
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    return prox_linf_ball(bound, np.asarray(v, dtype=float) / (1.0 + sigma * gamma))


def prox_state_constraint(t, alpha, c, zd, w):
    """Prox of ``t * F`` with ``F(y) = 1/(2 alpha) ||y - zd||^2 + indicator(y <= c)``."""
    _positive("t", t)
    _positive("alpha", alpha)
    w = np.asarray(w, dtype=float)
    return np.minimum(c, (alpha * w + t * np.asarray(zd, dtype=float)) / (alpha + t))


def prox_state_constraint_conjugate(sigma, alpha, c, zd, v):
    """``prox_{sigma F*}`` for the state-constrained tracking functional.

    Evaluated through the Moreau decomposition
    ``prox_{sigma F*}(v) = v - sigma * prox_{F/sigma}(v / sigma)``.
    ``c = inf`` removes the constraint.
    """
    _positive("sigma", sigma)
    v = np.asarray(v, dtype=float)
    return v - sigma * prox_state_constraint(1.0 / sigma, alpha, c, zd, v / sigma)


def prox_conjugate_moreau_yosida(prox_fstar, sigma, gamma, v):
    """Prox of ``sigma * (F* + gamma/2 ||.||^2)`` from a prox of ``F*``.

    ``prox_fstar(s, v)`` must evaluate ``prox_{s F*}(v)``.
    """
    scale = 1.0 + sigma * gamma
    return prox_fstar(sigma / scale, np.asarray(v, dtype=float) / scale)
