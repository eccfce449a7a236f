"""Augmented-Lagrangian transcription of the inequality constraints.

For multipliers ``gamma[i, k] >= 0`` and penalty ``sigma > 0`` the running
cost at step ``k`` becomes

    L(x, u) + 1/(2 sigma) * sum_i ( max(0, gamma[i,k] + sigma c_i)**2 - gamma[i,k]**2 )

At ``gamma + sigma c == 0`` the inactive branch is used for derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError, InvalidStateError
from .model import as_controls


@dataclass(frozen=True)
class PenaltyState:
    """Penalty parameter, multiplier table ``gamma`` of shape ``(l, N+1)`` and outer index ``j``."""

    sigma: float
    gamma: np.ndarray
    j: int = 1

    @classmethod
    def initial(cls, l, N, sigma):
        return cls(float(sigma), np.zeros((l, N + 1)), 1)


@dataclass(frozen=True)
class AugmentedProblem:
    model: object
    penalty: PenaltyState
    N: int
    x0: np.ndarray

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.model.dims.n,):
            raise InvalidArgumentError(f"x0 must have shape ({self.model.dims.n},), got {x0.shape}")
        object.__setattr__(self, "x0", x0)
        if self.penalty.gamma.shape != (self.model.dims.l, self.N + 1):
            raise InvalidArgumentError(
                f"multiplier table has shape {self.penalty.gamma.shape}, expected {(self.model.dims.l, self.N + 1)}"
            )

    @classmethod
    def unconstrained(cls, model, N, x0, sigma=1.0):
        return cls(model, PenaltyState.initial(model.dims.l, N, sigma), N, x0)

    def with_penalty(self, penalty):
        return replace(self, penalty=penalty)


def _check_sigma(ps):
    if not ps.sigma > 0:
        raise InvalidStateError(f"penalty parameter must be positive, got {ps.sigma}")


def _penalty_curvature(sigma, active, pos, jc, hc):
    d = jc.shape[-1]
    curv = (pos[..., None, :] @ hc.reshape(hc.shape[:-2] + (d * d,))).reshape(hc.shape[:-3] + (d, d))
    return sigma * (np.swapaxes(jc * active[..., None], -1, -2) @ jc) + curv


def _augment(model, sigma, gam, ks, x, u, order):
    cost = model.running_cost(ks, x, u)
    grad = model.cost_gradient(ks, x, u) if order >= 1 else None
    hess = model.cost_hessian(ks, x, u) if order >= 2 else None
    if model.dims.l == 0:
        return cost, grad, hess
    a = gam + sigma * model.constraint_values(x, u)
    active = a > 0.0
    pos = np.where(active, a, 0.0)
    cost = cost + np.sum(pos**2 - gam**2, axis=-1) / (2.0 * sigma)
    if order >= 1:
        jc = model.constraint_gradients(x, u)
        grad = grad + (pos[..., None, :] @ jc)[..., 0, :]
    if order >= 2:
        hess = hess + _penalty_curvature(sigma, active, pos, jc, model.constraint_hessians(x, u))
    return cost, grad, hess


def stage_terms(ap, x, u, order=2):
    """Augmented running cost over all steps, with derivatives up to ``order``.

    Returns ``(cost, grad, hess)`` with shapes ``(N+1,)``, ``(N+1, n+m)`` and
    ``(N+1, n+m, n+m)``; entries beyond ``order`` are None.
    """
    _check_sigma(ap.penalty)
    return _augment(ap.model, ap.penalty.sigma, ap.penalty.gamma.T, np.arange(len(u)), x, u, order)


def stage_hessians(ap, x, u):
    """Hessians ``(N+1, n+m, n+m)`` of the augmented running cost, without the cost or gradient."""
    _check_sigma(ap.penalty)
    model, sigma = ap.model, ap.penalty.sigma
    hess = model.cost_hessian(np.arange(len(u)), x, u)
    if model.dims.l == 0:
        return hess
    a = ap.penalty.gamma.T + sigma * model.constraint_values(x, u)
    active = a > 0.0
    pos = np.where(active, a, 0.0)
    jc = model.constraint_gradients(x, u)
    return hess + _penalty_curvature(sigma, active, pos, jc, model.constraint_hessians(x, u))


def _single(ap, k, x, u, order):
    if not 0 <= k <= ap.N:
        raise InvalidArgumentError(f"step {k} outside 0..{ap.N}")
    _check_sigma(ap.penalty)
    x = np.asarray(x, dtype=float)[None, :]
    u = np.asarray(u, dtype=float)[None, :]
    gam = ap.penalty.gamma[:, k][None, :]
    cost, grad, hess = _augment(ap.model, ap.penalty.sigma, gam, k, x, u, order)
    return cost[0], (None if grad is None else grad[0]), (None if hess is None else hess[0])


def augmented_running_cost(ap, k, x, u):
    return float(_single(ap, k, x, u, 0)[0])


def augmented_cost_derivatives(ap, k, x, u):
    """Gradient ``(n+m,)`` and Hessian ``(n+m, n+m)`` of the augmented running cost."""
    _, g, h = _single(ap, k, x, u, 2)
    return g, h


def update_multipliers(ps, x, u, model, beta, sigma_max=np.inf):
    """``gamma <- max(0, gamma + sigma c)`` and ``sigma <- min(beta sigma, sigma_max)``."""
    if not beta > 1:
        raise InvalidArgumentError(f"beta must exceed 1, got {beta}")
    _check_sigma(ps)
    u = as_controls(model, u)
    c = model.constraint_values(np.asarray(x, dtype=float), u).T
    gamma = np.maximum(0.0, ps.gamma + ps.sigma * c)
    return PenaltyState(min(beta * ps.sigma, sigma_max), gamma, ps.j + 1)


def violation_measure(ps, x, u, model):
    """ALM stopping statistic ``sum_{i,k} max(c_i, -gamma/sigma)**2``."""
    _check_sigma(ps)
    u = as_controls(model, u)
    if model.dims.l == 0:
        return 0.0
    c = model.constraint_values(np.asarray(x, dtype=float), u).T
    return float(np.sum(np.maximum(c, -ps.gamma / ps.sigma) ** 2))


def max_violation(model, x, u):
    """Largest positive constraint value over all steps (0 when feasible)."""
    if model.dims.l == 0:
        return 0.0
    c = model.constraint_values(np.asarray(x, dtype=float), as_controls(model, u))
    return float(max(0.0, c.max()))
