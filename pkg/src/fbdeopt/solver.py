"""Unconstrained minimisation of the augmented cost over the stacked controls.

The main iteration is

    u[t+1] = u[t] - h
    h_0    = (Reg + H)^-1 g
    h_i    = (Reg + H)^-1 (g + Reg h_{i-1}),   i = 1 .. min(t, inner_cap)

with ``g`` and ``H`` the exact gradient and Hessian at ``u[t]`` and ``Reg``
a positive definite regulariser. Each inner step reuses one Cholesky factor.
For positive definite ``H`` the inner sequence tends to the Newton step
``H^-1 g``, so early iterations are damped and later ones approach Newton.

A fixed-step gradient descent (method of successive approximations) is
provided as a baseline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import fbde
from .errors import InvalidArgumentError, NumericalDivergenceError, SolverFailure
from .model import as_controls

logger = logging.getLogger(__name__)

MAX_RESCUES = 20


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`solve_subproblem`.

    ``grad_tol`` is compared with the squared gradient norm.
    ``levenberg_growth`` multiplies the regulariser when ``Reg + H`` is not
    positive definite. ``threads`` is forwarded to the Hessian assembly.
    """

    regularizer_scale: float = 8.0
    max_outer_iters: int = 100
    grad_tol: float = 1e-8
    inner_cap: int = 10
    levenberg_growth: float = 10.0
    threads: int = 1

    def __post_init__(self):
        if not self.regularizer_scale > 0:
            raise InvalidArgumentError(f"regularizer_scale must be positive, got {self.regularizer_scale}")
        if self.max_outer_iters < 0 or self.inner_cap < 0:
            raise InvalidArgumentError("iteration caps must be non-negative")
        if not self.grad_tol > 0:
            raise InvalidArgumentError(f"grad_tol must be positive, got {self.grad_tol}")
        if not self.levenberg_growth > 1:
            raise InvalidArgumentError(f"levenberg_growth must exceed 1, got {self.levenberg_growth}")


@dataclass
class SolveReport:
    final_u: np.ndarray
    iterations: int = 0
    grad_norm_history: list = field(default_factory=list)
    cost_history: list = field(default_factory=list)
    iterate_history: list = field(default_factory=list)
    factorization_rescues: int = 0
    converged: bool = False


def _factor(A, reg, growth):
    rescues = 0
    while True:
        try:
            return cho_factor(A + reg, lower=True, check_finite=True), reg, rescues
        except (LinAlgError, ValueError):
            if rescues >= MAX_RESCUES:
                raise SolverFailure(f"regularised Hessian not positive definite after {rescues} rescues")
            rescues += 1
            reg = reg * growth


def _is_pd(H):
    try:
        cho_factor(H, lower=True, check_finite=False)
    except LinAlgError:
        return False
    return True


def inner_steps(H, g, reg, count, growth=10.0):
    """Steps ``h_0 .. h_count``, the rescue count and the regulariser actually used.

    The sequence only converges (to ``H^-1 g``) for positive definite ``H``;
    otherwise each step amplifies the negative-curvature components, so only
    ``h_0`` is returned.
    """
    if count and not _is_pd(H):
        count = 0
    factor, reg, rescues = _factor(H, reg, growth)
    h = cho_solve(factor, g)
    steps = [h]
    for _ in range(count):
        h = cho_solve(factor, g + reg @ h)
        steps.append(h)
    return steps, rescues, reg


def _try_evaluate(ap, u):
    try:
        return fbde.evaluate(ap, u)
    except NumericalDivergenceError:
        return None


def solve_subproblem(ap, u0, cfg=None, regularizer=None, keep_iterates=False):
    """Minimise the augmented cost of ``ap`` starting from ``u0``.

    ``regularizer`` overrides ``cfg.regularizer_scale * I`` with any positive
    definite matrix. A step that increases the cost is retried with the
    regulariser scaled by ``cfg.levenberg_growth`` (counted as a rescue);
    if no retry helps the solve stops unconverged.
    """
    cfg = cfg or SolverConfig()
    u = as_controls(ap.model, u0, ap.N).copy()
    size = u.size
    if regularizer is None:
        base_reg = cfg.regularizer_scale * np.eye(size)
    else:
        base_reg = np.asarray(regularizer, dtype=float)
        if base_reg.shape != (size, size):
            raise InvalidArgumentError(f"regularizer must be {size}x{size}")
    report = SolveReport(final_u=u)
    current = fbde.evaluate(ap, u)
    for t in range(cfg.max_outer_iters + 1):
        J, g, x, lam = current
        gn2 = float(g @ g)
        report.cost_history.append(J)
        report.grad_norm_history.append(gn2)
        if keep_iterates:
            report.iterate_history.append(u.copy())
        if gn2 < cfg.grad_tol:
            report.converged = True
            break
        if t == cfg.max_outer_iters:
            break
        H = fbde.hessian(ap, u, reuse=(x, lam), threads=cfg.threads)
        reg = base_reg
        slack = 1e-12 * max(1.0, abs(J))
        for attempt in range(MAX_RESCUES + 1):
            steps, rescues, reg = inner_steps(H, g, reg, min(t, cfg.inner_cap), cfg.levenberg_growth)
            report.factorization_rescues += rescues
            u_new = u - steps[-1].reshape(u.shape)
            trial = _try_evaluate(ap, u_new)
            if trial is not None and trial[0] <= J + slack:
                break
            reg = reg * cfg.levenberg_growth
            report.factorization_rescues += 1
        else:
            logger.debug("subproblem stalled at iteration %d", t)
            break
        u, current = u_new, trial
        report.iterations = t + 1
    report.final_u = u
    logger.debug("subproblem: %d iterations, |g|^2=%.3e, converged=%s", report.iterations, gn2, report.converged)
    return report


def solve_msa_baseline(ap, u0, step, max_iters=10000, grad_tol=1e-8):
    """Fixed-step gradient descent ``u <- u - step * grad``."""
    if not step > 0:
        raise InvalidArgumentError(f"step must be positive, got {step}")
    u = as_controls(ap.model, u0, ap.N).copy()
    report = SolveReport(final_u=u)
    J0 = None
    for t in range(max_iters + 1):
        J, g, _, _ = fbde.evaluate(ap, u)
        if J0 is None:
            J0 = J
        elif J > 10.0 * abs(J0) and J > J0:
            raise NumericalDivergenceError(f"gradient descent diverged at iteration {t} (cost {J:.3e})", step=t)
        gn2 = float(g @ g)
        report.cost_history.append(J)
        report.grad_norm_history.append(gn2)
        if gn2 < grad_tol:
            report.converged = True
            break
        if t == max_iters:
            break
        u = u - step * g.reshape(u.shape)
        report.iterations = t + 1
    report.final_u = u
    return report
