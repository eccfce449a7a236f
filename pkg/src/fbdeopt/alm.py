"""Augmented-Lagrangian outer loop around :func:`~fbdeopt.solver.solve_subproblem`."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, SolverFailure
from .model import as_controls, rollout
from .penalty import AugmentedProblem, PenaltyState, update_multipliers, violation_measure
from .solver import SolverConfig, solve_subproblem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlmConfig:
    sigma1: float = 1.0
    beta: float = 10.0
    eps: float = 1e-6
    max_outer: int = 30
    sigma_max: float = 1e8
    solver_cfg: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not self.sigma1 > 0:
            raise InvalidArgumentError(f"sigma1 must be positive, got {self.sigma1}")
        if not self.beta > 1:
            raise InvalidArgumentError(f"beta must exceed 1, got {self.beta}")
        if not self.eps > 0:
            raise InvalidArgumentError(f"eps must be positive, got {self.eps}")
        if self.max_outer < 1:
            raise InvalidArgumentError("max_outer must be >= 1")
        if not self.sigma_max >= self.sigma1:
            raise InvalidArgumentError("sigma_max must be >= sigma1")


@dataclass
class AlmReport:
    """Result of one constrained solve.

    ``multipliers`` is the first-order estimate ``max(0, gamma + sigma c)``
    at the returned controls, i.e. the table the next outer iteration would
    use.
    """

    final_u: np.ndarray
    final_trajectory: np.ndarray
    outer_iterations: int
    violation_history: list
    subproblem_reports: list
    converged: bool
    multipliers: np.ndarray
    sigma: float

    @property
    def inner_iterations(self):
        return sum(r.iterations for r in self.subproblem_reports)


def solve_constrained(model, x0, u_init, cfg=None):
    """Minimise ``sum_k L`` subject to the model's constraints.

    Starts from ``gamma = 0`` and ``sigma = cfg.sigma1``; each subproblem is
    warm-started from the previous solution. Stops when the violation
    measure drops below ``cfg.eps``, after ``cfg.max_outer`` rounds, or once
    ``sigma`` sits at ``cfg.sigma_max`` without reaching the tolerance.
    """
    cfg = cfg or AlmConfig()
    u = as_controls(model, u_init).copy()
    N = u.shape[0] - 1
    ps = PenaltyState.initial(model.dims.l, N, cfg.sigma1)
    violations, reports = [], []
    converged = False
    for j in range(1, cfg.max_outer + 1):
        ap = AugmentedProblem(model, ps, N, x0)
        try:
            rep = solve_subproblem(ap, u, cfg.solver_cfg)
        except SolverFailure as exc:
            raise SolverFailure(f"outer iteration {j}: {exc}") from exc
        reports.append(rep)
        u = rep.final_u
        x = rollout(model, ap.x0, u)
        viol = violation_measure(ps, x, u, model)
        violations.append(viol)
        logger.debug("ALM j=%d sigma=%.1e violation=%.3e inner=%d", j, ps.sigma, viol, rep.iterations)
        nxt = update_multipliers(ps, x, u, model, cfg.beta, cfg.sigma_max)
        if viol < cfg.eps:
            converged = True
            break
        if ps.sigma >= cfg.sigma_max:
            break
        ps = nxt
    return AlmReport(u, x, len(reports), violations, reports, converged, nxt.gamma, ps.sigma)
