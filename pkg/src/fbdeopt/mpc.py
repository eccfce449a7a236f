"""Receding-horizon driver.

At every sampling time ``k = 0..N`` a fresh ``Np``-step constrained problem
is solved from the current plant state, only its first control is applied,
and the plant advances one step. Multipliers and penalty restart from
``gamma = 0``, ``sigma = sigma1`` at each sampling time.

The first initial guess may be perturbed by seeded Gaussian noise
(``initial_jitter``). A problem that is exactly mirror-symmetric about the
reference, such as an obstacle centred on a straight reference path, has a
zero gradient in the steering direction and the solver would otherwise
never leave that saddle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .alm import AlmConfig, solve_constrained
from .errors import InvalidArgumentError
from .model import total_cost
from .penalty import max_violation

WARM_START_MODES = ("shift-and-hold", "reuse", "zeros")


@dataclass(frozen=True)
class MpcConfig:
    Np: int
    N: int
    alm_cfg: AlmConfig = field(default_factory=AlmConfig)
    warm_start_mode: str = "shift-and-hold"
    initial_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.Np:
            raise InvalidArgumentError(f"Np must be >= 1, got {self.Np}")
        if self.N < 0:
            raise InvalidArgumentError(f"N must be >= 0, got {self.N}")
        if self.warm_start_mode not in WARM_START_MODES:
            raise InvalidArgumentError(f"unknown warm_start_mode {self.warm_start_mode!r}")
        if self.initial_jitter < 0:
            raise InvalidArgumentError("initial_jitter must be non-negative")


@dataclass
class MpcRun:
    """Closed-loop record; entry ``k`` belongs to sampling time ``k``.

    ``closed_loop_states[k]`` is the state the ``k``-th control was applied
    in; ``final_state`` is the state after the last control.
    """

    applied_controls: list = field(default_factory=list)
    closed_loop_states: list = field(default_factory=list)
    per_step_solve_time: list = field(default_factory=list)
    per_step_violation: list = field(default_factory=list)
    per_step_cost: list = field(default_factory=list)
    outer_iterations: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    final_state: np.ndarray = None

    @property
    def states(self):
        return np.asarray(self.closed_loop_states)

    @property
    def controls(self):
        return np.asarray(self.applied_controls)


class MpcStepError(RuntimeError):
    """A sampling-time solve failed; ``run`` holds everything up to step ``k``."""

    def __init__(self, k, run, cause):
        super().__init__(f"MPC solve failed at sampling time {k}: {cause}")
        self.k = k
        self.run = run
        self.cause = cause


def _warm_start(prev, mode, nominal):
    if prev is None or mode == "zeros":
        return np.zeros_like(nominal) if mode == "zeros" else nominal
    if mode == "reuse":
        return prev.copy()
    return np.concatenate([prev[1:], prev[-1:]], axis=0)


def run_mpc(model_factory, x0, cfg, plant=None):
    """Closed-loop simulation.

    ``model_factory(k)`` returns the prediction model for sampling time ``k``
    (references already offset). ``plant`` defaults to the dynamics of
    ``model_factory(0)``.
    """
    x = np.asarray(x0, dtype=float).copy()
    run = MpcRun()
    plant = plant or model_factory(0).dynamics
    rng = np.random.default_rng(cfg.seed)
    prev = None
    for k in range(cfg.N + 1):
        model = model_factory(k)
        u_init = _warm_start(prev, cfg.warm_start_mode, model.nominal_controls(cfg.Np))
        if prev is None and cfg.initial_jitter > 0:
            u_init = u_init + cfg.initial_jitter * rng.standard_normal(u_init.shape)
        t0 = time.perf_counter()
        try:
            rep = solve_constrained(model, x, u_init, cfg.alm_cfg)
        except Exception as exc:
            run.final_state = x
            raise MpcStepError(k, run, exc) from exc
        elapsed = time.perf_counter() - t0
        u0 = rep.final_u[0].copy()
        run.applied_controls.append(u0)
        run.closed_loop_states.append(x.copy())
        run.per_step_solve_time.append(elapsed)
        run.per_step_violation.append(max_violation(model, x[None, :], u0[None, :]))
        run.per_step_cost.append(total_cost(model, x[None, :], u0[None, :]))
        run.outer_iterations.append(rep.outer_iterations)
        run.inner_iterations.append(rep.inner_iterations)
        run.converged.append(rep.converged)
        prev = rep.final_u
        x = np.asarray(plant(x, u0), dtype=float)
    run.final_state = x
    return run
