"""Randomised comparisons of the sweep derivatives against finite differences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fbde
from .model import rollout
from .penalty import AugmentedProblem, PenaltyState

GRAD_TOL = 1e-6
HESS_TOL = 1e-5
ASYM_TOL = 1e-8
KINK_MARGIN = 1e-3


@dataclass
class CheckResult:
    grad_err: float
    hess_err: float
    asymmetry: float
    asymmetry_bound: float

    @property
    def passed(self):
        return self.grad_err <= GRAD_TOL and self.hess_err <= HESS_TOL and self.asymmetry <= self.asymmetry_bound

    def as_dict(self):
        return {
            "grad_rel_err": self.grad_err,
            "hess_rel_err": self.hess_err,
            "asymmetry": self.asymmetry,
            "asymmetry_bound": self.asymmetry_bound,
            "passed": self.passed,
        }


def _switch(ap, u):
    x = rollout(ap.model, ap.x0, u)
    a = ap.penalty.gamma.T + ap.penalty.sigma * ap.model.constraint_values(x, u)
    return a


def away_from_kinks(ap, u, margin=KINK_MARGIN):
    """True when every ``|gamma + sigma c| > margin`` and the active set is the
    same at every point of both finite-difference stencils."""
    if ap.model.dims.l == 0:
        return True
    a = _switch(ap, u)
    if np.min(np.abs(a)) <= margin:
        return False
    active = a > 0
    flat = u.reshape(-1)
    for scale in (1e-6, 1e-4):
        h = scale * (1.0 + np.max(np.abs(flat)))
        for i in range(flat.size):
            for sgn in (1.0, -1.0):
                v = flat.copy()
                v[i] += sgn * h
                if not np.array_equal(_switch(ap, v.reshape(u.shape)) > 0, active):
                    return False
    return True


def compare(ap, u):
    g, x, lam = fbde.gradient(ap, u)
    g_fd = fbde.fd_gradient(ap, u)
    H_raw = fbde.hessian(ap, u, reuse=(x, lam), symmetrize=False)
    H_fd = fbde.fd_hessian(ap, u)
    hmax = float(np.max(np.abs(H_raw)))
    return CheckResult(
        grad_err=float(np.linalg.norm(g - g_fd) / max(1.0, np.linalg.norm(g))),
        hess_err=float(np.max(np.abs(H_raw - H_fd)) / max(1.0, hmax)),
        asymmetry=float(np.max(np.abs(H_raw - H_raw.T))),
        asymmetry_bound=ASYM_TOL * (1.0 + hmax),
    )


def random_instances(model, N, x0_sampler, rng, count, u_scale=0.3, sigma=10.0, require_active=True, max_tries=1000):
    """Yield ``(ap, u)`` pairs with random controls and multipliers.

    Controls are the model's nominal sequence plus ``u_scale`` Gaussian
    noise; multipliers are uniform on ``[0, 1]``. For constrained models
    instances near a penalty kink are rejected and, when ``require_active``,
    so are instances without any active penalty term.
    """
    made = 0
    tries = 0
    while made < count:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"could not draw {count} kink-free instances in {max_tries} tries")
        x0 = np.asarray(x0_sampler(rng), dtype=float)
        u = model.nominal_controls(N) + u_scale * rng.standard_normal((N + 1, model.dims.m))
        gamma = rng.uniform(0.0, 1.0, size=(model.dims.l, N + 1))
        ap = AugmentedProblem(model, PenaltyState(sigma, gamma), N, x0)
        if model.dims.l:
            if require_active and not np.any(_switch(ap, u) > 0):
                continue
            if not away_from_kinks(ap, u):
                continue
        made += 1
        yield ap, u
