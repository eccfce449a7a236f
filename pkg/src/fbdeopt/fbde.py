"""Exact gradient and Hessian of the augmented cost via costate sweeps.

Gradient: roll the state forward, then run the costate backward from
``lambda[N+1] = 0``,

    lambda[k] = dH(k)/dx[k],   H(k) = L~(x[k], u[k]) + lambda[k+1] . f(x[k], u[k])

and read block ``k`` of the gradient off ``dH(k)/du[k]``.

Hessian: one extra forward/backward pair per scalar control coordinate
``(j, p)``. The forward costate ``mu`` starts at zero and picks up column
``p`` of ``df/du`` at step ``j``; the backward costate ``eta`` collects the
second derivatives of ``H`` along ``mu``. Row ``(j, p)`` at step ``k`` is

    [k == j] d2H/du2[:, p] + d2H/dudx(k) mu[k] + df/du(k)' eta[k+1]

Rows are independent once ``x`` and ``lambda`` are known, so they can be
computed in parallel.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError, NumericalDivergenceError
from .model import as_controls, rollout
from .penalty import augmented_running_cost, stage_hessians, stage_terms


@dataclass
class RowCostates:
    mu: np.ndarray  # (N+1, n), mu[0] = 0
    eta: np.ndarray  # (N+2, n), eta[N+1] = 0; eta[0] is a by-product


def _controls(ap, u):
    return as_controls(ap.model, u, ap.N)


def hamiltonian(ap, k, x, u, lambda_next):
    lambda_next = np.asarray(lambda_next, dtype=float)
    if lambda_next.shape != (ap.model.dims.n,):
        raise InvalidArgumentError(f"costate must have shape ({ap.model.dims.n},)")
    f = ap.model.dynamics(np.asarray(x, dtype=float), np.asarray(u, dtype=float))
    return augmented_running_cost(ap, k, x, u) + float(lambda_next @ f)


def augmented_total_cost(ap, u):
    u = _controls(ap, u)
    x = rollout(ap.model, ap.x0, u)
    cost, _, _ = stage_terms(ap, x, u, order=0)
    J = float(np.sum(cost))
    if not np.isfinite(J):
        raise NumericalDivergenceError("non-finite augmented cost")
    return J


def _sweep(fx, lx):
    N1, n = lx.shape
    lam = np.zeros((N1 + 1, n))
    for k in range(N1 - 1, -1, -1):
        lam[k] = lx[k] + fx[k].T @ lam[k + 1]
        if not np.all(np.isfinite(lam[k])):
            raise NumericalDivergenceError(f"non-finite costate at step {k}", step=k)
    return lam


def costate_sweep(ap, x, u):
    """Costates ``lambda[0..N+1]`` with ``lambda[N+1] = 0``; row 0 is ``dJ/dx0``."""
    u = _controls(ap, u)
    x = np.asarray(x, dtype=float)
    n = ap.model.dims.n
    _, grad, _ = stage_terms(ap, x, u, order=1)
    fx, _ = ap.model.dynamics_jacobians(x, u)
    return _sweep(fx, grad[:, :n])


def evaluate(ap, u):
    """Cost, stacked gradient, trajectory and costates in one pass."""
    u = _controls(ap, u)
    model = ap.model
    n = model.dims.n
    x = rollout(model, ap.x0, u)
    cost, grad, _ = stage_terms(ap, x, u, order=1)
    J = float(np.sum(cost))
    if not np.isfinite(J):
        raise NumericalDivergenceError("non-finite augmented cost")
    fx, fu = model.dynamics_jacobians(x, u)
    lam = _sweep(fx, grad[:, :n])
    g = grad[:, n:] + (lam[1:, None, :] @ fu)[:, 0, :]
    return J, g.reshape(-1), x, lam


def gradient(ap, u):
    """Stacked gradient of the augmented cost, plus the trajectory and costates."""
    _, g, x, lam = evaluate(ap, u)
    return g, x, lam


def _blocks(ap, x, lam, u):
    model = ap.model
    n = model.dims.n
    hzz = stage_hessians(ap, x, u) + model.dynamics_curvature(x, u, lam[1 : len(u) + 1])
    fx, fu = model.dynamics_jacobians(x, u)
    return (
        np.ascontiguousarray(fx, dtype=float),
        np.ascontiguousarray(fu, dtype=float),
        np.ascontiguousarray(hzz[:, :n, :n]),
        np.ascontiguousarray(hzz[:, n:, :n]),
        np.ascontiguousarray(hzz[:, n:, n:]),
    )


def hessian_row(ap, x, lam, u, j, p, return_costates=False):
    """Row ``j*m + p`` of the Hessian (length ``(N+1)m``)."""
    u = _controls(ap, u)
    N, m = ap.N, ap.model.dims.m
    if not (0 <= j <= N and 0 <= p < m):
        raise InvalidArgumentError(f"row ({j}, {p}) out of range for N={N}, m={m}")
    blocks = _blocks(ap, np.asarray(x, dtype=float), np.asarray(lam, dtype=float), u)
    n = ap.model.dims.n
    mu = np.empty((N + 2, n))
    eta = np.empty((N + 2, n))
    row = np.empty((N + 1) * m)
    _kernels.row_sweep(*blocks, j, p, mu, eta, row)
    bad = ~np.isfinite(row)
    if bad.any():
        raise NumericalDivergenceError(f"non-finite Hessian entry at (j={j}, k={int(np.argmax(bad)) // m})", step=j)
    if return_costates:
        return row, RowCostates(mu[: N + 1].copy(), eta.copy())
    return row


def hessian(ap, u, reuse=None, threads=1, symmetrize=True):
    """Dense ``(N+1)m x (N+1)m`` Hessian assembled row by row.

    ``reuse`` may carry ``(x, lam)`` from a previous :func:`gradient` call at
    the same ``u``. With ``threads > 1`` the rows are split into contiguous
    chunks; each row is computed by the same code, so results are identical
    to the single-threaded mode.
    """
    u = _controls(ap, u)
    if reuse is None:
        _, x, lam = gradient(ap, u)
    else:
        x, lam = reuse
    blocks = _blocks(ap, x, lam, u)
    m = ap.model.dims.m
    R = (ap.N + 1) * m
    H = np.empty((R, R))
    threads = max(1, int(threads))
    if threads == 1 or R < 2 * threads:
        _kernels.row_range(*blocks, 0, R, H)
    else:
        bounds = np.linspace(0, R, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_kernels.row_range, *blocks, int(a), int(b), H) for a, b in zip(bounds[:-1], bounds[1:])]
            for f in futures:
                f.result()
    bad = ~np.isfinite(H)
    if bad.any():
        r, c = np.unravel_index(int(np.argmax(bad)), H.shape)
        raise NumericalDivergenceError(f"non-finite Hessian entry at (j={r // m}, k={c // m})", step=int(r // m))
    if symmetrize:
        H = 0.5 * (H + H.T)
    return H


def _default_step(u, scale):
    return scale * (1.0 + float(np.max(np.abs(u))))


def fd_gradient(ap, u, h=None):
    """Central differences of the augmented total cost."""
    u = _controls(ap, u)
    if h is None:
        h = _default_step(u, 1e-6)
    if not h > 0:
        raise InvalidArgumentError("step size must be positive")
    flat = u.reshape(-1)
    g = np.empty(flat.size)
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (augmented_total_cost(ap, up) - augmented_total_cost(ap, dn)) / (2 * h)
    return g


def fd_hessian(ap, u, h=None):
    """Central differences of :func:`gradient`; column ``i`` varies coordinate ``i``."""
    u = _controls(ap, u)
    if h is None:
        h = _default_step(u, 1e-4)
    if not h > 0:
        raise InvalidArgumentError("step size must be positive")
    flat = u.reshape(-1)
    cols = []
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        cols.append((gradient(ap, up)[0] - gradient(ap, dn)[0]) / (2 * h))
    return np.stack(cols, axis=1)
