"""Compiled inner loops for the Hessian row sweeps.

Arrays are indexed by step ``k = 0..N``:

    fx  (N+1, n, n)   df/dx
    fu  (N+1, n, m)   df/du
    hxx (N+1, n, n)   d2H/dx2
    hux (N+1, m, n)   d2H/du dx
    huu (N+1, m, m)   d2H/du2

where H is the per-step Hamiltonian (augmented running cost plus
``lambda[k+1] . f``).
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def row_sweep(fx, fu, hxx, hux, huu, j, p, mu, eta, out):
    """Row ``j*m + p`` of the Hessian.

    ``mu`` (N+2, n) and ``eta`` (N+2, n) are work buffers that hold the
    forward and backward row costates on return; ``out`` receives the row.
    """
    N1 = fx.shape[0]
    n = fx.shape[1]
    m = fu.shape[2]

    mu[:, :] = 0.0
    eta[:, :] = 0.0
    # forward: mu[k+1] = fx[k] mu[k] + [k == j] fu[j][:, p]; zero up to k = j
    if j + 1 < N1:
        for a in range(n):
            mu[j + 1, a] = fu[j, a, p]
        for k in range(j + 1, N1 - 1):
            for a in range(n):
                s = 0.0
                for b in range(n):
                    s += fx[k, a, b] * mu[k, b]
                mu[k + 1, a] = s

    # backward: eta[k] = fx[k]' eta[k+1] + hxx[k] mu[k] + [k == j] hux[j][p, :]
    for k in range(N1 - 1, -1, -1):
        for q in range(m):
            s = 0.0
            for a in range(n):
                s += fu[k, a, q] * eta[k + 1, a] + hux[k, q, a] * mu[k, a]
            if k == j:
                s += huu[k, q, p]
            out[k * m + q] = s
        for a in range(n):
            s = 0.0
            for b in range(n):
                s += fx[k, b, a] * eta[k + 1, b] + hxx[k, a, b] * mu[k, b]
            if k == j:
                s += hux[k, p, a]
            eta[k, a] = s


@njit(cache=True, nogil=True)
def row_range(fx, fu, hxx, hux, huu, r0, r1, out):
    """Fill rows ``r0 .. r1-1`` of ``out`` (shape ((N+1)m, (N+1)m))."""
    N1 = fx.shape[0]
    n = fx.shape[1]
    m = fu.shape[2]
    mu = np.empty((N1 + 1, n))
    eta = np.empty((N1 + 1, n))
    for r in range(r0, r1):
        row_sweep(fx, fu, hxx, hux, huu, r // m, r % m, mu, eta, out[r])
