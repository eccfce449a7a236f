"""Inequality constraints ``c(x, u) <= 0`` evaluated over batches of steps.

Every method accepts ``x`` of shape ``(..., n)`` and ``u`` of shape
``(..., m)`` and returns arrays with the same leading shape. Derivatives are
taken with respect to the joint vector ``z = (x, u)``.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError


class Constraint:
    """Base class; subclasses implement value/gradient/hessian."""

    n: int
    m: int

    def value(self, x, u):
        raise NotImplementedError

    def gradient(self, x, u):
        raise NotImplementedError

    def hessian(self, x, u):
        raise NotImplementedError


class AffineConstraint(Constraint):
    """``a_x . x + a_u . u + b <= 0``."""

    def __init__(self, a_x, a_u, b=0.0):
        self.a_x = np.asarray(a_x, dtype=float).reshape(-1)
        self.a_u = np.asarray(a_u, dtype=float).reshape(-1)
        self.b = float(b)
        self.n = self.a_x.size
        self.m = self.a_u.size
        self._a = np.concatenate([self.a_x, self.a_u])

    def value(self, x, u):
        return x @ self.a_x + u @ self.a_u + self.b

    def gradient(self, x, u):
        lead = np.shape(x)[:-1]
        return np.broadcast_to(self._a, lead + self._a.shape).copy()

    def hessian(self, x, u):
        d = self.n + self.m
        return np.zeros(np.shape(x)[:-1] + (d, d))

    def __repr__(self):
        return f"AffineConstraint(a_x={self.a_x.tolist()}, a_u={self.a_u.tolist()}, b={self.b})"


class KeepOutZone(Constraint):
    """Circular keep-out zone on two state components.

    ``c = r**2 - (x[i] - cx)**2 - (x[j] - cy)**2 <= 0``
    """

    def __init__(self, center, radius, n, m, indices=(0, 1)):
        self.center = np.asarray(center, dtype=float).reshape(2)
        self.radius = float(radius)
        self.indices = tuple(int(i) for i in indices)
        self.n = int(n)
        self.m = int(m)
        if self.radius <= 0:
            raise InvalidArgumentError(f"keep-out radius must be positive, got {radius}")
        if len(self.indices) != 2 or not all(0 <= i < self.n for i in self.indices):
            raise InvalidArgumentError(f"keep-out indices {indices} out of range for n={n}")

    def _offsets(self, x):
        i, j = self.indices
        return x[..., i] - self.center[0], x[..., j] - self.center[1]

    def value(self, x, u):
        dx, dy = self._offsets(x)
        return self.radius**2 - dx**2 - dy**2

    def clearance(self, x):
        """Signed distance from the zone boundary (positive outside)."""
        dx, dy = self._offsets(np.asarray(x, dtype=float))
        return np.hypot(dx, dy) - self.radius

    def gradient(self, x, u):
        dx, dy = self._offsets(x)
        g = np.zeros(np.shape(x)[:-1] + (self.n + self.m,))
        i, j = self.indices
        g[..., i] = -2.0 * dx
        g[..., j] = -2.0 * dy
        return g

    def hessian(self, x, u):
        d = self.n + self.m
        h = np.zeros(np.shape(x)[:-1] + (d, d))
        i, j = self.indices
        h[..., i, i] = -2.0
        h[..., j, j] = -2.0
        return h

    def __repr__(self):
        return f"KeepOutZone(center={self.center.tolist()}, radius={self.radius}, indices={self.indices})"


def control_bound(index, bound, n, m, upper=True):
    """Single affine bound on control component ``index``."""
    if not 0 <= index < m:
        raise InvalidArgumentError(f"control index {index} out of range for m={m}")
    a_u = np.zeros(m)
    a_u[index] = 1.0 if upper else -1.0
    b = -bound if upper else bound
    return AffineConstraint(np.zeros(n), a_u, b)


def control_box(index, lower, upper, n, m):
    """Two affine inequalities ``lower <= u[index] <= upper``; either side may be None."""
    if lower is not None and upper is not None and lower > upper:
        raise InvalidArgumentError(f"empty box on control {index}: [{lower}, {upper}]")
    out = []
    if upper is not None:
        out.append(control_bound(index, upper, n, m, upper=True))
    if lower is not None:
        out.append(control_bound(index, lower, n, m, upper=False))
    return out


class ConstraintStack:
    """Evaluates a tuple of constraints as one batch, in their original order.

    Affine constraints and keep-out zones are gathered into arrays so the
    cost of an evaluation does not grow with the number of constraint
    objects; any other :class:`Constraint` is evaluated on its own.
    """

    def __init__(self, constraints, n, m):
        self.constraints = tuple(constraints)
        self.n, self.m = int(n), int(m)
        l, d = len(self.constraints), self.n + self.m
        self._aff = np.array([i for i, c in enumerate(self.constraints) if type(c) is AffineConstraint], dtype=int)
        self._koz = np.array([i for i, c in enumerate(self.constraints) if type(c) is KeepOutZone], dtype=int)
        self._rest = [i for i in range(l) if i not in set(self._aff) | set(self._koz)]
        aff = [self.constraints[i] for i in self._aff]
        koz = [self.constraints[i] for i in self._koz]
        self._a_x = np.array([c.a_x for c in aff]).reshape(-1, self.n).T
        self._a_u = np.array([c.a_u for c in aff]).reshape(-1, self.m).T
        self._b = np.array([c.b for c in aff])
        self._a = np.array([c._a for c in aff]).reshape(-1, d)
        self._centers = np.array([c.center for c in koz]).reshape(-1, 2)
        self._r2 = np.array([c.radius**2 for c in koz])
        self._idx = np.array([c.indices for c in koz], dtype=int).reshape(-1, 2)
        self._hess = np.zeros((l, d, d))
        for q, i in enumerate(self._koz):
            self._hess[i, self._idx[q, 0], self._idx[q, 0]] = -2.0
            self._hess[i, self._idx[q, 1], self._idx[q, 1]] = -2.0

    def _offsets(self, x):
        return x[..., self._idx] - self._centers

    def values(self, x, u):
        out = np.empty(np.shape(x)[:-1] + (len(self.constraints),))
        if self._aff.size:
            out[..., self._aff] = x @ self._a_x + u @ self._a_u + self._b
        if self._koz.size:
            out[..., self._koz] = self._r2 - np.sum(self._offsets(x) ** 2, axis=-1)
        for i in self._rest:
            out[..., i] = self.constraints[i].value(x, u)
        return out

    def gradients(self, x, u):
        out = np.zeros(np.shape(x)[:-1] + (len(self.constraints), self.n + self.m))
        if self._aff.size:
            out[..., self._aff, :] = self._a
        if self._koz.size:
            off = -2.0 * self._offsets(x)
            out[..., self._koz, self._idx[:, 0]] = off[..., 0]
            out[..., self._koz, self._idx[:, 1]] = off[..., 1]
        for i in self._rest:
            out[..., i, :] = self.constraints[i].gradient(x, u)
        return out

    def hessians(self, x, u):
        out = np.broadcast_to(self._hess, np.shape(x)[:-1] + self._hess.shape).copy()
        for i in self._rest:
            out[..., i, :, :] = self.constraints[i].hessian(x, u)
        return out
