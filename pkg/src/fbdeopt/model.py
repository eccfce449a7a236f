"""System models: dynamics, running cost, constraints and their derivatives.

A model describes the discrete-time problem

    x[k+1] = f(x[k], u[k]),   x[0] = x0,   k = 0..N
    J = sum_k L(k, x[k], u[k])
    c_i(x[k], u[k]) <= 0

All model methods are vectorised over leading axes: ``x`` has shape
``(..., n)``, ``u`` has shape ``(..., m)`` and ``k`` is an integer (or an
integer array broadcastable to the leading shape). Second derivatives are
taken over the joint vector ``z = (x, u)`` of length ``n + m``. The dynamics
curvature is only exposed contracted with a weight vector, ``w . d2f/dz2``.

A Bolza terminal cost is written into ``L`` at ``k = N`` by the model author;
nothing downstream treats the last step specially. The state ``x[N+1]`` is
never formed since it does not enter the cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraints import Constraint, ConstraintStack
from .errors import InvalidArgumentError, NumericalDivergenceError


@dataclass(frozen=True)
class Dims:
    n: int
    m: int
    l: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.l < 0:
            raise InvalidArgumentError(f"invalid dimensions n={self.n}, m={self.m}, l={self.l}")


class SystemModel:
    """Base class for user models.

    Subclasses implement ``dynamics``, ``dynamics_jacobians``,
    ``dynamics_curvature``, ``running_cost``, ``cost_gradient`` and
    ``cost_hessian``. Constraints are supplied as a list of
    :class:`~fbdeopt.constraints.Constraint` objects and evaluated together
    through a :class:`~fbdeopt.constraints.ConstraintStack`.
    """

    state_names: tuple = ()
    control_names: tuple = ()

    def __init__(self, n, m, constraints=()):
        self.constraints = tuple(constraints)
        for c in self.constraints:
            if not isinstance(c, Constraint) or c.n != n or c.m != m:
                raise InvalidArgumentError(f"constraint {c!r} does not match n={n}, m={m}")
        self.dims = Dims(int(n), int(m), len(self.constraints))
        self._stack = ConstraintStack(self.constraints, n, m)
        if not self.state_names:
            self.state_names = tuple(f"x{i}" for i in range(n))
        if not self.control_names:
            self.control_names = tuple(f"u{i}" for i in range(m))

    # dynamics
    def dynamics(self, x, u):
        raise NotImplementedError

    def dynamics_jacobians(self, x, u):
        """Return ``(df/dx, df/du)`` with shapes ``(..., n, n)`` and ``(..., n, m)``."""
        raise NotImplementedError

    def dynamics_curvature(self, x, u, w):
        """Return ``sum_i w[i] * d2f_i/dz2`` with shape ``(..., n+m, n+m)``."""
        raise NotImplementedError

    # cost
    def running_cost(self, k, x, u):
        raise NotImplementedError

    def cost_gradient(self, k, x, u):
        raise NotImplementedError

    def cost_hessian(self, k, x, u):
        raise NotImplementedError

    # constraints
    def constraint_values(self, x, u):
        return self._stack.values(x, u)

    def constraint_gradients(self, x, u):
        return self._stack.gradients(x, u)

    def constraint_hessians(self, x, u):
        return self._stack.hessians(x, u)

    def nominal_controls(self, N):
        """Default initial guess for an ``N``-step problem."""
        return np.zeros((N + 1, self.dims.m))

    def with_reference_offset(self, offset):
        """Model whose step ``k`` refers to absolute time ``offset + k``."""
        return self


def _steps(k, lead):
    return np.broadcast_to(np.asarray(k, dtype=int), lead)


def _blockdiag(a, b):
    na, nb = a.shape[0], b.shape[0]
    out = np.zeros((na + nb, na + nb))
    out[:na, :na] = a
    out[na:, na:] = b
    return out


def _check_weight(name, mat, size, definite):
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (size, size):
        raise InvalidArgumentError(f"{name} must be {size}x{size}, got shape {mat.shape}")
    if not np.allclose(mat, mat.T, atol=0.0, rtol=0.0):
        raise InvalidArgumentError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(mat)
    if definite and eig.min() <= 0:
        raise InvalidArgumentError(f"{name} must be positive definite")
    if not definite and eig.min() < -1e-12 * max(1.0, abs(eig).max()):
        raise InvalidArgumentError(f"{name} must be positive semi-definite")
    return mat


@dataclass(frozen=True)
class AgvParams:
    """Parameters of the unicycle tracking problem.

    ``v_ref`` and ``omega_ref`` may be scalars (constant reference) or
    per-step sequences. ``ref_start`` is the pose the reference trajectory
    is rolled out from.
    """

    delta: float
    v_ref: object
    omega_ref: object
    Q: np.ndarray = field(default_factory=lambda: np.eye(3))
    R: np.ndarray = field(default_factory=lambda: np.diag([1.1, 0.1]))
    ref_start: tuple = (0.0, -1.0, 0.0)

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidArgumentError(f"delta must be positive, got {self.delta}")
        object.__setattr__(self, "Q", _check_weight("Q", self.Q, 3, definite=False))
        object.__setattr__(self, "R", _check_weight("R", self.R, 2, definite=True))
        start = np.asarray(self.ref_start, dtype=float)
        if start.shape != (3,):
            raise InvalidArgumentError("ref_start must have 3 entries")


def agv_step(x, u, delta):
    """Forward-Euler unicycle step, vectorised over leading axes."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    th = x[..., 2]
    v = u[..., 0]
    out = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (3,)))
    out[..., 0] = x[..., 0] + delta * v * np.cos(th)
    out[..., 1] = x[..., 1] + delta * v * np.sin(th)
    out[..., 2] = th + delta * u[..., 1]
    return out


class AgvModel(SystemModel):
    """Unicycle with quadratic tracking cost against per-step reference tables.

    Steps past the end of the tables reuse the last reference entry.
    """

    state_names = ("x", "y", "theta")
    control_names = ("v", "omega")

    def __init__(self, params, x_ref, u_ref, constraints=(), offset=0):
        super().__init__(3, 2, constraints)
        self.params = params
        self.delta = float(params.delta)
        self.x_ref = np.asarray(x_ref, dtype=float)
        self.u_ref = np.asarray(u_ref, dtype=float)
        if self.x_ref.ndim != 2 or self.x_ref.shape[1] != 3 or self.u_ref.shape != (len(self.x_ref), 2):
            raise InvalidArgumentError("reference tables must have shapes (T, 3) and (T, 2)")
        self.offset = int(offset)
        self._Q2 = 2.0 * params.Q
        self._R2 = 2.0 * params.R
        self._hess = _blockdiag(self._Q2, self._R2)

    def with_reference_offset(self, offset):
        return AgvModel(self.params, self.x_ref, self.u_ref, self.constraints, self.offset + offset)

    def _ref_index(self, k, lead):
        return np.minimum(self.offset + _steps(k, lead), len(self.x_ref) - 1)

    def reference(self, k):
        idx = min(self.offset + int(k), len(self.x_ref) - 1)
        return self.x_ref[idx], self.u_ref[idx]

    def nominal_controls(self, N):
        idx = self._ref_index(np.arange(N + 1), (N + 1,))
        return self.u_ref[idx].copy()

    def dynamics(self, x, u):
        return agv_step(x, u, self.delta)

    def dynamics_jacobians(self, x, u):
        d = self.delta
        th = x[..., 2]
        v = u[..., 0]
        c, s = np.cos(th), np.sin(th)
        lead = np.shape(th)
        fx = np.zeros(lead + (3, 3))
        fx[..., 0, 0] = fx[..., 1, 1] = fx[..., 2, 2] = 1.0
        fx[..., 0, 2] = -d * v * s
        fx[..., 1, 2] = d * v * c
        fu = np.zeros(lead + (3, 2))
        fu[..., 0, 0] = d * c
        fu[..., 1, 0] = d * s
        fu[..., 2, 1] = d
        return fx, fu

    def dynamics_curvature(self, x, u, w):
        # only the (theta, v) block of d2f is non-zero
        d = self.delta
        th = x[..., 2]
        v = u[..., 0]
        c, s = np.cos(th), np.sin(th)
        w0, w1 = w[..., 0], w[..., 1]
        out = np.zeros(np.broadcast_shapes(np.shape(th), np.shape(w0)) + (5, 5))
        out[..., 2, 2] = -d * v * (w0 * c + w1 * s)
        tv = d * (w1 * c - w0 * s)
        out[..., 2, 3] = tv
        out[..., 3, 2] = tv
        return out

    def running_cost(self, k, x, u):
        idx = self._ref_index(k, np.shape(x)[:-1])
        ex = x - self.x_ref[idx]
        eu = u - self.u_ref[idx]
        return np.sum((ex @ self.params.Q) * ex, axis=-1) + np.sum((eu @ self.params.R) * eu, axis=-1)

    def cost_gradient(self, k, x, u):
        idx = self._ref_index(k, np.shape(x)[:-1])
        return np.concatenate([(x - self.x_ref[idx]) @ self._Q2, (u - self.u_ref[idx]) @ self._R2], axis=-1)

    def cost_hessian(self, k, x, u):
        return np.broadcast_to(self._hess, np.shape(x)[:-1] + (5, 5)).copy()


def make_agv_model(params, N, constraints=()):
    """AGV tracking model whose reference is rolled out from ``params.ref_start``.

    The reference tables hold ``N + 1`` entries.
    """
    if N < 0:
        raise InvalidArgumentError(f"horizon must be non-negative, got {N}")
    u_ref = np.empty((N + 1, 2))
    u_ref[:, 0] = np.broadcast_to(np.asarray(params.v_ref, dtype=float), (N + 1,))
    u_ref[:, 1] = np.broadcast_to(np.asarray(params.omega_ref, dtype=float), (N + 1,))
    x_ref = np.empty((N + 1, 3))
    x_ref[0] = params.ref_start
    for k in range(N):
        x_ref[k + 1] = agv_step(x_ref[k], u_ref[k], params.delta)
    return AgvModel(params, x_ref, u_ref, constraints)


class LtiModel(SystemModel):
    """``x+ = A x + B u`` with cost ``(x - r)' Q (x - r) + u' Rq u``."""

    def __init__(self, A, B, Q, Rq, x_ref=None, constraints=(), offset=0):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n:
            raise InvalidArgumentError(f"A must be n x n and B n x m, got {A.shape} and {B.shape}")
        m = B.shape[1]
        super().__init__(n, m, constraints)
        self.A, self.B = A, B
        self.Q = _check_weight("Q", np.atleast_2d(Q), n, definite=False)
        self.Rq = _check_weight("Rq", np.atleast_2d(Rq), m, definite=True)
        if x_ref is None:
            x_ref = np.zeros(n)
        x_ref = np.asarray(x_ref, dtype=float)
        if x_ref.ndim == 1:
            x_ref = x_ref[None, :]
        if x_ref.ndim != 2 or x_ref.shape[1] != n:
            raise InvalidArgumentError(f"x_ref must have {n} columns, got shape {x_ref.shape}")
        self.x_ref = x_ref
        self.offset = int(offset)
        self._hess = _blockdiag(2.0 * self.Q, 2.0 * self.Rq)

    def with_reference_offset(self, offset):
        return LtiModel(self.A, self.B, self.Q, self.Rq, self.x_ref, self.constraints, self.offset + offset)

    def _ref(self, k, lead):
        idx = np.minimum(self.offset + _steps(k, lead), len(self.x_ref) - 1)
        return self.x_ref[idx]

    def dynamics(self, x, u):
        return x @ self.A.T + u @ self.B.T

    def dynamics_jacobians(self, x, u):
        lead = np.shape(x)[:-1]
        return (
            np.broadcast_to(self.A, lead + self.A.shape).copy(),
            np.broadcast_to(self.B, lead + self.B.shape).copy(),
        )

    def dynamics_curvature(self, x, u, w):
        d = self.dims.n + self.dims.m
        return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(w)[:-1]) + (d, d))

    def running_cost(self, k, x, u):
        e = x - self._ref(k, np.shape(x)[:-1])
        return np.sum((e @ self.Q) * e, axis=-1) + np.sum((u @ self.Rq) * u, axis=-1)

    def cost_gradient(self, k, x, u):
        e = x - self._ref(k, np.shape(x)[:-1])
        return np.concatenate([2.0 * e @ self.Q, 2.0 * u @ self.Rq], axis=-1)

    def cost_hessian(self, k, x, u):
        return np.broadcast_to(self._hess, np.shape(x)[:-1] + self._hess.shape).copy()


def make_lti_model(A, B, Q, Rq, x_ref=None, N=None, constraints=()):
    """Linear-quadratic test model. ``N`` is accepted for symmetry with
    :func:`make_agv_model`; a ``(N+1, n)`` table may be passed as ``x_ref``."""
    model = LtiModel(A, B, Q, Rq, x_ref, constraints)
    if N is not None and len(model.x_ref) not in (1, N + 1):
        raise InvalidArgumentError(f"x_ref table has {len(model.x_ref)} rows, expected 1 or {N + 1}")
    return model


def as_controls(model, u, N=None):
    """Validate and reshape a control sequence to ``(N+1, m)``."""
    m = model.dims.m
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        if u.size % m:
            raise InvalidArgumentError(f"stacked control length {u.size} is not a multiple of m={m}")
        u = u.reshape(-1, m)
    if u.ndim != 2 or u.shape[1] != m or u.shape[0] < 1:
        raise InvalidArgumentError(f"controls must have shape (N+1, {m}), got {u.shape}")
    if N is not None and u.shape[0] != N + 1:
        raise InvalidArgumentError(f"expected {N + 1} control blocks, got {u.shape[0]}")
    return u


def stack_controls(u):
    return np.asarray(u, dtype=float).reshape(-1)


def unstack_controls(u_flat, m):
    return np.asarray(u_flat, dtype=float).reshape(-1, m)


def rollout(model, x0, u):
    """States ``x[0..N]`` produced by applying ``u[0..N-1]`` from ``x0``."""
    u = as_controls(model, u)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.dims.n,):
        raise InvalidArgumentError(f"x0 must have shape ({model.dims.n},), got {x0.shape}")
    N = u.shape[0] - 1
    x = np.empty((N + 1, model.dims.n))
    x[0] = x0
    for k in range(N):
        x[k + 1] = model.dynamics(x[k], u[k])
        if not np.all(np.isfinite(x[k + 1])):
            raise NumericalDivergenceError(f"non-finite state at step {k + 1}", step=k + 1)
    return x


def total_cost(model, x, u):
    u = as_controls(model, u)
    x = np.asarray(x, dtype=float)
    if x.shape != (u.shape[0], model.dims.n):
        raise InvalidArgumentError(f"trajectory shape {x.shape} does not match controls {u.shape}")
    J = float(np.sum(model.running_cost(np.arange(len(u)), x, u)))
    if not np.isfinite(J):
        raise NumericalDivergenceError("non-finite cost")
    return J


@dataclass
class DerivativeReport:
    errors: dict
    tol: float

    @property
    def failures(self):
        return [name for name, err in self.errors.items() if not err <= self.tol]

    @property
    def passed(self):
        return not self.failures


def _rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))


def _central(fun, z, h):
    """Jacobian of ``fun`` at ``z`` by central differences; columns index z."""
    cols = []
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        cols.append((np.asarray(fun(z + e)) - np.asarray(fun(z - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def self_check_derivatives(model, samples=10, seed=0, tol=1e-5, h=1e-6, scale=1.0, k_max=0):
    """Compare analytic model derivatives with central differences.

    Points are drawn as ``scale * N(0, 1)`` in ``(x, u)``. The report holds the
    worst max-entry relative error per derivative block.
    """
    if samples < 1:
        raise InvalidArgumentError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n, m = model.dims.n, model.dims.m
    errs = {}

    def record(name, err):
        errs[name] = max(errs.get(name, 0.0), err)

    for _ in range(samples):
        z = scale * rng.standard_normal(n + m)
        w = rng.standard_normal(n)
        k = int(rng.integers(0, k_max + 1))
        x, u = z[:n], z[n:]

        fx, fu = model.dynamics_jacobians(x, u)
        fd = _central(lambda zz: model.dynamics(zz[:n], zz[n:]), z, h)
        record("dfdx", _rel_err(fx, fd[:, :n]))
        record("dfdu", _rel_err(fu, fd[:, n:]))

        def wjac(zz):
            a, b = model.dynamics_jacobians(zz[:n], zz[n:])
            return w @ np.concatenate([a, b], axis=1)

        record("w.d2f", _rel_err(model.dynamics_curvature(x, u, w), _central(wjac, z, h)))

        g = model.cost_gradient(k, x, u)
        record("dL", _rel_err(g, _central(lambda zz: model.running_cost(k, zz[:n], zz[n:]), z, h)))
        record(
            "d2L",
            _rel_err(model.cost_hessian(k, x, u), _central(lambda zz: model.cost_gradient(k, zz[:n], zz[n:]), z, h)),
        )
        if model.dims.l:
            record(
                "dc",
                _rel_err(model.constraint_gradients(x, u), _central(lambda zz: model.constraint_values(zz[:n], zz[n:]), z, h)),
            )
            record(
                "d2c",
                _rel_err(
                    model.constraint_hessians(x, u),
                    _central(lambda zz: model.constraint_gradients(zz[:n], zz[n:]), z, h),
                ),
            )
    return DerivativeReport(errs, tol)
