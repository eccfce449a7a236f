"""JSON scenario files.

Schema (version 1)::

    {
      "schema_version": 1,
      "model": {"type": "agv", "delta": 0.05, "Q": [[...]], "R": [[...]],
                "v_ref": 2.3, "omega_ref": 0.0, "ref_start": [0, -1, 0]}
             | {"type": "lti", "A": [[...]], "B": [[...]], "Q": [[...]],
                "Rq": [[...]], "x_ref": [...]},
      "N": 160, "Np": 10, "x0": [0.0, -1.0, 0.0],
      "u_init": "nominal" | "zeros" | [[...], ...],
      "constraints": [
        {"type": "control_box", "index": 0, "lower": 2.0, "upper": 2.35},
        {"type": "control_bound", "index": 0, "sense": "upper", "value": 0.0},
        {"type": "keep_out", "center": [3.0, 0.0], "radius": 0.61, "indices": [0, 1]},
        {"type": "affine", "a_x": [...], "a_u": [...], "b": 0.0}
      ],
      "alm": {"sigma1": 1.0, "beta": 10.0, "eps": 1e-6, "max_outer": 30, "sigma_max": 1e8},
      "solver": {"regularizer_scale": 8.0, "max_outer_iters": 100, "grad_tol": 1e-8,
                 "inner_cap": 10, "levenberg_growth": 10.0},
      "mpc": {"warm_start": "shift-and-hold", "initial_jitter": 0.0},
      "output": {"dir": "out"},
      "seed": 0
    }

Everything except ``model``, ``N`` and ``x0`` has a default. ``Np``
defaults to ``N``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .alm import AlmConfig
from .constraints import AffineConstraint, KeepOutZone, control_bound, control_box
from .errors import InvalidArgumentError
from .model import AgvParams, make_agv_model, make_lti_model
from .mpc import WARM_START_MODES, MpcConfig
from .solver import SolverConfig

SCHEMA_VERSION = 1

ALM_DEFAULTS = {"sigma1": 1.0, "beta": 10.0, "eps": 1e-6, "max_outer": 30, "sigma_max": 1e8}
SOLVER_DEFAULTS = {
    "regularizer_scale": 8.0,
    "max_outer_iters": 100,
    "grad_tol": 1e-8,
    "inner_cap": 10,
    "levenberg_growth": 10.0,
}
MPC_DEFAULTS = {"warm_start": "shift-and-hold", "initial_jitter": 0.0}


class ScenarioError(InvalidArgumentError):
    """Malformed scenario; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def _require(d, key, where):
    if not isinstance(d, dict):
        raise ScenarioError(where or "<root>", "expected an object")
    if key not in d:
        raise ScenarioError(f"{where}.{key}" if where else key, "missing required field")
    return d[key]


def _number(value, name, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(name, f"expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ScenarioError(name, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _matrix(value, name, shape=None):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(name, "expected a numeric array") from None
    if shape is not None and arr.shape != shape:
        raise ScenarioError(name, f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(name, "non-finite entries")
    return arr


def _section(raw, key, defaults):
    sec = raw.get(key, {})
    if not isinstance(sec, dict):
        raise ScenarioError(key, "expected an object")
    unknown = set(sec) - set(defaults)
    if unknown:
        raise ScenarioError(f"{key}.{sorted(unknown)[0]}", "unknown field")
    out = dict(defaults)
    out.update(sec)
    return out


def _tolist(a):
    return np.asarray(a, dtype=float).tolist()


@dataclass
class Scenario:
    model: dict
    N: int
    Np: int
    x0: list
    constraints: list = field(default_factory=list)
    u_init: object = "nominal"
    alm: dict = field(default_factory=lambda: dict(ALM_DEFAULTS))
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    mpc: dict = field(default_factory=lambda: dict(MPC_DEFAULTS))
    output: dict = field(default_factory=lambda: {"dir": "out"})
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    # construction

    @classmethod
    def from_dict(cls, raw):
        raw = copy.deepcopy(raw)
        if not isinstance(raw, dict):
            raise ScenarioError("<root>", "expected an object")
        version = raw.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ScenarioError("schema_version", f"unsupported version {version!r}")
        model = _require(raw, "model", "")
        kind = _require(model, "type", "model")
        N = _number(_require(raw, "N", ""), "N", integer=True)
        if N < 0:
            raise ScenarioError("N", "must be non-negative")
        Np = _number(raw.get("Np", N if N > 0 else 1), "Np", integer=True)
        if Np < 1:
            raise ScenarioError("Np", "must be >= 1")

        if kind == "agv":
            model = cls._agv_model(model)
            n, m = 3, 2
        elif kind == "lti":
            model = cls._lti_model(model)
            n, m = len(model["A"]), len(model["B"][0])
        else:
            raise ScenarioError("model.type", f"unknown model type {kind!r}")

        x0 = _matrix(_require(raw, "x0", ""), "x0", (n,)).tolist()
        constraints = [cls._constraint(c, i, n, m) for i, c in enumerate(raw.get("constraints", []))]

        u_init = raw.get("u_init", "nominal")
        if isinstance(u_init, str):
            if u_init not in ("nominal", "zeros"):
                raise ScenarioError("u_init", f"expected 'nominal', 'zeros' or an array, got {u_init!r}")
        else:
            u_init = _matrix(u_init, "u_init", (N + 1, m)).tolist()

        alm = _section(raw, "alm", ALM_DEFAULTS)
        for key in ("sigma1", "beta", "eps", "sigma_max"):
            alm[key] = _number(alm[key], f"alm.{key}")
        alm["max_outer"] = _number(alm["max_outer"], "alm.max_outer", integer=True)
        solver = _section(raw, "solver", SOLVER_DEFAULTS)
        for key in ("regularizer_scale", "grad_tol", "levenberg_growth"):
            solver[key] = _number(solver[key], f"solver.{key}")
        for key in ("max_outer_iters", "inner_cap"):
            solver[key] = _number(solver[key], f"solver.{key}", integer=True)
        mpc = _section(raw, "mpc", MPC_DEFAULTS)
        if mpc["warm_start"] not in WARM_START_MODES:
            raise ScenarioError("mpc.warm_start", f"expected one of {WARM_START_MODES}")
        mpc["initial_jitter"] = _number(mpc["initial_jitter"], "mpc.initial_jitter")
        output = raw.get("output", {"dir": "out"})
        if not isinstance(output, dict) or not isinstance(output.get("dir", "out"), str):
            raise ScenarioError("output.dir", "expected a string path")
        output = {"dir": output.get("dir", "out")}
        seed = _number(raw.get("seed", 0), "seed", integer=True)

        sc = cls(model, N, Np, x0, constraints, u_init, alm, solver, mpc, output, seed)
        try:
            sc.alm_config()
            sc.mpc_config()
        except ScenarioError:
            raise
        except InvalidArgumentError as exc:
            raise ScenarioError("alm/solver/mpc", str(exc)) from None
        return sc

    @staticmethod
    def _agv_model(d):
        out = {"type": "agv"}
        out["delta"] = _number(_require(d, "delta", "model"), "model.delta")
        out["Q"] = _matrix(d.get("Q", np.eye(3).tolist()), "model.Q", (3, 3)).tolist()
        out["R"] = _matrix(d.get("R", np.diag([1.1, 0.1]).tolist()), "model.R", (2, 2)).tolist()
        for key in ("v_ref", "omega_ref"):
            val = _require(d, key, "model")
            out[key] = _number(val, f"model.{key}") if np.isscalar(val) else _matrix(val, f"model.{key}").tolist()
        out["ref_start"] = _matrix(d.get("ref_start", [0.0, -1.0, 0.0]), "model.ref_start", (3,)).tolist()
        unknown = set(d) - set(out)
        if unknown:
            raise ScenarioError(f"model.{sorted(unknown)[0]}", "unknown field")
        try:
            AgvParams(out["delta"], out["v_ref"], out["omega_ref"], np.array(out["Q"]), np.array(out["R"]), tuple(out["ref_start"]))
        except InvalidArgumentError as exc:
            raise ScenarioError("model", str(exc)) from None
        return out

    @staticmethod
    def _lti_model(d):
        A = _matrix(_require(d, "A", "model"), "model.A")
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ScenarioError("model.A", "expected a square matrix")
        n = A.shape[0]
        B = _matrix(_require(d, "B", "model"), "model.B")
        if B.ndim != 2 or B.shape[0] != n:
            raise ScenarioError("model.B", f"expected {n} rows")
        m = B.shape[1]
        out = {
            "type": "lti",
            "A": A.tolist(),
            "B": B.tolist(),
            "Q": _matrix(_require(d, "Q", "model"), "model.Q", (n, n)).tolist(),
            "Rq": _matrix(_require(d, "Rq", "model"), "model.Rq", (m, m)).tolist(),
        }
        x_ref = _matrix(d.get("x_ref", [0.0] * n), "model.x_ref")
        if x_ref.shape[-1] != n or x_ref.ndim > 2:
            raise ScenarioError("model.x_ref", f"expected length-{n} rows")
        out["x_ref"] = x_ref.tolist()
        unknown = set(d) - set(out)
        if unknown:
            raise ScenarioError(f"model.{sorted(unknown)[0]}", "unknown field")
        try:
            make_lti_model(A, B, np.array(out["Q"]), np.array(out["Rq"]), x_ref)
        except InvalidArgumentError as exc:
            raise ScenarioError("model", str(exc)) from None
        return out

    @staticmethod
    def _constraint(c, i, n, m):
        where = f"constraints[{i}]"
        kind = _require(c, "type", where)
        if kind == "control_box":
            out = {"type": kind, "index": _number(_require(c, "index", where), f"{where}.index", integer=True)}
            out["lower"] = None if c.get("lower") is None else _number(c["lower"], f"{where}.lower")
            out["upper"] = None if c.get("upper") is None else _number(c["upper"], f"{where}.upper")
            if out["lower"] is None and out["upper"] is None:
                raise ScenarioError(where, "control_box needs lower and/or upper")
        elif kind == "control_bound":
            out = {
                "type": kind,
                "index": _number(_require(c, "index", where), f"{where}.index", integer=True),
                "sense": _require(c, "sense", where),
                "value": _number(_require(c, "value", where), f"{where}.value"),
            }
            if out["sense"] not in ("upper", "lower"):
                raise ScenarioError(f"{where}.sense", "expected 'upper' or 'lower'")
        elif kind == "keep_out":
            out = {
                "type": kind,
                "center": _matrix(_require(c, "center", where), f"{where}.center", (2,)).tolist(),
                "radius": _number(_require(c, "radius", where), f"{where}.radius"),
                "indices": [int(v) for v in c.get("indices", [0, 1])],
            }
        elif kind == "affine":
            out = {
                "type": kind,
                "a_x": _matrix(_require(c, "a_x", where), f"{where}.a_x", (n,)).tolist(),
                "a_u": _matrix(_require(c, "a_u", where), f"{where}.a_u", (m,)).tolist(),
                "b": _number(c.get("b", 0.0), f"{where}.b"),
            }
        else:
            raise ScenarioError(f"{where}.type", f"unknown constraint type {kind!r}")
        unknown = set(c) - set(out)
        if unknown:
            raise ScenarioError(f"{where}.{sorted(unknown)[0]}", "unknown field")
        try:
            _build_constraints([out], n, m)
        except InvalidArgumentError as exc:
            raise ScenarioError(where, str(exc)) from None
        return out

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "model": copy.deepcopy(self.model),
            "N": self.N,
            "Np": self.Np,
            "x0": list(self.x0),
            "u_init": copy.deepcopy(self.u_init),
            "constraints": copy.deepcopy(self.constraints),
            "alm": dict(self.alm),
            "solver": dict(self.solver),
            "mpc": dict(self.mpc),
            "output": dict(self.output),
            "seed": self.seed,
        }

    # builders

    @property
    def dims(self):
        if self.model["type"] == "agv":
            return 3, 2
        return len(self.model["A"]), len(self.model["B"][0])

    def build_model(self, N=None):
        """Prediction model with reference tables covering ``N`` (default: the scenario's ``N``)."""
        N = self.N if N is None else N
        n, m = self.dims
        cons = _build_constraints(self.constraints, n, m)
        d = self.model
        if d["type"] == "agv":
            params = AgvParams(d["delta"], d["v_ref"], d["omega_ref"], np.array(d["Q"]), np.array(d["R"]), tuple(d["ref_start"]))
            return make_agv_model(params, N, cons)
        return make_lti_model(d["A"], d["B"], d["Q"], d["Rq"], d["x_ref"], constraints=cons)

    def initial_controls(self, model, N):
        if isinstance(self.u_init, list):
            if len(self.u_init) != N + 1:
                raise ScenarioError("u_init", f"has {len(self.u_init)} rows, expected {N + 1}")
            return np.array(self.u_init, dtype=float)
        if self.u_init == "zeros":
            return np.zeros((N + 1, model.dims.m))
        return model.nominal_controls(N)

    def solver_config(self, threads=1):
        return SolverConfig(threads=threads, **self.solver)

    def alm_config(self, threads=1):
        return AlmConfig(solver_cfg=self.solver_config(threads), **self.alm)

    def mpc_config(self, threads=1):
        return MpcConfig(
            Np=self.Np,
            N=self.N,
            alm_cfg=self.alm_config(threads),
            warm_start_mode=self.mpc["warm_start"],
            initial_jitter=self.mpc["initial_jitter"],
            seed=self.seed,
        )

    def keep_out_zones(self):
        n, m = self.dims
        return [c for c in _build_constraints(self.constraints, n, m) if isinstance(c, KeepOutZone)]


def _build_constraints(specs, n, m):
    out = []
    for c in specs:
        kind = c["type"]
        if kind == "control_box":
            out.extend(control_box(c["index"], c["lower"], c["upper"], n, m))
        elif kind == "control_bound":
            out.append(control_bound(c["index"], c["value"], n, m, upper=c["sense"] == "upper"))
        elif kind == "keep_out":
            out.append(KeepOutZone(c["center"], c["radius"], n, m, c["indices"]))
        elif kind == "affine":
            out.append(AffineConstraint(c["a_x"], c["a_u"], c["b"]))
    return out


def load_scenario(path):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioError(str(path), "file not found") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    return Scenario.from_dict(raw)


def dump_scenario(scenario, path):
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")
