"""Command-line front end.

    fbdeopt grad-check --scenario S [--samples 10] [--seed 0] [--horizon Np] [--out DIR]
    fbdeopt solve      --scenario S [--out DIR] [--threads 1]
    fbdeopt mpc        --scenario S [--out DIR] [--seed K] [--threads 1] [--inline-timings]
    fbdeopt bench      --scenario S [--out DIR] [--repeat 8] [--threads 1]

Exit codes: 0 success, 2 not converged (or derivative check outside
tolerance), 3 invalid input, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bench, checks
from .alm import solve_constrained
from .errors import InvalidArgumentError, NumericalDivergenceError, SolverFailure
from .model import total_cost
from .mpc import MpcStepError, run_mpc
from .penalty import AugmentedProblem
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_INVALID = 3
EXIT_NUMERICAL = 4

AGV_COLUMNS = ("k", "x", "y", "theta", "v", "omega", "solve_time_s", "violation")

logger = logging.getLogger("fbdeopt")


def _fmt(v):
    return repr(float(v))


def _columns(sc):
    if sc.model["type"] == "agv":
        return AGV_COLUMNS
    n, m = sc.dims
    return ("k",) + tuple(f"x{i}" for i in range(n)) + tuple(f"u{i}" for i in range(m)) + ("solve_time_s", "violation")


def _step_violation(model, x, u):
    if model.dims.l == 0:
        return np.zeros(len(x))
    return np.maximum(0.0, model.constraint_values(x, u).max(axis=-1))


def write_trajectory(path, columns, x, u, times, violations):
    """One row per step ``k``; a ``None`` time leaves the cell empty."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for k in range(len(u)):
            t = times[k] if times is not None else None
            row = [k] + [_fmt(v) for v in x[k]] + [_fmt(v) for v in u[k]]
            row += ["" if t is None else _fmt(t), _fmt(violations[k])]
            w.writerow(row)


def write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def clearance_stats(sc, x):
    """Smallest signed distance to any keep-out zone and smallest
    ``(d**2 - r**2) / r**2`` over the given states (``None`` without zones)."""
    zones = sc.keep_out_zones()
    if not zones:
        return None, None
    dist = min(float(np.min(z.clearance(x))) for z in zones)
    rel = min(float(np.min(-z.value(x, None) / z.radius**2)) for z in zones)
    return dist, rel


def _metrics(sc, model, x, u, times, violations, cost, outer, inner, converged):
    total = float(np.sum(times))
    dist, rel = clearance_stats(sc, x)
    return {
        "total_solve_time_s": total,
        "average_solve_time_s": total / len(times),
        "final_cost": float(cost),
        "max_violation": float(np.max(violations)) if len(violations) else 0.0,
        "min_obstacle_clearance": dist,
        "min_obstacle_clearance_rel": rel,
        "outer_iterations_total": int(outer),
        "inner_iterations_total": int(inner),
        "converged": bool(converged),
        "sampling_times": len(times),
    }


def _out_dir(args, sc):
    out = Path(args.out or sc.output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    sc = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        sc.seed = int(args.seed)
    return sc


# subcommands


def cmd_grad_check(args):
    sc = _load(args)
    N = args.horizon if args.horizon is not None else min(sc.Np, sc.N) or 1
    model = sc.build_model(N)
    x0 = np.asarray(sc.x0, dtype=float)
    rng = np.random.default_rng(sc.seed)

    def x0_sampler(r):
        return x0 + 0.1 * r.standard_normal(x0.shape)

    rows = []
    for i, (ap, u) in enumerate(checks.random_instances(model, N, x0_sampler, rng, args.samples)):
        res = checks.compare(ap, u)
        rows.append({"sample": i, **res.as_dict()})
    out = _out_dir(args, sc)
    fields = ["sample", "grad_rel_err", "hess_rel_err", "asymmetry", "asymmetry_bound", "passed"]
    with open(out / "grad_check.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    ok = all(r["passed"] for r in rows)
    summary = {
        "samples": len(rows),
        "horizon": N,
        "max_grad_rel_err": max(r["grad_rel_err"] for r in rows),
        "max_hess_rel_err": max(r["hess_rel_err"] for r in rows),
        "max_asymmetry": max(r["asymmetry"] for r in rows),
        "grad_tol": checks.GRAD_TOL,
        "hess_tol": checks.HESS_TOL,
        "passed": ok,
    }
    write_json(out / "grad_check.json", summary)
    print(
        f"grad-check: {len(rows)} samples, max gradient error {summary['max_grad_rel_err']:.2e}, "
        f"max Hessian error {summary['max_hess_rel_err']:.2e}: {'PASS' if ok else 'FAIL'}"
    )
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_solve(args):
    sc = _load(args)
    model = sc.build_model(sc.N)
    x0 = np.asarray(sc.x0, dtype=float)
    u0 = sc.initial_controls(model, sc.N)
    if sc.mpc["initial_jitter"] > 0:
        u0 = u0 + sc.mpc["initial_jitter"] * np.random.default_rng(sc.seed).standard_normal(u0.shape)
    cfg = sc.alm_config(args.threads)
    t0 = time.perf_counter()
    rep = solve_constrained(model, x0, u0, cfg)
    elapsed = time.perf_counter() - t0
    x, u = rep.final_trajectory, rep.final_u
    viol = _step_violation(model, x, u)
    out = _out_dir(args, sc)
    write_trajectory(out / "trajectory.csv", _columns(sc), x, u, None, viol)
    metrics = _metrics(sc, model, x, u, [elapsed], viol, total_cost(model, x, u), rep.outer_iterations, rep.inner_iterations, rep.converged)
    metrics["sampling_times"] = 1
    metrics["sigma_final"] = rep.sigma
    metrics["violation_history"] = [float(v) for v in rep.violation_history]
    metrics["multipliers_max"] = float(np.max(rep.multipliers)) if rep.multipliers.size else 0.0
    write_json(out / "metrics.json", metrics)
    status = "converged" if rep.converged else f"NOT converged (sigma reached {rep.sigma:.1e})"
    print(f"solve: {status}; cost {metrics['final_cost']:.6g}, max violation {metrics['max_violation']:.2e}")
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def _write_mpc_outputs(out, sc, base, run, inline_timings):
    n = len(run.applied_controls)
    x = run.states.reshape(n, -1)
    u = run.controls.reshape(n, -1)
    times = list(run.per_step_solve_time)
    viol = np.asarray(run.per_step_violation)
    write_trajectory(out / "trajectory.csv", _columns(sc), x, u, times if inline_timings else None, viol)
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "solve_time_s", "outer_iterations", "inner_iterations", "converged"])
        for k in range(n):
            w.writerow([k, _fmt(times[k]), run.outer_iterations[k], run.inner_iterations[k], int(run.converged[k])])
    ref = base.x_ref[np.minimum(np.arange(n), len(base.x_ref) - 1)]
    nx = x.shape[1]
    with open(out / "plot_data.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"ref_{c}" for c in _columns(sc)[1 : 1 + nx]] + list(_columns(sc)[1 : 1 + nx]))
        for k in range(n):
            w.writerow([k] + [_fmt(v) for v in ref[k]] + [_fmt(v) for v in x[k]])
    metrics = _metrics(
        sc, base, x, u, times, viol, float(np.sum(run.per_step_cost)),
        sum(run.outer_iterations), sum(run.inner_iterations), all(run.converged),
    )
    metrics["terminal_position_error"] = float(np.linalg.norm(x[-1, :2] - ref[-1, :2])) if sc.model["type"] == "agv" else None
    metrics["final_state"] = [float(v) for v in run.final_state]
    metrics["steps_not_converged"] = int(sum(not c for c in run.converged))
    if sc.model["type"] == "agv":
        metrics["reference_timings"] = bench.REFERENCE_TIMINGS
    write_json(out / "metrics.json", metrics)
    return metrics


def cmd_mpc(args):
    sc = _load(args)
    base = sc.build_model(sc.N)
    cfg = sc.mpc_config(args.threads)
    out = _out_dir(args, sc)
    try:
        run = run_mpc(base.with_reference_offset, np.asarray(sc.x0, dtype=float), cfg)
    except MpcStepError as exc:
        if exc.run.applied_controls:
            _write_mpc_outputs(out, sc, base, exc.run, args.inline_timings)
        raise exc.cause from exc
    metrics = _write_mpc_outputs(out, sc, base, run, args.inline_timings)
    print(
        f"mpc: {metrics['sampling_times']} steps, total solve {metrics['total_solve_time_s']:.3f} s, "
        f"max violation {metrics['max_violation']:.2e}, {metrics['steps_not_converged']} steps not converged"
    )
    return EXIT_OK if metrics["converged"] else EXIT_NOT_CONVERGED


def cmd_bench(args):
    sc = _load(args)
    x0 = np.asarray(sc.x0, dtype=float)
    horizons = tuple(args.horizons)
    deriv = bench.derivative_timings(sc.build_model, x0, horizons, threads=args.threads)
    alm_cfg = sc.alm_config(args.threads)

    rng_seed = sc.seed

    def u_init_for(model, N):
        u = sc.initial_controls(model, N) if not isinstance(sc.u_init, list) else model.nominal_controls(N)
        jitter = sc.mpc["initial_jitter"]
        return u + jitter * np.random.default_rng(rng_seed).standard_normal(u.shape) if jitter > 0 else u

    sub = bench.subproblem_timings(sc.build_model, x0, u_init_for, alm_cfg, horizons)
    msa = {}
    for N in args.msa_horizons:
        model = sc.build_model(N)
        ap = AugmentedProblem.unconstrained(model, N, x0, alm_cfg.sigma1)
        msa[N] = bench.msa_comparison(ap, u_init_for(model, N), alm_cfg.solver_cfg, args.msa_max_iters)
    mpc = {}
    for N in horizons:
        cfg = sc.mpc_config(args.threads)
        cfg = type(cfg)(cfg.Np, N, cfg.alm_cfg, cfg.warm_start_mode, cfg.initial_jitter, cfg.seed)
        base = sc.build_model(N)
        mpc[N] = bench.mpc_repeats(base.with_reference_offset, x0, cfg, 1)["mean_total_solve_time_s"]
    base = sc.build_model(sc.N)
    rep = bench.mpc_repeats(base.with_reference_offset, x0, sc.mpc_config(args.threads), args.repeat)
    result = {
        "horizons": {
            str(N): {**deriv[N], **sub[N], "mpc_total_solve_time_s": mpc[N]} for N in horizons
        },
        "hessian_ratios": bench.scaling_ratios(deriv, "hessian_s"),
        "gradient_ratios": bench.scaling_ratios(deriv, "gradient_s"),
        "msa_comparison": {str(N): v for N, v in msa.items()},
        "mpc_repeats": rep,
        "threads": args.threads,
    }
    if sc.model["type"] == "agv":
        result["reference_timings"] = bench.REFERENCE_TIMINGS
    out = _out_dir(args, sc)
    write_json(out / "bench.json", result)
    print(f"bench: Hessian ratios {result['hessian_ratios']}, gradient ratios {result['gradient_ratios']}")
    print(f"bench: mean total MPC solve time over {args.repeat} runs {rep['mean_total_solve_time_s']:.3f} s")
    return EXIT_OK


# argument parsing


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="fbdeopt", description="Costate-sweep trajectory optimisation and MPC.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", help="output directory (default: the scenario's output.dir)")
        p.add_argument("--threads", type=_positive_int, default=1, help="Hessian row threads")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    p = sub.add_parser("grad-check", help="compare sweep derivatives with finite differences")
    common(p)
    p.add_argument("--samples", type=_positive_int, default=10)
    p.add_argument("--horizon", type=_positive_int, default=None, help="horizon of the checked problems (default Np)")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("solve", help="solve the full-horizon constrained problem once")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("mpc", help="closed-loop receding-horizon run")
    common(p)
    p.add_argument("--inline-timings", action="store_true", help="fill solve_time_s in trajectory.csv (not reproducible)")
    p.set_defaults(func=cmd_mpc)

    p = sub.add_parser("bench", help="timings, scaling ratios and the gradient-descent comparison")
    common(p)
    p.add_argument("--repeat", type=_positive_int, default=8, help="full MPC repetitions")
    p.add_argument("--horizons", type=_positive_int, nargs="+", default=list(bench.BENCH_HORIZONS))
    p.add_argument("--msa-horizons", type=_positive_int, nargs="*", default=[40, 80])
    p.add_argument("--msa-max-iters", type=_positive_int, default=200000)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InvalidArgumentError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalDivergenceError, SolverFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
