import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from conftest import LTI_A, LTI_B, LTI_Q, LTI_R, LTI_X0, SCENARIOS
from oracles import LtiBatch

from fbdeopt.cli import AGV_COLUMNS, main

METRIC_KEYS = {
    "total_solve_time_s",
    "average_solve_time_s",
    "final_cost",
    "max_violation",
    "min_obstacle_clearance",
    "outer_iterations_total",
    "inner_iterations_total",
}


def scenario_copy(tmp_path, name, **changes):
    d = json.loads((SCENARIOS / name).read_text())
    d.update(changes)
    p = tmp_path / f"{name}"
    p.write_text(json.dumps(d))
    return p


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestGradCheck:
    def test_agv(self, tmp_path, capsys):
        assert main(["grad-check", "--scenario", str(SCENARIOS / "agv_tracking.json"), "--out", str(tmp_path)]) == 0
        summary = json.loads((tmp_path / "grad_check.json").read_text())
        assert summary["samples"] == 10 and summary["max_grad_rel_err"] <= 1e-6
        rows = read_csv(tmp_path / "grad_check.csv")
        assert len(rows) == 11
        assert "PASS" in capsys.readouterr().out

    def test_lti_rounding_level(self, tmp_path):
        args = ["grad-check", "--scenario", str(SCENARIOS / "lti_unconstrained.json"), "--out", str(tmp_path), "--samples", "3"]
        assert main(args) == 0
        summary = json.loads((tmp_path / "grad_check.json").read_text())
        assert summary["max_hess_rel_err"] <= 1e-9

    def test_missing_field(self, tmp_path, capsys):
        d = json.loads((SCENARIOS / "agv_tracking.json").read_text())
        del d["model"]["delta"]
        p = tmp_path / "broken.json"
        p.write_text(json.dumps(d))
        assert main(["grad-check", "--scenario", str(p), "--out", str(tmp_path)]) == 3
        assert "model.delta" in capsys.readouterr().err


class TestSolve:
    def test_lti_matches_batch_cost(self, tmp_path):
        assert main(["solve", "--scenario", str(SCENARIOS / "lti_unconstrained.json"), "--out", str(tmp_path)]) == 0
        metrics = json.loads((tmp_path / "metrics.json").read_text())
        assert METRIC_KEYS <= set(metrics)
        batch = LtiBatch(LTI_A, LTI_B, LTI_Q, LTI_R, 20, LTI_X0)
        assert abs(metrics["final_cost"] - batch.cost(batch.optimum())) <= 1e-8
        rows = read_csv(tmp_path / "trajectory.csv")
        assert rows[0] == ["k", "x0", "x1", "u0", "solve_time_s", "violation"]
        assert len(rows) == 22

    def test_kkt(self, tmp_path):
        assert main(["solve", "--scenario", str(SCENARIOS / "kkt_scalar.json"), "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "trajectory.csv")
        assert abs(float(rows[1][2]) - 1.0) <= 1e-4

    def test_infeasible_pair_not_converged(self, tmp_path, capsys):
        assert main(["solve", "--scenario", str(SCENARIOS / "infeasible_pair.json"), "--out", str(tmp_path)]) == 2
        metrics = json.loads((tmp_path / "metrics.json").read_text())
        assert metrics["converged"] is False and metrics["sigma_final"] == 1e8
        assert "NOT converged" in capsys.readouterr().out

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numerical_failure(self, tmp_path, capsys):
        d = json.loads((SCENARIOS / "kkt_scalar.json").read_text())
        d.update(N=5, x0=[1e200])
        d["model"]["A"] = [[1e200]]
        p = tmp_path / "blowup.json"
        p.write_text(json.dumps(d))
        assert main(["solve", "--scenario", str(p), "--out", str(tmp_path)]) == 4
        assert "numerical failure" in capsys.readouterr().err


class TestMpc:
    def test_short_agv_run(self, tmp_path):
        p = scenario_copy(tmp_path, "agv_tracking.json", N=20)
        out = tmp_path / "out"
        assert main(["mpc", "--scenario", str(p), "--out", str(out)]) == 0
        rows = read_csv(out / "trajectory.csv")
        assert tuple(rows[0]) == AGV_COLUMNS
        assert len(rows) == 22
        assert all(r[6] == "" for r in rows[1:])
        metrics = json.loads((out / "metrics.json").read_text())
        assert METRIC_KEYS <= set(metrics)
        assert metrics["average_solve_time_s"] == pytest.approx(metrics["total_solve_time_s"] / 21)
        assert metrics["reference_timings"]["total_solve_time_s"] == 0.2809
        timings = read_csv(out / "timings.csv")
        assert len(timings) == 22 and all(float(r[1]) > 0 for r in timings[1:])
        plot = read_csv(out / "plot_data.csv")
        assert plot[0] == ["k", "ref_x", "ref_y", "ref_theta", "x", "y", "theta"] and len(plot) == 22

    def test_inline_timings(self, tmp_path):
        p = scenario_copy(tmp_path, "agv_tracking.json", N=3)
        assert main(["mpc", "--scenario", str(p), "--out", str(tmp_path), "--inline-timings"]) == 0
        rows = read_csv(tmp_path / "trajectory.csv")
        assert all(float(r[6]) > 0 for r in rows[1:])

    def test_degenerate_horizon(self, tmp_path):
        p = scenario_copy(tmp_path, "agv_tracking.json", N=0)
        assert main(["mpc", "--scenario", str(p), "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "trajectory.csv")
        assert len(rows) == 2

    def test_threads_flag_same_output(self, tmp_path):
        p = scenario_copy(tmp_path, "agv_tracking.json", N=10)
        main(["mpc", "--scenario", str(p), "--out", str(tmp_path / "a"), "--threads", "1"])
        main(["mpc", "--scenario", str(p), "--out", str(tmp_path / "b"), "--threads", "3"])
        assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()

    def test_seed_override(self, tmp_path):
        p = scenario_copy(tmp_path, "agv_tracking.json", N=2)
        main(["mpc", "--scenario", str(p), "--out", str(tmp_path / "a"), "--seed", "1"])
        main(["mpc", "--scenario", str(p), "--out", str(tmp_path / "b"), "--seed", "2"])
        assert (tmp_path / "a" / "trajectory.csv").read_bytes() != (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_bench_small(tmp_path):
    p = scenario_copy(tmp_path, "agv_tracking.json", N=12)
    args = ["bench", "--scenario", str(p), "--out", str(tmp_path), "--repeat", "2", "--horizons", "10", "20", "--msa-horizons", "10"]
    assert main(args) == 0
    result = json.loads((tmp_path / "bench.json").read_text())
    assert set(result["horizons"]) == {"10", "20"}
    assert {"gradient_s", "hessian_s", "subproblem_s", "mpc_total_solve_time_s"} <= set(result["horizons"]["10"])
    assert result["mpc_repeats"]["repeats"] == 2 and len(result["mpc_repeats"]["total_solve_time_s"]) == 2
    assert result["msa_comparison"]["10"]["msa_converged"]


def test_usage_errors():
    with pytest.raises(SystemExit) as err:
        main(["mpc"])
    assert err.value.code == 2
    with pytest.raises(SystemExit):
        main(["bench", "--scenario", "x.json", "--repeat", "0"])


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "fbdeopt", "solve", "--scenario", str(SCENARIOS / "kkt_scalar.json"), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    assert np.isclose(float(read_csv(tmp_path / "trajectory.csv")[1][2]), 1.0, atol=1e-4)
