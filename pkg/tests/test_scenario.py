import json

import numpy as np
import pytest
from conftest import SCENARIOS
from hypothesis import given, settings
from hypothesis import strategies as st

from fbdeopt import KeepOutZone, Scenario, ScenarioError, dump_scenario, load_scenario


def agv_dict():
    return json.loads((SCENARIOS / "agv_tracking.json").read_text())


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_scenarios_round_trip(path, tmp_path):
    sc = load_scenario(path)
    assert Scenario.from_dict(sc.to_dict()) == sc
    dump_scenario(sc, tmp_path / "copy.json")
    assert load_scenario(tmp_path / "copy.json") == sc


def test_agv_scenario_values():
    sc = load_scenario(SCENARIOS / "agv_tracking.json")
    assert (sc.N, sc.Np, sc.x0) == (160, 10, [0.0, -1.0, 0.0])
    assert sc.model["delta"] == 0.05 and sc.model["v_ref"] == 2.3 and sc.model["omega_ref"] == 0.0
    assert sc.model["R"] == [[1.1, 0.0], [0.0, 0.1]]
    assert sc.solver["regularizer_scale"] == 8.0
    zones = sc.keep_out_zones()
    assert [(z.center.tolist(), z.radius) for z in zones] == [([3.0, 0.0], 0.61), ([6.1, -1.0], 0.81), ([10.0, 0.4], 1.02)]
    model = sc.build_model()
    assert model.dims.l == 7
    assert isinstance(model.constraints[-1], KeepOutZone)


def test_defaults_filled():
    d = {"model": {"type": "lti", "A": [[1.0]], "B": [[1.0]], "Q": [[1.0]], "Rq": [[1.0]]}, "N": 4, "x0": [0.0]}
    sc = Scenario.from_dict(d)
    assert sc.alm == {"sigma1": 1.0, "beta": 10.0, "eps": 1e-6, "max_outer": 30, "sigma_max": 1e8}
    assert sc.solver["inner_cap"] == 10 and sc.solver["grad_tol"] == 1e-8
    assert sc.Np == 4 and sc.u_init == "nominal" and sc.mpc["warm_start"] == "shift-and-hold"


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.pop("x0"), "x0"),
        (lambda d: d.pop("N"), "N"),
        (lambda d: d["model"].pop("delta"), "model.delta"),
        (lambda d: d["model"].update(type="boat"), "model.type"),
        (lambda d: d.update(x0=[0.0, 1.0]), "x0"),
        (lambda d: d["constraints"][2].pop("radius"), "constraints[2].radius"),
        (lambda d: d["constraints"][0].update(index=5), "constraints[0]"),
        (lambda d: d["constraints"][1].update(lower=3.0), "constraints[1]"),
        (lambda d: d["constraints"].append({"type": "wall"}), "constraints[5].type"),
        (lambda d: d["alm"].update(beta="ten"), "alm.beta"),
        (lambda d: d["alm"].update(gamma0=1.0), "alm.gamma0"),
        (lambda d: d["mpc"].update(warm_start="cold"), "mpc.warm_start"),
        (lambda d: d.update(u_init="random"), "u_init"),
        (lambda d: d.update(schema_version=2), "schema_version"),
        (lambda d: d.update(N=2.5), "N"),
        (lambda d: d["model"].update(R=[[1.0, 0.0], [0.0, -1.0]]), "model"),
    ],
)
def test_errors_name_field(mutate, field):
    d = agv_dict()
    mutate(d)
    with pytest.raises(ScenarioError) as err:
        Scenario.from_dict(d)
    assert err.value.field == field
    assert field in str(err.value)


def test_json_syntax_error_has_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"N": 3,\n "model": }')
    with pytest.raises(ScenarioError) as err:
        load_scenario(p)
    assert ":2:" in str(err.value)


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "nope.json")


def test_explicit_initial_controls():
    d = {
        "model": {"type": "lti", "A": [[1.0]], "B": [[1.0]], "Q": [[1.0]], "Rq": [[1.0]]},
        "N": 2,
        "x0": [0.0],
        "u_init": [[1.0], [2.0], [3.0]],
    }
    sc = Scenario.from_dict(d)
    np.testing.assert_array_equal(sc.initial_controls(sc.build_model(), 2), [[1.0], [2.0], [3.0]])
    d["u_init"] = [[1.0]]
    with pytest.raises(ScenarioError):
        Scenario.from_dict(d)


box = st.tuples(st.floats(-5, 0, allow_nan=False), st.floats(0, 5, allow_nan=False))


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 50),
    st.integers(1, 20),
    st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3),
    st.lists(box, max_size=2),
    st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 3)), max_size=3),
    st.floats(1e-12, 1e-2),
    st.sampled_from(["shift-and-hold", "reuse", "zeros"]),
    st.integers(0, 2**31),
)
def test_round_trip_property(N, Np, x0, boxes, zones, eps, mode, seed):
    d = {
        "model": {"type": "agv", "delta": 0.05, "v_ref": 2.3, "omega_ref": 0.0},
        "N": N,
        "Np": Np,
        "x0": x0,
        "constraints": [{"type": "control_box", "index": i, "lower": lo, "upper": hi} for i, (lo, hi) in enumerate(boxes)]
        + [{"type": "keep_out", "center": [cx, cy], "radius": r} for cx, cy, r in zones],
        "alm": {"eps": eps},
        "mpc": {"warm_start": mode},
        "seed": seed,
    }
    sc = Scenario.from_dict(d)
    again = Scenario.from_dict(json.loads(json.dumps(sc.to_dict())))
    assert again == sc
    assert again.to_dict() == sc.to_dict()
