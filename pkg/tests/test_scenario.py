import copy
import json

import numpy as np
import pytest

from fifo_tap.dynamic import DynamicNetwork
from fifo_tap.exceptions import ScenarioIOError, ValidationError
from fifo_tap.network import Network
from fifo_tap.scenario import bundled, load_scenario, save_scenario, scenario_from_dict, scenario_to_dict


def raw(name):
    return json.loads(bundled(name).read_text())


def test_sheffi_fixture():
    sc = load_scenario(bundled("sheffi3.json"))
    assert sc.mode == "static" and isinstance(sc.network, Network)
    assert [l.free_flow_time for l in sc.network.links] == [10, 20, 25]
    assert [l.capacity for l in sc.network.links] == [2, 4, 3]
    assert sc.network.demand.tolist() == [10.0]
    assert sc.seed == 7
    cfg = sc.solver_config(delta_tau=1e-3, tol_J=None)
    assert cfg.delta_tau == 1e-3 and cfg.tau_max == 1.0


def test_dynamic_fixture():
    sc = load_scenario(bundled("tworoute-dyn.json"))
    assert isinstance(sc.network, DynamicNetwork)
    assert [(l.free_flow_time, l.capacity) for l in sc.network.links] == [(1, 1), (2, 1)]
    cfg = sc.dyn_config()
    assert (cfg.T0, cfg.T, cfg.N, cfg.M, cfg.delta_tau) == (1, 8, 20, 10, 0.05)
    np.testing.assert_array_equal(sc.network.demand, np.full((1, 20), 5.0))


@pytest.mark.parametrize("name", ["sheffi3.json", "tworoute-dyn.json", "elastic1.json"])
def test_round_trip(name, tmp_path):
    sc = load_scenario(bundled(name))
    path = tmp_path / "copy.json"
    save_scenario(sc, path)
    again = load_scenario(path)
    assert scenario_to_dict(again) == scenario_to_dict(sc)
    assert again.network == sc.network


def test_route_gen_round_trip():
    data = raw("sheffi3.json")
    del data["routes"]
    data["route_gen"] = {"k": 2}
    sc = scenario_from_dict(data)
    assert [r.links for r in sc.network.routes] == [(1,), (2,)]
    assert scenario_to_dict(scenario_from_dict(scenario_to_dict(sc))) == scenario_to_dict(sc)


def test_per_bin_dynamic_demand():
    data = raw("tworoute-dyn.json")
    data["od"][0]["demand"] = [5.0] * 10 + [0.0] * 10
    sc = scenario_from_dict(data)
    assert sc.network.demand[0, 15] == 0
    assert scenario_to_dict(sc)["od"][0]["demand"] == data["od"][0]["demand"]
    data["od"][0]["demand"] = [5.0] * 3
    with pytest.raises(ValidationError, match=r"od\[0\]\.demand"):
        scenario_from_dict(data)


def _broken(name, edit):
    data = copy.deepcopy(raw(name))
    edit(data)
    return data


@pytest.mark.parametrize("edit, where", [
    (lambda d: d.pop("routes"), "exactly one"),
    (lambda d: d.update(route_gen={"k": 2}), "exactly one"),
    (lambda d: d["od"][0].update(demand=-1), r"od\[0\]"),
    (lambda d: d["network"]["links"][1].update(tail=9), r"network\.links\[1\]\.tail"),
    (lambda d: d["routes"][2].update(links=[7]), "unknown link 7"),
    (lambda d: d["network"]["links"][0].update(capacity="big"), r"network\.links\[0\]\.capacity"),
    (lambda d: d.update(mode="quantum"), "mode"),
    (lambda d: d.update(format_version=9), "format_version"),
    (lambda d: d.update(extra=1), "unknown field"),
    (lambda d: d["solver"].update(delta_tau=-1), "solver"),
    (lambda d: d["solver"].update(initial_flows=[1, 2]), "initial_flows"),
    (lambda d: d["od"][0].update(origin=5), r"od\[0\]\.origin"),
])
def test_semantic_errors_name_the_field(edit, where):
    with pytest.raises(ValidationError, match=where):
        scenario_from_dict(_broken("sheffi3.json", edit))


def test_elastic_needs_demand_function():
    with pytest.raises(ValidationError, match="demand_function"):
        scenario_from_dict(_broken("elastic1.json", lambda d: d["od"][0].pop("demand_function")))


def test_dynamic_needs_block_and_plain_links():
    with pytest.raises(ValidationError, match="dynamic"):
        scenario_from_dict(_broken("tworoute-dyn.json", lambda d: d.pop("dynamic")))
    with pytest.raises(ValidationError, match="unknown field"):
        scenario_from_dict(_broken("tworoute-dyn.json", lambda d: d["network"]["links"][0].update(alpha=0.1)))


def test_syntax_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "mode": "static",\n  oops\n}')
    with pytest.raises(ValidationError, match="line 3"):
        load_scenario(p)


def test_missing_file():
    with pytest.raises(ScenarioIOError):
        load_scenario("/nonexistent/scenario.json")
