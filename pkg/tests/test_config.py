import json

import pytest

from blockhcb.config import (ConfigError, Scenario, dump_scenario, load_scenario,
                             scenario_from_dict, scenario_to_dict)
from blockhcb.gs import GsConfig


def test_default_scenario_round_trips():
    sc = Scenario().check()
    assert scenario_from_dict(json.loads(dump_scenario(sc))) == sc


def test_round_trip_with_scene_and_gs_overrides():
    d = scenario_to_dict(Scenario())
    d["blockage"]["scene"] = [{"center": [1.0, 4.0, 0.0], "radius": 0.5}]
    d["gs"]["null_rank_tol"] = 0.05
    d["gs"]["sidelobe_weighting"] = None
    sc = scenario_from_dict(d)
    assert sc.gs == GsConfig(null_rank_tol=0.05)
    assert sc.blockage.scene[0]["radius"] == 0.5
    assert scenario_from_dict(scenario_to_dict(sc)) == sc


def test_wavelength_from_carrier():
    assert Scenario().system.wavelength == pytest.approx(0.0049965, rel=1e-4)


@pytest.mark.parametrize("patch, path", [
    ({"system": {"M": 48}}, "system.M"),
    ({"system": {"bogus": 1}}, "system.bogus"),
    ({"bogus": {}}, "bogus"),
    ({"system": {"M": 64.5}}, "system.M"),
    ({"system": {"noise_dbm": "x"}}, "system.noise_dbm"),
    ({"blockage": {"elevation_gate": 1}}, "blockage.elevation_gate"),
    ({"blockage": {"density": 1.5}}, "blockage.density"),
    ({"blockage": {"scene": [{"center": [0, 0, 0]}]}}, "blockage.scene[0]"),
    ({"blockage": {"scene": [{"center": [0, 0, 0], "radius": 0}]}}, "blockage.scene[0].radius"),
    ({"geometry": {"u_convention": "sin"}}, "geometry.u_convention"),
    ({"pathloss": {"beta_nlos": 1.0}}, "pathloss.beta_nlos"),
    ({"energy": {"amp_efficiency": 0.0}}, "energy.amp_efficiency"),
    ({"energy": {"move_time_ms": 300.0}}, "energy.move_time_ms"),
    ({"training": {"methods": ["magic"]}}, "training.methods"),
    ({"training": {"target_fraction": 2.0}}, "training.target_fraction"),
    ({"stage1": {"snapshots": 0}}, "stage1.snapshots"),
    ({"gs": {"max_iter": 0}}, "gs"),
    ({"system": {"K": 3}}, "geometry.ue_positions_m"),
    ({"trials": 0}, "trials"),
    ({"seed": "a"}, "seed"),
    ({"system": []}, "system"),
])
def test_errors_name_the_field(patch, path):
    with pytest.raises(ConfigError) as info:
        scenario_from_dict(patch)
    assert info.value.path == path
    assert str(info.value).startswith(path)


def test_root_must_be_object():
    with pytest.raises(ConfigError):
        scenario_from_dict([])


def test_load_scenario(tmp_path):
    p = tmp_path / "sc.json"
    p.write_text(json.dumps({"trials": 3, "system": {"M": 16}}))
    sc = load_scenario(p)
    assert sc.trials == 3 and sc.system.M == 16
    p.write_text("{not json")
    with pytest.raises(ConfigError) as info:
        load_scenario(p)
    assert info.value.path == "<file>"


def test_integer_accepted_for_float_field():
    sc = scenario_from_dict({"system": {"noise_dbm": -80}})
    assert sc.system.noise_dbm == -80.0 and isinstance(sc.system.noise_dbm, float)
