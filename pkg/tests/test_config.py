import pytest

from ecobatch.config import ConfigError, RunConfig, load_config, parse_config
from ecobatch.core import SignalPlan, VehicleParams
from ecobatch.fuel import DEFAULT_COEFFICIENTS, TABLE_ROWS


def test_empty_config_is_default():
    cfg = parse_config({})
    assert cfg == RunConfig()
    assert cfg.vehicle == VehicleParams() and cfg.signal == SignalPlan()
    assert cfg.coefficients == DEFAULT_COEFFICIENTS
    assert load_config(None) == cfg


def test_overrides_apply():
    cfg = parse_config({"vehicle": {"v_D": 8}, "scenario": {"mpr": 0.5, "seed": 7, "epsilon": 2},
                        "grid": {"dv": 1.0}, "output_dir": "x"})
    assert cfg.vehicle.v_D == 8.0 and cfg.scenario.seed == 7 and cfg.epsilon == 2.0
    assert cfg.grid.dv == 1.0 and cfg.output_dir == "x"
    assert cfg.scenario_for("rolling").planner.epsilon == 2.0
    assert cfg.scenario_for("static").planner.is_static


@pytest.mark.parametrize("doc,path", [
    ({"vehicle": {"v_max": 5}}, "vehicle.v_max"),
    ({"vehicle": {"bogus": 1}}, "vehicle.bogus"),
    ({"vehicle": {"v_I": "six"}}, "vehicle.v_I"),
    ({"vehicle": {"v_I": 6.25}}, "vehicle.v_I"),
    ({"signal": {"red": 20}}, "signal."),
    ({"scenario": {"seed": 1.5}}, "scenario.seed"),
    ({"scenario": {"mpr": 2}}, "scenario.mpr"),
    ({"scenario": {"check_from_now": 1}}, "scenario.check_from_now"),
    ({"scenario": {"epsilon": 0}}, "scenario.epsilon"),
    ({"time": {"theta": -1}}, "time.theta"),
    ({"grid": {"dv": 0}}, "grid."),
    ({"fuel": {"orientation": "sideways"}}, "fuel.orientation"),
    ({"fuel": {"table_rows": [[0, 0, 0]]}}, "fuel.table_rows"),
    ({"nope": {}}, "nope"),
])
def test_field_path_errors(doc, path):
    with pytest.raises(ConfigError) as exc:
        parse_config(doc)
    assert str(exc.value).startswith(path)


def test_transposed_orientation():
    cfg = parse_config({"fuel": {"orientation": "transposed"}})
    assert cfg.coefficients.K == tuple(tuple(r) for r in TABLE_ROWS)


def test_load_errors(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text("{")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(str(bad))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.json"))
