import numpy as np
import pytest
import yaml

from uavmec import scenario
from uavmec.scenario import SchemaError


def test_default_constants(default_scen):
    s = default_scen
    assert (s.time.horizon, s.N, s.K) == (120.0, 50, 8)
    assert s.uav.altitude == 50.0 and s.uav.weight == 10.0
    assert s.channel.noise_power == pytest.approx(1e-14, rel=1e-14)
    assert s.channel.ref_gain == pytest.approx(1e-5, rel=1e-14)
    assert s.channel.bandwidth == 1e7
    assert s.budget.energy_cap == 36.0 and s.budget.p_min == 0.1
    assert s.uav.switch_cap == 1e-27
    assert s.dt == pytest.approx(2.4, rel=1e-15)
    assert s.flight_kappa == pytest.approx(0.5 * 10 * 2.4, rel=1e-15)


def test_round_trip_through_yaml(tmp_path, default_doc):
    path = tmp_path / "s.yaml"
    scenario.write_document(default_doc, path)
    a = scenario.load(path)
    b = scenario.from_dict(default_doc)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.cycles, b.cycles)
    assert a.uav.battery == b.uav.battery


def test_seed_drives_missing_cycles(default_doc):
    for u in default_doc["ues"]:
        del u["cycles_per_bit"]
    c0 = scenario.from_dict({**default_doc, "seed": 3}).cycles
    c1 = scenario.from_dict({**default_doc, "seed": 3}).cycles
    c2 = scenario.from_dict({**default_doc, "seed": 4}).cycles
    assert np.array_equal(c0, c1) and not np.array_equal(c0, c2)
    assert np.all((c0 >= 500) & (c0 <= 1500))


@pytest.mark.parametrize("mutate,path", [
    (lambda d: d["uav"].__setitem__("altitude", -50.0), "uav.altitude"),
    (lambda d: d["uav"].__setitem__("colour", "red"), "uav.colour"),
    (lambda d: d.__setitem__("extra", 1), "extra"),
    (lambda d: d["ues"][1].__setitem__("speed", 3), "ues[1].speed"),
    (lambda d: d["ues"][0].__setitem__("min_bits", -1.0), "ues[0].min_bits"),
    (lambda d: d["ues"][0].__setitem__("position", [1.0]), "ues[0].position"),
    (lambda d: d["time"].__setitem__("slots", 2.5), "time.slots"),
    (lambda d: d["channel"].pop("bandwidth_hz"), "channel.bandwidth_hz"),
    (lambda d: d["budget"].__setitem__("energy_cap_J", "lots"), "budget.energy_cap_J"),
    (lambda d: d.pop("uav"), "uav"),
    (lambda d: d.__setitem__("seed", -2), "seed"),
])
def test_schema_errors_name_the_key(default_doc, mutate, path):
    mutate(default_doc)
    with pytest.raises(SchemaError) as exc:
        scenario.from_dict(default_doc)
    assert exc.value.path == path
    assert path in str(exc.value)


def test_db_converted_once(default_doc):
    default_doc["channel"]["noise_power_db"] = -130.0
    assert scenario.from_dict(default_doc).channel.noise_power == pytest.approx(1e-13, rel=1e-14)


def test_invalid_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("uav: [unclosed")
    with pytest.raises(SchemaError):
        scenario.load(p)


def test_written_file_is_plain_yaml(tmp_path, default_doc):
    p = tmp_path / "s.yaml"
    scenario.write_document(default_doc, p)
    assert yaml.safe_load(p.read_text()) == default_doc
