"""Scenario files (YAML) and the built-in default scenario.

dB quantities (``ref_gain_db``, ``noise_power_db``) are converted to linear
here and nowhere else. Noise power in dB is read as dBW.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .model import (
    ChannelParams,
    InstanceError,
    Scenario,
    TimeGrid,
    UavParams,
    UeBudget,
    UePoint,
    db_to_linear,
)


class SchemaError(InstanceError):
    """Bad scenario file; ``path`` names the offending key."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


DEFAULT_CYCLES_RANGE = (500.0, 1500.0)

_SECTIONS = {
    "uav": {
        "altitude": ("altitude", True),
        "weight": ("weight", True),
        "v_max": ("v_max", True),
        "battery_J": ("battery", True),
        "cpu_freq_hz": ("cpu_freq", True),
        "switch_cap": ("switch_cap", True),
        "end_point": ("end_point", True),
        "start_point": ("start_point", False),
    },
    "channel": {
        "ref_gain_db": ("ref_gain", True),
        "noise_power_db": ("noise_power", True),
        "bandwidth_hz": ("bandwidth", True),
    },
    "time": {"horizon_s": ("horizon", True), "slots": ("slots", True)},
    "budget": {"energy_cap_J": ("energy_cap", True), "p_min_w": ("p_min", True)},
}
_UE_KEYS = {"position", "min_bits", "cycles_per_bit"}
_TOP_KEYS = {"ues", "seed", *_SECTIONS}


def _number(value, path, positive=True, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {value!r}")
    v = float(value)
    if not np.isfinite(v):
        raise SchemaError(path, "must be finite")
    if positive and not (v > 0 or (allow_zero and v == 0)):
        raise SchemaError(path, "must be >= 0" if allow_zero else "must be > 0")
    return v


def _point(value, path):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise SchemaError(path, "expected a 2-element [x, y] list")
    return np.array([_number(v, f"{path}[{i}]", positive=False) for i, v in enumerate(value)])


def _mapping(value, path, allowed):
    if not isinstance(value, dict):
        raise SchemaError(path, "expected a mapping")
    for key in value:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}" if path else str(key), "unknown key")
    return value


def from_dict(doc: dict) -> Scenario:
    """Validate a parsed scenario document and build the Scenario."""
    _mapping(doc, "", _TOP_KEYS)
    for name in ("ues", *_SECTIONS):
        if name not in doc:
            raise SchemaError(name, "missing")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise SchemaError("seed", "expected a non-negative integer")

    vals = {}
    for section, keys in _SECTIONS.items():
        body = _mapping(doc[section], section, keys)
        for key, (field, required) in keys.items():
            path = f"{section}.{key}"
            if key not in body:
                if required:
                    raise SchemaError(path, "missing")
                continue
            raw = body[key]
            if key.endswith("_point"):
                vals[field] = _point(raw, path)
            elif key.endswith("_db"):
                vals[field] = db_to_linear(_number(raw, path, positive=False))
            elif key == "slots":
                if isinstance(raw, bool) or not isinstance(raw, int) or raw < 1:
                    raise SchemaError(path, "expected a positive integer")
                vals[field] = raw
            elif key == "p_min_w":
                vals[field] = _number(raw, path, allow_zero=True)
            else:
                vals[field] = _number(raw, path)

    ues_doc = doc["ues"]
    if not isinstance(ues_doc, list) or not ues_doc:
        raise SchemaError("ues", "expected a non-empty list")
    rng = np.random.default_rng(seed)
    spread = rng.uniform(*DEFAULT_CYCLES_RANGE, size=len(ues_doc))
    ues = []
    for i, u in enumerate(ues_doc):
        path = f"ues[{i}]"
        _mapping(u, path, _UE_KEYS)
        if "position" not in u:
            raise SchemaError(f"{path}.position", "missing")
        cycles = u.get("cycles_per_bit")
        ues.append(UePoint(
            id=i + 1,
            position=_point(u["position"], f"{path}.position"),
            min_bits=_number(u.get("min_bits", 0.0), f"{path}.min_bits", allow_zero=True),
            cycles_per_bit=float(spread[i]) if cycles is None else _number(cycles, f"{path}.cycles_per_bit"),
        ))

    uav = UavParams(**{f: vals[f] for f in ("altitude", "weight", "v_max", "battery", "cpu_freq",
                                            "switch_cap", "end_point")},
                    **({"start_point": vals["start_point"]} if "start_point" in vals else {}))
    return Scenario(
        ues=ues,
        uav=uav,
        channel=ChannelParams(vals["ref_gain"], vals["noise_power"], vals["bandwidth"]),
        time=TimeGrid(vals["horizon"], vals["slots"]),
        budget=UeBudget(vals["energy_cap"], vals["p_min"]),
    )


def load(path) -> Scenario:
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError("<file>", f"not valid YAML: {exc}") from None
    return from_dict(doc)


def default_document(seed: int = 0, K: int = 8, N: int = 50) -> dict:
    """Default instance with seeded UE placement and task sizes."""
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0.0, 600.0, size=(K, 2))
    cycles = rng.uniform(*DEFAULT_CYCLES_RANGE, size=K)
    return {
        "seed": int(seed),
        "ues": [
            {"position": [float(x), float(y)], "min_bits": 1.0e8, "cycles_per_bit": float(c)}
            for (x, y), c in zip(xy, cycles)
        ],
        "uav": {
            "altitude": 50.0,
            "weight": 10.0,
            "v_max": 30.0,
            "battery_J": 240.0e3,
            "cpu_freq_hz": 2.0e9,
            "switch_cap": 1.0e-27,
            "start_point": [0.0, 0.0],
            "end_point": [600.0, 0.0],
        },
        "channel": {"ref_gain_db": -50.0, "noise_power_db": -140.0, "bandwidth_hz": 1.0e7},
        "time": {"horizon_s": 120.0, "slots": int(N)},
        "budget": {"energy_cap_J": 36.0, "p_min_w": 0.1},
    }


def default_scenario(seed: int = 0, K: int = 8, N: int = 50, **uav_changes) -> Scenario:
    scen = from_dict(default_document(seed, K, N))
    return scen.replace(**uav_changes) if uav_changes else scen


def write_document(doc: dict, path) -> None:
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))
