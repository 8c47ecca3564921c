"""Scenario files: defaults table, schema validation and object construction.

A scenario is a YAML document with the sections ``array``, ``uav``, ``ues``,
``channel``, ``mission`` and ``outputs``. Unknown keys are rejected. Every
omitted value is filled from ``DEFAULTS`` and the fully resolved document is
what gets embedded in output headers.
"""

from __future__ import annotations

import copy
import json
import math
import re
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List

import jsonschema
import yaml

from . import channel as ch
from .array_engine import (
    DEFAULT_BACK_LOBE_DB,
    DEFAULT_ELEMENT_EXPONENT,
    ArrayGeometry,
    ElementModel,
    SteeringCommand,
)
from .dispatch import AcousticModel, EventKind, MissionConfig, MissionEvent
from .geometry import MountOrientation, UavPose, downtilt_for_standoff
from .multibeam import PAYLOAD_BUDGET_G, BfmMount, GroundUe, RadioConfig, Scene

BUNDLED = ("fig3_array", "eq1_coverage", "su_field_trial", "mu_field_trial_d1_6",
           "mu_field_trial_d2_10", "acoustics")
COMMANDS = ("pattern", "coverage", "link", "evaluate", "mission", "acoustics")


class ScenarioError(ValueError):
    """Scenario failed validation; ``problems`` lists field-level messages."""

    def __init__(self, problems: List[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


DEFAULTS: Dict[str, Any] = {
    "name": "scenario",
    "array": {
        "n_elev": 2,
        "n_azim": 8,
        "spacing_wavelengths": 0.5,
        "carrier_hz": 62.5e9,
        "exponent_q": DEFAULT_ELEMENT_EXPONENT,
        "back_lobe_floor_db": DEFAULT_BACK_LOBE_DB,
        "phase_bits": None,
        "steer": {"azimuth_deg": 0.0, "elevation_deg": 0.0},
        "az_step_deg": 1.0,
        "el_step_deg": 1.0,
        "cut_step_deg": 0.25,
    },
    "uav": {
        "position": [0.0, 0.0, 35.0],
        "heading_deg": 0.0,
        # null: aim the boresight at ground distance standoff_m
        "downtilt_deg": None,
        "standoff_m": 22.0,
        "payload_budget_g": PAYLOAD_BUDGET_G,
        "other_payload_g": 0.0,
        "mounts": [],
        "coverage": {"heights_m": [10.0], "downtilts_deg": [50.0], "hpbw_e_deg": 60.0},
    },
    "ues": [],
    "channel": {
        "path_loss_exponent": ch.A2G_PATH_LOSS_EXPONENT,
        "reference_fspl_db": None,
        "oxygen_absorption_db_per_km": ch.OXYGEN_DB_PER_KM,
        "shadow_sigma_db": 0.0,
        "tx_power_dbm": ch.DEFAULT_TX_POWER_DBM,
        "noise_figure_db": ch.DEFAULT_NOISE_FIGURE_DB,
        "bandwidth_hz": ch.DEFAULT_BANDWIDTH_HZ,
        "aci_rejection_db": 30.0,
        "mac_efficiency": ch.DEFAULT_MAC_EFFICIENCY,
        "channels": [1, 2, 3],
        "backhaul_channel": None,
        "sweep": {
            "channel": 2,
            # null: peak gain of the configured array
            "tx_gain_dbi": None,
            "rx_gain_dbi": None,
            "distances_m": [1.0, 5.0, 10.0, 20.0, 30.0, 41.34, 60.0, 100.0, 200.0],
        },
    },
    "mission": {
        "seed": 0,
        "dt_s": 0.1,
        "max_time_s": 1800.0,
        "base": [0.0, 0.0, 0.0],
        "cruise_speed_mps": 10.0,
        "serve_height_m": 35.0,
        "standoff_m": 22.0,
        "sensing_radius_m": 100.0,
        "cruise_drain_per_s": 1.0 / 1200.0,
        "hover_drain_per_s": 1.0 / 1500.0,
        "initial_battery": 1.0,
        "low_battery_fraction": 0.15,
        "return_margin": 1.2,
        "realign_latency_s": 0.01,
        "drift_sigma_mps": 0.5,
        "altitude_sigma_mps": 0.1,
        "drift_box_m": 2.0,
        "altitude_box_m": 0.5,
        "wind_doubling_mps": 6.5,
        "acoustic_threshold_db": 85.0,
        "standoff_shrink": 0.8,
        "acoustic": {"level_at_1m_db": 88.0, "spreading_db_per_decade": 20.0,
                     "excess_db_per_m": 2.0 / 9.0},
        "acoustic_sweep": {"distances_m": [1.0, 1.5, 2.0, 5.0, 10.0, 20.0, 41.34],
                           "thresholds_db": [85.0, 66.0]},
        "events": [],
    },
    "outputs": {"command": None, "dir": None},
}

MOUNT_DEFAULTS = {"yaw_deg": 0.0, "downtilt_deg": None, "offset_m": [0.0, 0.0, 0.0],
                  "weight_g": 1.0}
UE_DEFAULTS = {"heading_deg": 0.0}

_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}
_vec2 = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_num_list = {"type": "array", "items": _num}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_mount = _obj({"id": {"type": "string"}, "yaw_deg": _num, "downtilt_deg": _opt_num,
               "offset_m": _vec3, "weight_g": {"type": "number", "minimum": 0}}, ["id"])

SCHEMA = _obj({
    "name": {"type": "string"},
    "array": _obj({
        "n_elev": {"type": "integer", "minimum": 1},
        "n_azim": {"type": "integer", "minimum": 1},
        "spacing_wavelengths": {"type": "number", "exclusiveMinimum": 0},
        "carrier_hz": {"type": "number", "exclusiveMinimum": 0},
        "exponent_q": {"type": "number", "minimum": 0},
        "back_lobe_floor_db": {"type": "number", "maximum": 0},
        "phase_bits": {"type": ["integer", "null"], "minimum": 1},
        "steer": _obj({"azimuth_deg": {"type": "number", "minimum": -90, "maximum": 90},
                       "elevation_deg": {"type": "number", "minimum": -90, "maximum": 90}}),
        "az_step_deg": {"type": "number", "exclusiveMinimum": 0, "maximum": 5},
        "el_step_deg": {"type": "number", "exclusiveMinimum": 0, "maximum": 5},
        "cut_step_deg": {"type": "number", "exclusiveMinimum": 0, "maximum": 5},
    }),
    "uav": _obj({
        "position": _vec3,
        "heading_deg": _num,
        "downtilt_deg": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 90},
        "standoff_m": {"type": "number", "exclusiveMinimum": 0},
        "payload_budget_g": {"type": "number", "minimum": 0},
        "other_payload_g": {"type": "number", "minimum": 0},
        "mounts": {"type": "array", "items": _mount},
        "coverage": _obj({"heights_m": _num_list, "downtilts_deg": _num_list,
                          "hpbw_e_deg": {"type": "number", "exclusiveMinimum": 0}}),
    }),
    "ues": {"type": "array", "items": _obj({
        "id": {"type": "string"}, "position": _vec2, "heading_deg": _num,
        "mounts": {"type": "array", "items": _mount}}, ["id", "position"])},
    "channel": _obj({
        "path_loss_exponent": {"type": "number", "minimum": 1},
        "reference_fspl_db": _opt_num,
        "oxygen_absorption_db_per_km": {"type": "number", "minimum": 0},
        "shadow_sigma_db": {"type": "number", "minimum": 0},
        "tx_power_dbm": _num,
        "noise_figure_db": _num,
        "bandwidth_hz": {"type": "number", "exclusiveMinimum": 0},
        "aci_rejection_db": {"type": "number", "minimum": 0},
        "mac_efficiency": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "channels": {"type": "array", "items": {"enum": [1, 2, 3]}, "minItems": 1},
        "backhaul_channel": {"enum": [1, 2, 3, None]},
        "sweep": _obj({"channel": {"enum": [1, 2, 3]}, "tx_gain_dbi": _opt_num,
                       "rx_gain_dbi": _opt_num,
                       "distances_m": {"type": "array", "items": {"type": "number", "minimum": 1}}}),
    }),
    "mission": _obj({
        "seed": {"type": "integer", "minimum": 0},
        "dt_s": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "max_time_s": {"type": "number", "exclusiveMinimum": 0},
        "base": _vec3,
        "cruise_speed_mps": {"type": "number", "exclusiveMinimum": 0},
        "serve_height_m": {"type": "number", "exclusiveMinimum": 0},
        "standoff_m": {"type": "number", "minimum": 0},
        "sensing_radius_m": {"type": "number", "exclusiveMinimum": 0},
        "cruise_drain_per_s": {"type": "number", "minimum": 0},
        "hover_drain_per_s": {"type": "number", "minimum": 0},
        "initial_battery": {"type": "number", "minimum": 0, "maximum": 1},
        "low_battery_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "return_margin": {"type": "number", "minimum": 1},
        "realign_latency_s": {"type": "number", "minimum": 0},
        "drift_sigma_mps": {"type": "number", "minimum": 0},
        "altitude_sigma_mps": {"type": "number", "minimum": 0},
        "drift_box_m": {"type": "number", "minimum": 0},
        "altitude_box_m": {"type": "number", "minimum": 0},
        "wind_doubling_mps": {"type": "number", "exclusiveMinimum": 0},
        "acoustic_threshold_db": _num,
        "standoff_shrink": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "acoustic": _obj({"level_at_1m_db": _num,
                          "spreading_db_per_decade": {"type": "number", "minimum": 0},
                          "excess_db_per_m": {"type": "number", "minimum": 0}}),
        "acoustic_sweep": _obj({"distances_m": {"type": "array", "items": {"type": "number", "minimum": 1}},
                                "thresholds_db": _num_list}),
        "events": {"type": "array", "items": _obj({
            "t": {"type": "number", "minimum": 0},
            "kind": {"enum": [k.value for k in EventKind]},
            "area_center": _vec2, "area_radius_m": {"type": "number", "minimum": 0},
            "ue_id": {"type": "string"}, "position": _vec2, "link_id": {"type": "string"},
            "db": _num, "speed_mps": {"type": "number", "minimum": 0}}, ["t", "kind"])},
    }),
    "outputs": _obj({"command": {"enum": list(COMMANDS) + [None]},
                     "dir": {"type": ["string", "null"]}}),
})


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _format_error(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path) or "<root>"
    return f"{path}: {err.message}"


def validate(doc: Dict[str, Any]) -> None:
    v = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(v.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ScenarioError([_format_error(e) for e in errors])


def resolve(doc: Dict[str, Any]) -> Dict[str, Any]:
    """Validate a raw scenario and fill in every default."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ScenarioError(["<root>: scenario must be a mapping"])
    validate(doc)
    out = _merge(DEFAULTS, doc)
    out["uav"]["mounts"] = [_merge(MOUNT_DEFAULTS, m) for m in out["uav"]["mounts"]]
    out["ues"] = [_merge(UE_DEFAULTS, u) for u in out["ues"]]
    for u in out["ues"]:
        u["mounts"] = [_merge(MOUNT_DEFAULTS, m) for m in u.get("mounts", [])]
    if out["uav"]["downtilt_deg"] is None:
        x, y, h = out["uav"]["position"]
        out["uav"]["downtilt_deg"] = downtilt_for_standoff(h, out["uav"]["standoff_m"])
    validate(out)
    return out


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``62.5e9`` (no exponent sign) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                   |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                   |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                   |[-+]?\.(?:inf|Inf|INF)
                   |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def bundled_path(name: str):
    return resources.files("uavabs").joinpath("scenarios", f"{name}.yaml")


def load(path_or_name) -> Dict[str, Any]:
    """Read and resolve a scenario file, or a bundled scenario by name."""
    p = Path(path_or_name)
    if p.exists():
        text = p.read_text()
    else:
        bp = bundled_path(str(path_or_name))
        if not bp.is_file():
            raise FileNotFoundError(f"no scenario file or bundled scenario '{path_or_name}'")
        text = bp.read_text()
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "?"
        raise ScenarioError([f"{where}: {getattr(e, 'problem', e)}"]) from e
    return resolve(doc)


def dump_json(cfg: Dict[str, Any]) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


# -- builders ---------------------------------------------------------------------

def array_geometry(cfg) -> ArrayGeometry:
    a = cfg["array"]
    return ArrayGeometry(a["n_elev"], a["n_azim"], a["spacing_wavelengths"], a["carrier_hz"])


def element_model(cfg) -> ElementModel:
    a = cfg["array"]
    floor = a["back_lobe_floor_db"]
    return ElementModel(a["exponent_q"], -math.inf if floor is None else floor)


def steering(cfg) -> SteeringCommand:
    s = cfg["array"]["steer"]
    return SteeringCommand(s["azimuth_deg"], s["elevation_deg"])


def _mount(cfg, m) -> BfmMount:
    return BfmMount(m["id"], MountOrientation(m["yaw_deg"], m["downtilt_deg"], tuple(m["offset_m"])),
                    array_geometry(cfg), element_model(cfg), m["weight_g"])


def uav_pose(cfg) -> UavPose:
    u = cfg["uav"]
    return UavPose(tuple(u["position"]), u["heading_deg"], u["downtilt_deg"])


def channel_params(cfg) -> ch.ChannelParams:
    c = cfg["channel"]
    return ch.ChannelParams(c["path_loss_exponent"], c["reference_fspl_db"],
                            c["oxygen_absorption_db_per_km"], c["shadow_sigma_db"])


def radio_config(cfg) -> RadioConfig:
    c = cfg["channel"]
    chans = tuple(x for x in c["channels"] if x != c["backhaul_channel"])
    if not chans:
        raise ScenarioError(["channel.channels: every access channel is reserved for backhaul"])
    return RadioConfig(c["tx_power_dbm"], c["noise_figure_db"], c["bandwidth_hz"],
                       c["aci_rejection_db"], c["mac_efficiency"], chans)


def scene(cfg) -> Scene:
    u = cfg["uav"]
    ues = tuple(GroundUe(e["id"], tuple(e["position"]),
                         tuple(_mount(cfg, m) for m in e["mounts"]), e["heading_deg"])
                for e in cfg["ues"])
    return Scene(uav_pose(cfg), tuple(_mount(cfg, m) for m in u["mounts"]), ues,
                 channel_params(cfg), radio_config(cfg), u["payload_budget_g"],
                 u["other_payload_g"])


def mission_config(cfg) -> MissionConfig:
    m = cfg["mission"]
    fields = {k: v for k, v in m.items()
              if k not in ("seed", "max_time_s", "acoustic", "acoustic_sweep", "events")}
    fields["base"] = tuple(fields["base"])
    return MissionConfig(acoustic=AcousticModel(**m["acoustic"]), **fields)


def mission_events(cfg) -> List[MissionEvent]:
    out = []
    for e in cfg["mission"]["events"]:
        kw = dict(e)
        kw["kind"] = EventKind(kw["kind"])
        for key in ("area_center", "position"):
            if key in kw:
                kw[key] = tuple(kw[key])
        out.append(MissionEvent(**kw))
    return out
