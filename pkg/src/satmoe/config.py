"""Scenario configuration: strict YAML schema, dotted overrides, scenario build.

Unknown keys are rejected everywhere so sweep paths and overrides cannot
silently typo. The resolved document is hashed (sha256) and echoed into every
artifact together with the mandatory workload seed.
"""
from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

import yaml

from .constellation import IslPolicy, SatelliteId, WalkerShell
from .engine import Scenario, SourceSpec, WorkloadSpec
from .errors import ConfigError
from .moe import MoEModelSpec, SkewSpec
from .power import BatteryState, DegradationLaw, PowerProfile
from .routing import CompressionModel
from .selection import SelectionPolicy
from .thermal import ThermalSpec

# section -> key -> default; None marks "required"
_SHELL_KEYS = {
    "shell_id": "A",
    "planes": None,
    "sats_per_plane": None,
    "altitude_km": 550.0,
    "inclination_deg": 53.0,
    "phasing_factor": 0,
    "raan_offset_deg": 0.0,
}

_PARTITION_KEYS = {"start_layer": None, "end_layer": None, "satellite": None}

SCHEMA: dict[str, dict] = {
    "label": "scenario",
    "constellation": {
        "shells": [_SHELL_KEYS],
        "isl_rate_bps": 10e9,
        "cross_shell": False,
        "cross_shell_rate_bps": None,
        "sun_direction": [1.0, 0.0, 0.0],
        "snapshot_interval_s": 10.0,
    },
    "model": {
        "num_layers": 4,
        "experts_per_layer": 8,
        "top_k": 2,
        "hidden_dim": 64,
        "bytes_per_element": 2,
        "expert_flops": 2e9,
        "non_expert_flops": 5e8,
        "expert_memory_bytes": 100e6,
        "dense_memory_bytes": 0.0,
        "skew_mode": "gaussian",
        "skew_s": 1.0,
        "skew_sigma": 0.5,
        "similarity_tau": 0.3,
    },
    "power": {
        "solar_panel_w": 800.0,
        "idle_load_w": 150.0,
        "compute_w_per_gflops": 0.05,
        "tx_w_per_gbps": 2.0,
        "compute_flops_per_s": 1e12,
        "battery_capacity_wh": 500.0,
        "initial_soc": 1.0,
        "health_floor": 0.6,
        "degradation_k_d": 1e-4,
        "degradation_alpha": 1.1,
        "degradation_beta": 0.5,
    },
    "thermal": {
        "emissivity": 0.9,
        "radiator_area_m2": 1.0,
        "radiator_temp_k": 290.0,
        "absorptivity": 0.3,
        "sun_facing_area_m2": 1.0,
        "earth_facing_area_m2": 1.0,
        "electronics_w": 0.0,
    },
    "placement": {
        "strategy": "mobility",
        "satellite_capacity_bytes": 400e6,
        "source_capacity_bytes": None,
        "replica_budget_bytes": 0.0,
        "profile_tokens": 1000,
        "planning_snapshots": 8,
        "profile_path": None,
        "partition": [_PARTITION_KEYS],
    },
    "selection": {
        "kind": "topk",
        "epsilon": 0.0,
        "w_util": 1.0,
        "w_deg": 0.0,
    },
    "routing": {
        "policy": "shortest",
        "latency_sensitive": True,
        "r_min": 0.25,
        "d_max": 0.2,
        "gamma": 1.0,
    },
    "workload": {
        "seed": None,
        "arrival": "uniform",
        "arrival_rate_per_s": 2.0,
        "tokens_per_request": 10,
        "duration_s": 250.0,
        "source_mode": "fixed",
        "source_satellite": "A:0:0",
        "ground_lat_deg": 0.0,
        "ground_lon_deg": 0.0,
        "min_elevation_deg": 10.0,
    },
    "output": {
        "emit": ["metrics"],
        "verbose": False,
    },
}

_REQUIRED = {("workload", "seed")}
_LIST_SECTIONS = {
    ("constellation", "shells"): _SHELL_KEYS,
    ("placement", "partition"): _PARTITION_KEYS,
}
VALID_EMITS = ("metrics", "ledgers", "thermal_series", "selection_log",
               "transmission_log", "placement", "topology")


def _check_keys(section: str, doc: dict, schema: dict) -> None:
    for key in doc:
        if key not in schema:
            raise ConfigError(
                f"unknown key {section}.{key!r}; valid keys: {sorted(schema)}"
            )


def load_config(path: str | Path) -> dict:
    """Parse and validate a scenario YAML file into a resolved config dict."""
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: cannot parse YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return resolve_config(raw)


def resolve_config(raw: dict) -> dict:
    """Apply defaults and reject unknown keys; returns the full document."""
    doc: dict = {}
    for section, schema in SCHEMA.items():
        if section == "label":
            doc["label"] = raw.get("label", SCHEMA["label"])
            continue
        given = raw.get(section, {})
        if given is None:
            given = {}
        if not isinstance(given, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        _check_keys(section, given, schema)
        resolved = {}
        for key, default in schema.items():
            if (section, key) in _LIST_SECTIONS:
                item_schema = _LIST_SECTIONS[(section, key)]
                items = given.get(key)
                if items is None:
                    if section == "constellation":
                        raise ConfigError("constellation.shells is required")
                    resolved[key] = []
                    continue
                if not isinstance(items, list) or not items:
                    raise ConfigError(f"{section}.{key} must be a non-empty list")
                out_items = []
                for i, item in enumerate(items):
                    _check_keys(f"{section}.{key}[{i}]", item, item_schema)
                    entry = {}
                    for ik, idefault in item_schema.items():
                        if ik not in item and idefault is None:
                            raise ConfigError(f"{section}.{key}[{i}].{ik} is required")
                        entry[ik] = item.get(ik, idefault)
                    out_items.append(entry)
                resolved[key] = out_items
                continue
            if key in given:
                resolved[key] = given[key]
            elif (section, key) in _REQUIRED:
                raise ConfigError(f"{section}.{key} is required")
            else:
                resolved[key] = default
        doc[section] = resolved
    for key in raw:
        if key not in SCHEMA:
            raise ConfigError(f"unknown section {key!r}; valid: {sorted(SCHEMA)}")
    return doc


def valid_override_paths() -> list[str]:
    paths = []
    for section, schema in SCHEMA.items():
        if section == "label":
            paths.append("label")
            continue
        for key in schema:
            if (section, key) not in _LIST_SECTIONS:
                paths.append(f"{section}.{key}")
    return sorted(paths)


def apply_override(doc: dict, path: str, value) -> dict:
    """Set one dotted-path key in a resolved config document."""
    parts = path.split(".")
    if path == "label":
        doc["label"] = value
        return doc
    if len(parts) != 2 or parts[0] not in SCHEMA or parts[1] not in SCHEMA[parts[0]]:
        raise ConfigError(
            f"unknown parameter path {path!r}; valid paths:\n  "
            + "\n  ".join(valid_override_paths())
        )
    if (parts[0], parts[1]) in _LIST_SECTIONS:
        raise ConfigError(f"{path} is a list section; override it in the config file")
    doc[parts[0]][parts[1]] = value
    return doc


def parse_override(text: str) -> tuple[str, object]:
    """Parse a KEY=VALUE override; the value goes through YAML scalar rules."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, _, value = text.partition("=")
    return key.strip(), yaml.safe_load(value)


def config_hash(doc: dict) -> str:
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, default=str).encode()
    ).hexdigest()[:16]


def build_scenario(doc: dict) -> Scenario:
    """Instantiate every component of a resolved config document."""
    con = doc["constellation"]
    shells = tuple(
        WalkerShell(
            planes=int(s["planes"]),
            sats_per_plane=int(s["sats_per_plane"]),
            altitude_km=float(s["altitude_km"]),
            inclination_deg=float(s["inclination_deg"]),
            phasing_factor=int(s["phasing_factor"]),
            raan_offset_deg=float(s["raan_offset_deg"]),
            shell_id=str(s["shell_id"]),
        )
        for s in con["shells"]
    )
    isl = IslPolicy(
        isl_rate_bps=float(con["isl_rate_bps"]),
        cross_shell=bool(con["cross_shell"]),
        cross_shell_rate_bps=(
            float(con["cross_shell_rate_bps"]) if con["cross_shell_rate_bps"] else None
        ),
    )
    sun = con["sun_direction"]
    if not isinstance(sun, (list, tuple)) or len(sun) != 3:
        raise ConfigError("constellation.sun_direction must be a 3-vector")

    m = doc["model"]
    model = MoEModelSpec(
        num_layers=int(m["num_layers"]),
        experts_per_layer=int(m["experts_per_layer"]),
        top_k=int(m["top_k"]),
        hidden_dim=int(m["hidden_dim"]),
        bytes_per_element=int(m["bytes_per_element"]),
        expert_flops=float(m["expert_flops"]),
        expert_memory_bytes=float(m["expert_memory_bytes"]),
        non_expert_flops=float(m["non_expert_flops"]),
        dense_memory_bytes=float(m["dense_memory_bytes"]),
    )
    skew = SkewSpec(mode=m["skew_mode"], s=float(m["skew_s"]), sigma=float(m["skew_sigma"]))

    p = doc["power"]
    profile = PowerProfile(
        solar_panel_w=float(p["solar_panel_w"]),
        idle_load_w=float(p["idle_load_w"]),
        compute_w_per_gflops=float(p["compute_w_per_gflops"]),
        tx_w_per_gbps=float(p["tx_w_per_gbps"]),
        compute_flops_per_s=float(p["compute_flops_per_s"]),
    )
    battery = BatteryState(
        capacity_wh=float(p["battery_capacity_wh"]),
        soc=float(p["initial_soc"]),
        law=DegradationLaw(
            k_d=float(p["degradation_k_d"]),
            alpha=float(p["degradation_alpha"]),
            beta=float(p["degradation_beta"]),
            health_floor=float(p["health_floor"]),
        ),
    )

    th = doc["thermal"]
    thermal_spec = ThermalSpec(
        emissivity=float(th["emissivity"]),
        radiator_area_m2=float(th["radiator_area_m2"]),
        radiator_temp_k=float(th["radiator_temp_k"]),
        absorptivity=float(th["absorptivity"]),
        sun_facing_area_m2=float(th["sun_facing_area_m2"]),
        earth_facing_area_m2=float(th["earth_facing_area_m2"]),
        electronics_w=float(th["electronics_w"]),
    )

    pl = doc["placement"]
    strategy = pl["strategy"]
    partition = None
    if pl["partition"]:
        partition = tuple(
            (int(g["start_layer"]), int(g["end_layer"]), SatelliteId.parse(g["satellite"]))
            for g in pl["partition"]
        )

    sel = doc["selection"]
    policy = SelectionPolicy(
        kind=sel["kind"],
        epsilon=float(sel["epsilon"]),
        w_util=float(sel["w_util"]),
        w_deg=float(sel["w_deg"]),
    )

    r = doc["routing"]
    compression = CompressionModel(
        r_min=float(r["r_min"]), d_max=float(r["d_max"]), gamma=float(r["gamma"])
    )

    w = doc["workload"]
    workload = WorkloadSpec(
        seed=int(w["seed"]),
        arrival=w["arrival"],
        arrival_rate_per_s=float(w["arrival_rate_per_s"]),
        tokens_per_request=int(w["tokens_per_request"]),
        duration_s=float(w["duration_s"]),
    )
    source = SourceSpec(
        mode=w["source_mode"],
        satellite=(
            SatelliteId.parse(w["source_satellite"])
            if w["source_mode"] == "fixed"
            else None
        ),
        ground_lat_deg=float(w["ground_lat_deg"]),
        ground_lon_deg=float(w["ground_lon_deg"]),
        min_elevation_deg=float(w["min_elevation_deg"]),
    )

    out = doc["output"]
    for emit in out["emit"]:
        if emit not in VALID_EMITS:
            raise ConfigError(f"unknown emit {emit!r}; valid: {VALID_EMITS}")

    return Scenario(
        label=str(doc["label"]),
        shells=shells,
        isl=isl,
        sun_direction=tuple(float(v) for v in sun),
        snapshot_interval_s=float(con["snapshot_interval_s"]),
        model=model,
        skew=skew,
        similarity_tau=float(m["similarity_tau"]),
        power_profile=profile,
        battery_template=battery,
        thermal_spec=thermal_spec,
        placement_strategy=strategy,
        satellite_capacity_bytes=float(pl["satellite_capacity_bytes"]),
        source_capacity_bytes=(
            float(pl["source_capacity_bytes"])
            if pl["source_capacity_bytes"] is not None
            else None
        ),
        replica_budget_bytes=float(pl["replica_budget_bytes"]),
        profile_path=pl["profile_path"],
        profile_tokens=int(pl["profile_tokens"]),
        planning_snapshots=int(pl["planning_snapshots"]),
        partition=partition,
        selection_policy=policy,
        routing_policy=r["policy"],
        latency_sensitive=bool(r["latency_sensitive"]),
        compression=compression,
        workload=workload,
        source=source,
        config_sha256=config_hash(doc),
        verbose=bool(out["verbose"]),
    )


def scenario_from_file(path: str | Path, overrides: list[str] | None = None) -> tuple[Scenario, dict]:
    """Load, override, and build; returns the scenario plus the resolved doc."""
    doc = load_config(path)
    for text in overrides or []:
        key, value = parse_override(text)
        apply_override(doc, key, value)
    return build_scenario(doc), doc


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario YAML shipped inside the package."""
    candidate = resources.files("satmoe") / "scenarios" / f"{name}.yaml"
    with resources.as_file(candidate) as path:
        if not path.exists():
            raise ConfigError(f"no bundled scenario named {name!r}")
        return Path(str(path))


def clone_config(doc: dict) -> dict:
    return copy.deepcopy(doc)
