"""Run configuration: documented defaults, YAML/JSON config files, CLI overrides.

Precedence is command-line flag > config file > default. The merged result is
a plain nested dict, which is also what the provenance sidecar records.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

import yaml

from .analysis import DEFAULT_WIDTHS
from .ephemeris import EphemerisTable, PerturbationModel, SyntheticOrbit, apply_perturbation, \
    read_ephemeris, synthesize_pass
from .link_budget import SatelliteProfile, find_profile, load_catalog
from .timetag_sim import BackgroundModel, GateConfig, JitterModel, PassSimConfig


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "seed": 0,
    "satellite": "Ajisai",
    "catalog": None,
    "ephemeris_file": None,
    "orbit": {
        "altitude": 1485e3,
        "max_elevation": 60.0,
        "pass_duration": 600.0,
        "earth_radius": 6371e3,
        "step": 1.0,
        "interpolation_order": 8,
    },
    "perturbation": {"amplitude": 100.0, "correlation_time": 10.0},
    "simulation": {
        "duration": 60.0,
        "start": 100.0,
        "p_det": None,
        "arc_length": 1.0,
        "jitter": {"laser_emission_sigma": 0.5, "detector_sigma": 0.6,
                   "timestamp_sigma": 0.2, "clock_sigma": 0.2},
        "background": {"rate_in_gate": 0.4, "rms_fraction": 0.25,
                       "reference": "gate", "reference_bin_width": 5.0},
        "gate": {"gate_half_width": 500.0, "dead_time": 50.0},
    },
    "analysis": {
        "bin_widths": list(DEFAULT_WIDTHS),
        "headline_bin_width": 5.0,
        "span": 250.0,
        "window": 250.0,
        "arc_length": 5.0,
        "exclusion_halfwidth_bins": 1,
        "min_sigma": 1.0,
        "detector_loss_db": -10.0,
        "path_loss_db": -11.0,
    },
}


def _merge(base: dict, override: dict, path: tuple = ()) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = path + (key,)
        if key not in base:
            raise ConfigError(f"unknown config key: {'.'.join(where)}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {'.'.join(where)} must be a mapping")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def load_config(path: str | Path | None) -> dict:
    """Merge a config file (YAML or JSON; a simulation sidecar also works) over the defaults."""
    if path is None:
        return default_config()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: invalid config: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: config must be a mapping")
    if "effective_config" in data:
        data = data["effective_config"]
    return _merge(DEFAULTS, data)


def override(cfg: dict, dotted: str, value) -> dict:
    """Apply a CLI override if ``value`` is not None."""
    if value is None:
        return cfg
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node[k]
    node[keys[-1]] = value
    return cfg


def to_json(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


# --- builders ------------------------------------------------------------------


def profile_for(cfg: dict) -> SatelliteProfile:
    return find_profile(load_catalog(cfg["catalog"]), cfg["satellite"])


def build_orbit(cfg: dict) -> SyntheticOrbit:
    o = cfg["orbit"]
    return SyntheticOrbit(float(o["altitude"]), float(o["max_elevation"]),
                          float(o["pass_duration"]), float(o["earth_radius"]))


def build_ephemeris(cfg: dict) -> EphemerisTable:
    """Ephemeris from file, or a synthetic pass with the seeded perturbation applied."""
    order = int(cfg["orbit"]["interpolation_order"])
    if cfg["ephemeris_file"]:
        return read_ephemeris(cfg["ephemeris_file"], order)
    table = synthesize_pass(build_orbit(cfg), float(cfg["orbit"]["step"]), order)
    pert = cfg["perturbation"]
    model = PerturbationModel(float(pert["amplitude"]), float(pert["correlation_time"]), int(cfg["seed"]))
    return apply_perturbation(table, model)


def build_sim_config(cfg: dict, eph: EphemerisTable) -> PassSimConfig:
    s = cfg["simulation"]
    seed = int(cfg["seed"])
    return PassSimConfig(
        link=profile_for(cfg).link,
        ephemeris=eph,
        jitter=JitterModel(**{k: float(v) for k, v in s["jitter"].items()}, seed=seed),
        background=BackgroundModel(float(s["background"]["rate_in_gate"]),
                                   float(s["background"]["rms_fraction"]), seed,
                                   str(s["background"]["reference"]),
                                   float(s["background"]["reference_bin_width"])),
        gate=GateConfig(**{k: float(v) for k, v in s["gate"].items()}),
        duration=float(s["duration"]),
        master_seed=seed,
        start=float(s["start"]),
        p_det=None if s["p_det"] is None else float(s["p_det"]),
        arc_length=float(s["arc_length"]),
    )
