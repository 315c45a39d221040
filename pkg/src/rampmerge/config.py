"""Run configuration: reference defaults plus TOML overrides.

The empty configuration reproduces the reference parameter set exactly; a
TOML file overrides individual entries.  Sections and keys::

    [solver]  episodes particles depth ucb_c discount seed
    [model]   dt accels dthetas_deg v_des a_max a_min tau delta d_min
              idm_sigma q_dynamics r_obs ego_width ego_length dtheta_max_deg
              merge_band accel_floor min_time_left width_is_full
              bounds_half_extents midpoint_collision obs_pos_cell
              obs_speed_cell
    [reward]  center vel acc steer crash cst end dist h

Angles in the file are degrees; they are converted to radians internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .abt import SolverConfig
from .merging import ModelConfig

_MODEL_KEYS = {
    "dt": "dt",
    "accels": "accels",
    "dthetas_deg": "dthetas_deg",
    "v_des": "v_des",
    "a_max": "idm_a_max",
    "a_min": "idm_a_min",
    "tau": "idm_tau",
    "delta": "idm_delta",
    "d_min": "idm_d_min",
    "idm_sigma": "idm_sigma",
    "q_dynamics": "q_dynamics",
    "r_obs": "r_obs",
    "ego_width": "ego_width",
    "ego_length": "ego_length",
    "dtheta_max_deg": "dtheta_max_deg",
    "merge_band": "merge_band",
    "accel_floor": "accel_floor",
    "min_time_left": "min_time_left",
    "width_is_full": "width_is_full",
    "bounds_half_extents": "bounds_half_extents",
    "midpoint_collision": "midpoint_collision",
    "obs_pos_cell": "obs_pos_cell",
    "obs_speed_cell": "obs_speed_cell",
}

_REWARD_KEYS = {
    "center": "r_center",
    "vel": "r_vel",
    "acc": "r_acc",
    "steer": "r_steer",
    "crash": "r_crash",
    "cst": "r_cst",
    "end": "r_end",
    "dist": "r_dist",
    "h": "r_h",
}

_SOLVER_KEYS = ("episodes", "particles", "depth", "ucb_c", "discount", "seed")


class ConfigError(ValueError):
    """Configuration file is malformed or names unknown keys."""


@dataclass
class RunConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def dump(self) -> dict:
        """Effective values, grouped the way the file format groups them."""
        solver = {k: getattr(self.solver, k) for k in _SOLVER_KEYS}
        model = {k: getattr(self.model, attr) for k, attr in _MODEL_KEYS.items()}
        model["accels"] = list(model["accels"])
        model["dthetas_deg"] = list(model["dthetas_deg"])
        model["idm_sigma"] = list(model["idm_sigma"])
        model["q_dynamics"] = list(model["q_dynamics"])
        model["r_obs"] = list(model["r_obs"])
        reward = {k: getattr(self.model, attr) for k, attr in _REWARD_KEYS.items()}
        return {"solver": solver, "model": model, "reward": reward}


def _apply(section: dict, mapping, target) -> dict:
    updates = {}
    for key, value in section.items():
        if isinstance(mapping, dict):
            if key not in mapping:
                raise ConfigError(f"unknown key {key!r}")
            attr = mapping[key]
        else:
            if key not in mapping:
                raise ConfigError(f"unknown key {key!r}")
            attr = key
        if isinstance(value, list):
            value = tuple(value)
        updates[attr] = value
    return updates


def load_run_config(path=None) -> RunConfig:
    """RunConfig from a TOML file; None or an empty file keeps every default."""
    cfg = RunConfig()
    if path is None:
        return cfg
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    unknown = set(data) - {"solver", "model", "reward"}
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    try:
        if "solver" in data:
            cfg.solver = replace(cfg.solver,
                                 **_apply(data["solver"], _SOLVER_KEYS, cfg.solver))
        model_updates = {}
        if "model" in data:
            model_updates.update(_apply(data["model"], _MODEL_KEYS, cfg.model))
        if "reward" in data:
            model_updates.update(_apply(data["reward"], _REWARD_KEYS, cfg.model))
        if model_updates:
            cfg.model = replace(cfg.model, **model_updates)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cfg
