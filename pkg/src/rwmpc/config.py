"""Strict configuration loading for the command-line front end.

Configurations are YAML files with a fixed nested key schema.  Unknown keys
are rejected (fail-closed) with the offending line number; missing keys fall
back to the nominal defaults.  ``load_config`` returns a plain nested dict
that the builder functions below turn into plant, design and scenario
objects.
"""

from __future__ import annotations

import copy
from dataclasses import replace

import numpy as np
import yaml

from .design import (ControlModelConfig, ControllerDesign, KalmanConfig,
                     MpcConfig, SolverConfig, design_controller)
from .simulation import NoiseConfig, SimScenario
from .surrogate import SurrogateConfig, build_surrogate


class ConfigError(ValueError):
    """Raised on malformed configuration files; message carries line info."""


_SCALAR = object()

SCHEMA = {
    "seed": _SCALAR,
    "model": {
        "surrogate": {
            "gamma": _SCALAR, "omega": _SCALAR, "n_stable": _SCALAR,
            "stable_decay_min": _SCALAR, "stable_decay_max": _SCALAR,
            "coil_time_constant": _SCALAR, "coil_resistance": _SCALAR,
            "mode_coupling": _SCALAR, "stable_coupling": _SCALAR,
            "stable_sensor_coupling": _SCALAR, "seed": _SCALAR,
        },
        "reduction": {
            "order": _SCALAR, "davison_order": _SCALAR,
            "dc_correction": _SCALAR, "freq_gate": _SCALAR,
        },
    },
    "controller": {
        "kind": _SCALAR, "horizon": _SCALAR, "blocking": _SCALAR,
        "u_limit": _SCALAR,
        "weights": {"q_unstable": _SCALAR, "q_stable": _SCALAR,
                    "r_input": _SCALAR},
        "kalman": {"q_unstable": _SCALAR, "q_stable": _SCALAR,
                   "r_meas": _SCALAR},
    },
    "solver": {
        "iterations": _SCALAR, "width": _SCALAR, "restart": _SCALAR,
        "restart_rule": _SCALAR, "preconditioner": _SCALAR,
    },
    "sim": {
        "duration": _SCALAR, "control_period": _SCALAR, "substep": _SCALAR,
        "xi0": _SCALAR, "gamma_override": _SCALAR, "omega_override": _SCALAR,
        "ps_time_constant": _SCALAR, "ps_delay": _SCALAR,
    },
    "noise": {
        "actuator_power": _SCALAR, "measurement_power": _SCALAR,
        "per_sample_variance": _SCALAR,
    },
    "sweep": {
        "bap": {"xi_min": _SCALAR, "xi_max": _SCALAR, "points": _SCALAR,
                "power_cap": _SCALAR},
        "robustness": {"gamma": _SCALAR, "omega": _SCALAR},
    },
    "bench": {"iterations": _SCALAR, "widths": _SCALAR},
    "verify": {"iterations": _SCALAR, "width": _SCALAR,
               "mse_gate": _SCALAR, "cost_gap_gate": _SCALAR},
}

DEFAULTS = {
    "seed": 0,
    "model": {
        "surrogate": {},
        "reduction": {"order": 50, "davison_order": 120,
                      "dc_correction": True, "freq_gate": 0.05},
    },
    "controller": {
        "kind": "mpc", "horizon": 80, "blocking": [2, 2, 76],
        "u_limit": 34.0,
        "weights": {"q_unstable": 10.0, "q_stable": 0.1, "r_input": 0.01},
        "kalman": {"q_unstable": 0.1, "q_stable": 0.01, "r_meas": 1.0},
    },
    "solver": {"iterations": 50, "width": "wide", "restart": True,
               "restart_rule": "paper", "preconditioner": "row-sum"},
    "sim": {"duration": 0.5, "control_period": 0.75e-3, "substep": 5e-5,
            "xi0": [0.5, 0.5], "gamma_override": None,
            "omega_override": None,
            "ps_time_constant": 7.5e-3, "ps_delay": 2.5e-3},
    "noise": {"actuator_power": 0.0, "measurement_power": 0.0,
              "per_sample_variance": False},
    "sweep": {
        "bap": {"xi_min": 0.35, "xi_max": 0.65, "points": 7,
                "power_cap": 5e6},
        "robustness": {"gamma": [0.1, 5.0, 10.0, 19.0],
                       "omega": [-15.0, 0.0, 15.0]},
    },
    "bench": {"iterations": [10, 20, 30, 50, 100],
              "widths": ["wide", "narrow"]},
    "verify": {"iterations": 20, "width": "wide",
               "mse_gate": 1e-2, "cost_gap_gate": 1.0},
}


def _validate_node(node, schema, path):
    """Walk a composed YAML node against the schema, reporting line numbers."""
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(
            f"line {node.start_mark.line + 1}: '{path or '<root>'}' "
            "must be a mapping")
    for key_node, value_node in node.value:
        key = key_node.value
        where = f"line {key_node.start_mark.line + 1}"
        full = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"{where}: unknown key '{full}'")
        sub = schema[key]
        if sub is not _SCALAR:
            _validate_node(value_node, sub, full)


def _merge(defaults, overrides):
    out = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path=None) -> dict:
    """Parse and validate a config file; ``None`` returns pure defaults."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError(f"{line}{exc}") from exc
    if node is None:
        return copy.deepcopy(DEFAULTS)
    _validate_node(node, SCHEMA, "")
    return _merge(DEFAULTS, data)


def surrogate_config(cfg: dict) -> SurrogateConfig:
    raw = dict(cfg["model"]["surrogate"])
    if "n_stable" in raw:
        raw["n_stable"] = int(raw["n_stable"])
    if "seed" in raw:
        raw["seed"] = int(raw["seed"])
    return SurrogateConfig(**raw)


def build_design(cfg: dict) -> tuple:
    """Build ``(plant, design)`` from a validated configuration."""
    s_cfg = surrogate_config(cfg)
    plant = build_surrogate(s_cfg)
    red = cfg["model"]["reduction"]
    control_cfg = ControlModelConfig(
        order=int(red["order"]), davison_order=int(red["davison_order"]),
        control_period=float(cfg["sim"]["control_period"]),
        ps_time_constant=float(cfg["sim"]["ps_time_constant"]),
        ps_delay=float(cfg["sim"]["ps_delay"]),
        davison_dc_correction=bool(red["dc_correction"]))
    ctrl = cfg["controller"]
    mpc_cfg = MpcConfig(
        horizon=int(ctrl["horizon"]),
        blocking=tuple(int(v) for v in ctrl["blocking"]),
        u_limit=float(ctrl["u_limit"]),
        q_unstable=float(ctrl["weights"]["q_unstable"]),
        q_stable=float(ctrl["weights"]["q_stable"]),
        r_input=float(ctrl["weights"]["r_input"]))
    kalman_cfg = KalmanConfig(
        q_unstable=float(ctrl["kalman"]["q_unstable"]),
        q_stable=float(ctrl["kalman"]["q_stable"]),
        r_meas=float(ctrl["kalman"]["r_meas"]))
    sol = cfg["solver"]
    solver_cfg = SolverConfig(
        iterations=int(sol["iterations"]), width=str(sol["width"]),
        restart=bool(sol["restart"]), restart_rule=str(sol["restart_rule"]),
        preconditioner=str(sol["preconditioner"]))
    design = design_controller(plant, s_cfg.sensor_angles_deg,
                               control_cfg=control_cfg, mpc_cfg=mpc_cfg,
                               kalman_cfg=kalman_cfg, solver_cfg=solver_cfg)
    return plant, design


def build_scenario(cfg: dict, plant, design: ControllerDesign) -> SimScenario:
    sim = cfg["sim"]
    noise = cfg["noise"]
    xi0 = tuple(float(v) for v in sim["xi0"])
    if len(xi0) != 2:
        raise ConfigError("sim.xi0 must have exactly two entries")
    return SimScenario(
        plant=plant, design=design,
        controller=str(cfg["controller"]["kind"]),
        saturation=float(cfg["controller"]["u_limit"]),
        xi0=xi0,
        duration=float(sim["duration"]),
        control_period=float(sim["control_period"]),
        substep=float(sim["substep"]),
        gamma_override=(None if sim["gamma_override"] is None
                        else float(sim["gamma_override"])),
        omega_override=(None if sim["omega_override"] is None
                        else float(sim["omega_override"])),
        noise=NoiseConfig(
            actuator_power=float(noise["actuator_power"]),
            measurement_power=float(noise["measurement_power"]),
            per_sample_variance=bool(noise["per_sample_variance"])),
        seed=int(cfg["seed"]))
