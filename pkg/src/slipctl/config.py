"""Flat YAML run configuration with unit-suffixed keys and strict validation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import yaml

from .integrator import IntegratorConfig
from .model import FlightState, ModelParams
from .reference import GaitCommand
from .sim import ControllerConfig, GaitConfig, NoiseConfig, ServoConfig, apex_state


class ConfigError(ValueError):
    """Collects every problem found in a config; each line names its key."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid config:\n  " + "\n  ".join(problems))
        self.problems = problems


def _number(v: Any) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError(f"expected a number, got {type(v).__name__}")
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {v!r}")
    return float(v)


def _integer(v: Any) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError(f"expected an integer, got {type(v).__name__}")
    return v


def _boolean(v: Any) -> bool:
    if not isinstance(v, bool):
        raise TypeError(f"expected true/false, got {type(v).__name__}")
    return v


def _string(v: Any) -> str:
    if not isinstance(v, str):
        raise TypeError(f"expected a string, got {type(v).__name__}")
    return v


def _optional_number(v: Any) -> Optional[float]:
    return None if v is None else _number(v)


def _number_list(n: Optional[int] = None) -> Callable[[Any], list[float]]:
    def parse(v: Any) -> list[float]:
        if not isinstance(v, list):
            raise TypeError(f"expected a list, got {type(v).__name__}")
        if n is not None and len(v) != n:
            raise ValueError(f"expected {n} entries, got {len(v)}")
        return [_number(x) for x in v]

    return parse


# key -> (parser, default); REQUIRED marks keys without a default.
REQUIRED = object()

SCHEMA: dict[str, tuple[Callable[[Any], Any], Any]] = {
    "mass_kg": (_number, REQUIRED),
    "stiffness_n_per_m": (_number, REQUIRED),
    "rest_length_m": (_number, REQUIRED),
    "damping_n_s_per_m": (_number, REQUIRED),
    "gravity_m_per_s2": (_number, REQUIRED),
    "v_des_m_per_s": (_number, REQUIRED),
    "apex_des_m": (_number, REQUIRED),
    "attack_angle_rad": (_number, REQUIRED),
    "n_steps": (_integer, REQUIRED),
    "servo_time_constant_s": (_number, 0.0),
    "servo_velocity_gain_rad_s_per_m": (_number, 0.0),
    "touchdown_noise_fraction": (_number, 0.0),
    "liftoff_noise_fraction": (_number, 0.0),
    "seed": (_integer, 0),
    "noise_distribution": (_string, "uniform-symmetric"),
    "step_size_s": (_number, 1e-4),
    "event_tolerance_s": (_number, 1e-9),
    "guard_tolerance": (_number, 1e-12),
    "max_bisection_iters": (_integer, 60),
    "eta1_per_s": (_number, -30.0),
    "eta2_per_s": (_number, -1.0),
    "observer_poles_per_s": (_number_list(4), [-120.0, -120.0, -120.0, -120.0]),
    "controller_enabled": (_boolean, True),
    "saturation_m_per_s": (_optional_number, 2.0),
    "crush_limit_fraction": (_number, 0.3),
    "initial_apex_y_m": (_optional_number, None),
    "initial_vx_m_per_s": (_optional_number, None),
    "output_decimation": (_integer, 1),
    "trajectory_csv": (_string, "trajectory.csv"),
    "summary_file": (_string, "steps.jsonl"),
    "noise_levels": (_number_list(), [0.0, 0.05, 0.10]),
    "n_seeds": (_integer, 50),
    "jacobian_delta": (_number, 1e-5),
}


@dataclass(frozen=True)
class RunConfig:
    gait: GaitConfig
    initial: FlightState
    n_steps: int
    trajectory_csv: str
    summary_file: str
    noise_levels: tuple[float, ...]
    n_seeds: int
    jacobian_delta: float
    # Fully resolved key/value view, used for echoing and round trips.
    values: dict

    @property
    def seed(self) -> int:
        return self.gait.noise.seed

    def echo(self) -> str:
        return dump_config(self.values)

    def with_overrides(self, seed: Optional[int] = None, n_steps: Optional[int] = None) -> RunConfig:
        vals = dict(self.values)
        if seed is not None:
            vals["seed"] = seed
        if n_steps is not None:
            vals["n_steps"] = n_steps
        return parse_mapping(vals)


def dump_config(values: dict) -> str:
    return yaml.safe_dump(values, sort_keys=True, default_flow_style=None)


def parse_mapping(raw: Any) -> RunConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError([f"<root>: expected a mapping of keys, got {type(raw).__name__}"])
    problems: list[str] = []
    for key in sorted(set(raw) - set(SCHEMA), key=str):
        problems.append(f"{key}: unknown key")
    missing = [k for k, (_, d) in SCHEMA.items() if d is REQUIRED and k not in raw]
    for key in missing:
        problems.append(f"{key}: missing required key")

    vals: dict[str, Any] = {}
    for key, (parse, default) in SCHEMA.items():
        if key not in raw:
            if default is not REQUIRED:
                vals[key] = list(default) if isinstance(default, list) else default
            continue
        try:
            vals[key] = parse(raw[key])
        except (TypeError, ValueError) as exc:
            problems.append(f"{key}: {exc}")
    if problems:
        raise ConfigError(problems)

    def build(key: str, fn: Callable[[], Any]):
        try:
            return fn()
        except (TypeError, ValueError) as exc:
            problems.append(f"{key}: {exc}")
            return None

    params = build(
        "mass_kg/stiffness_n_per_m/rest_length_m/damping_n_s_per_m/gravity_m_per_s2",
        lambda: ModelParams(
            vals["mass_kg"],
            vals["stiffness_n_per_m"],
            vals["rest_length_m"],
            vals["damping_n_s_per_m"],
            vals["gravity_m_per_s2"],
        ),
    )
    command = build(
        "v_des_m_per_s/apex_des_m/attack_angle_rad",
        lambda: GaitCommand(vals["v_des_m_per_s"], vals["apex_des_m"], vals["attack_angle_rad"]),
    )
    servo = build(
        "servo_time_constant_s",
        lambda: ServoConfig(
            vals["attack_angle_rad"],
            vals["servo_time_constant_s"],
            vals["servo_velocity_gain_rad_s_per_m"],
        ),
    )
    noise = build(
        "touchdown_noise_fraction/liftoff_noise_fraction/seed/noise_distribution",
        lambda: NoiseConfig(
            vals["touchdown_noise_fraction"],
            vals["liftoff_noise_fraction"],
            vals["seed"],
            vals["noise_distribution"],
        ),
    )
    integ = build(
        "step_size_s/event_tolerance_s/max_bisection_iters/guard_tolerance",
        lambda: IntegratorConfig(
            vals["step_size_s"],
            vals["event_tolerance_s"],
            vals["max_bisection_iters"],
            vals["guard_tolerance"],
        ),
    )
    ctl = build(
        "saturation_m_per_s/crush_limit_fraction",
        lambda: ControllerConfig(
            vals["eta1_per_s"],
            vals["eta2_per_s"],
            tuple(vals["observer_poles_per_s"]),
            vals["controller_enabled"],
            vals["saturation_m_per_s"],
            vals["crush_limit_fraction"],
        ),
    )
    if vals["eta1_per_s"] >= 0.0 or vals["eta2_per_s"] >= 0.0:
        problems.append("eta1_per_s/eta2_per_s: error-dynamics eigenvalues must be < 0")
    if any(v >= 0.0 for v in vals["observer_poles_per_s"]):
        problems.append("observer_poles_per_s: observer poles must be < 0")
    if vals["n_steps"] < 1:
        problems.append("n_steps: must be >= 1")
    if vals["n_seeds"] < 1:
        problems.append("n_seeds: must be >= 1")
    if vals["output_decimation"] < 1:
        problems.append("output_decimation: must be >= 1")
    if not vals["jacobian_delta"] > 0.0:
        problems.append("jacobian_delta: must be > 0")
    if any(not 0.0 <= v <= 0.5 for v in vals["noise_levels"]):
        problems.append("noise_levels: every level must lie in [0, 0.5]")
    if problems:
        raise ConfigError(problems)

    gait = build(
        "apex_des_m",
        lambda: GaitConfig(
            params, command, servo, noise, integ, ctl, vals["output_decimation"], True
        ),
    )
    if problems:
        raise ConfigError(problems)

    y0 = vals["initial_apex_y_m"] if vals["initial_apex_y_m"] is not None else vals["apex_des_m"]
    vx0 = vals["initial_vx_m_per_s"] if vals["initial_vx_m_per_s"] is not None else vals["v_des_m_per_s"]
    return RunConfig(
        gait=gait,
        initial=apex_state(y0, vx0),
        n_steps=vals["n_steps"],
        trajectory_csv=vals["trajectory_csv"],
        summary_file=vals["summary_file"],
        noise_levels=tuple(vals["noise_levels"]),
        n_seeds=vals["n_seeds"],
        jacobian_delta=vals["jacobian_delta"],
        values=vals,
    )


def parse_text(text: str) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"<root>: not valid YAML ({exc})"]) from exc
    return parse_mapping(raw)


def parse_config(path: str | Path) -> RunConfig:
    return parse_text(Path(path).read_text())
