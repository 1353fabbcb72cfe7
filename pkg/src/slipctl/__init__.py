"""Spring-loaded inverted pendulum hopper with parabolic stance tracking control."""

from .control import build_plant, observer_gains, tracking_gains
from .model import FlightState, ModelParams, StanceState
from .reference import GaitCommand, build_reference
from .sim import (
    ControllerConfig,
    GaitConfig,
    GaitExecutor,
    GaitFailure,
    NoiseConfig,
    ServoConfig,
    apex_state,
    run_gait,
)

__all__ = [
    "ControllerConfig",
    "FlightState",
    "GaitCommand",
    "GaitConfig",
    "GaitExecutor",
    "GaitFailure",
    "ModelParams",
    "NoiseConfig",
    "ServoConfig",
    "StanceState",
    "apex_state",
    "build_plant",
    "build_reference",
    "observer_gains",
    "run_gait",
    "tracking_gains",
]
