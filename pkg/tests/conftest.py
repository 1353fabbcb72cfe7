import math

import pytest

from slipctl.model import ModelParams
from slipctl.reference import GaitCommand
from slipctl.sim import GaitConfig, ServoConfig

ATTACK = 2.0 * math.pi / 3.0


def default_params(damping: float = 5.0) -> ModelParams:
    return ModelParams(mass=6.0, stiffness=2200.0, rest_length=0.25, damping=damping, gravity=9.81)


def default_command() -> GaitCommand:
    return GaitCommand(v_des=1.2, apex_des=0.30, attack_angle=ATTACK)


def default_config(**kw) -> GaitConfig:
    return GaitConfig(default_params(), default_command(), ServoConfig(ATTACK), **kw)


@pytest.fixture
def params() -> ModelParams:
    return default_params()


@pytest.fixture
def command() -> GaitCommand:
    return default_command()


@pytest.fixture
def gait_config() -> GaitConfig:
    return default_config()


@pytest.fixture(scope="session")
def passive_orbit():
    """Undamped, uncontrolled default plant and its periodic apex (y, vx)."""
    from slipctl.experiments import passive_config, passive_fixed_point

    cfg = passive_config(default_config())
    return cfg, passive_fixed_point(cfg, 0.30)
