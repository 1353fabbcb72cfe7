"""SLIP plant: parameters, state types, passive dynamics, guards and energy.

Conventions
-----------
* Ground is flat at ``y = 0``.
* In stance the foot is pinned at ``(foot_x, 0)``; ``theta`` is the leg angle
  measured from the +x ground direction, so ``theta in (0, pi)`` and forward
  running has ``theta`` decreasing through stance.
* In flight the massless leg is rigid at the rest length ``r0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class ModelError(ValueError):
    """Raised for states or parameters outside the model's domain."""


@dataclass(frozen=True)
class ModelParams:
    mass: float
    stiffness: float
    rest_length: float
    damping: float
    gravity: float

    def __post_init__(self) -> None:
        for name in ("mass", "stiffness", "rest_length", "gravity"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ModelError(f"ModelParams.{name} must be > 0, got {value!r}")
        if not (math.isfinite(self.damping) and self.damping >= 0.0):
            raise ModelError(f"ModelParams.damping must be >= 0, got {self.damping!r}")


@dataclass(frozen=True)
class FlightState:
    x: float
    y: float
    vx: float
    vy: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy])

    @classmethod
    def from_array(cls, a) -> FlightState:
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass(frozen=True)
class StanceState:
    r: float
    theta: float
    r_dot: float
    theta_dot: float
    foot_x: float = 0.0

    def __post_init__(self) -> None:
        if not self.r > 0.0:
            raise ModelError(f"stance radius must be > 0, got {self.r!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.theta, self.r_dot, self.theta_dot])

    @classmethod
    def from_array(cls, a, foot_x: float = 0.0) -> StanceState:
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]), foot_x)


class Phase(str, Enum):
    FLIGHT = "flight"
    STANCE = "stance"


@dataclass(frozen=True)
class HybridState:
    """Tagged flight/stance state. ``leg_angle`` is only meaningful in flight."""

    phase: Phase
    body: FlightState | StanceState
    time: float = 0.0
    leg_angle: float | None = None

    def __post_init__(self) -> None:
        if self.phase is Phase.FLIGHT:
            if not isinstance(self.body, FlightState) or self.leg_angle is None:
                raise ModelError("flight phase needs a FlightState body and a leg angle")
        elif self.phase is Phase.STANCE:
            if not isinstance(self.body, StanceState) or self.leg_angle is not None:
                raise ModelError("stance phase needs a StanceState body and no leg angle")
        else:  # pragma: no cover
            raise ModelError(f"unknown phase {self.phase!r}")


@dataclass(frozen=True)
class EnergyLedger:
    kinetic: float
    gravitational: float
    spring: float
    hamiltonian: float
    nonconservative_work: float = 0.0


# --- spring -----------------------------------------------------------------


def spring_potential(r: float, p: ModelParams) -> float:
    if not r > 0.0:
        raise ModelError(f"leg length must be > 0, got {r!r}")
    d = p.rest_length - r
    return 0.5 * p.stiffness * d * d


def spring_force(r: float, p: ModelParams) -> float:
    """Radial spring force, positive pushing the mass away from the foot."""
    if not r > 0.0:
        raise ModelError(f"leg length must be > 0, got {r!r}")
    return p.stiffness * (p.rest_length - r)


# --- passive dynamics ---------------------------------------------------------


def flight_rhs(y: np.ndarray, gravity: float) -> np.ndarray:
    """Ballistic vector field on the array ``(x, y, vx, vy)``."""
    return np.array([y[2], y[3], 0.0, -gravity])


def flight_derivative(s: FlightState, p: ModelParams) -> np.ndarray:
    return np.array([s.vx, s.vy, 0.0, -p.gravity])


def stance_polar_rhs(y: np.ndarray, p: ModelParams) -> np.ndarray:
    """Passive stance vector field on the polar array ``(r, theta, r_dot, theta_dot)``."""
    r, th, rd, thd = y[0], y[1], y[2], y[3]
    if not r > 0.0:
        raise ModelError(f"stance radius must be > 0, got {r!r}")
    m = p.mass
    r_dd = (
        r * thd * thd
        - p.gravity * math.sin(th)
        - (p.damping / m) * rd
        + p.stiffness * (p.rest_length - r) / m
    )
    # d/dt(m r^2 thd) = -m g r cos(th) with theta measured from +x: gravity's
    # tangential component along (-sin th, cos th) is -g cos(th).
    th_dd = (-p.gravity * math.cos(th) - 2.0 * rd * thd) / r
    return np.array([rd, thd, r_dd, th_dd])


def stance_derivative_passive(s: StanceState, p: ModelParams) -> np.ndarray:
    return stance_polar_rhs(s.as_array(), p)


def stance_cartesian_accel(
    dx: float, y: float, vx: float, vy: float, p: ModelParams
) -> tuple[float, float]:
    """COM acceleration in stance from spring, damper and gravity.

    ``dx`` is the COM position relative to the foot. The damper acts on the
    radial component of ``(vx, vy)``.
    """
    r = math.hypot(dx, y)
    if not r > 0.0:
        raise ModelError("COM coincides with the stance foot")
    ex, ey = dx / r, y / r
    r_dot = vx * ex + vy * ey
    radial = (p.stiffness * (p.rest_length - r) - p.damping * r_dot) / p.mass
    return radial * ex, radial * ey - p.gravity


# --- coordinate transforms ----------------------------------------------------


def stance_to_cartesian(s: StanceState) -> FlightState:
    c, sn = math.cos(s.theta), math.sin(s.theta)
    return FlightState(
        x=s.foot_x + s.r * c,
        y=s.r * sn,
        vx=s.r_dot * c - s.r * s.theta_dot * sn,
        vy=s.r_dot * sn + s.r * s.theta_dot * c,
    )


def cartesian_to_stance(f: FlightState, foot_x: float) -> StanceState:
    dx = f.x - foot_x
    r = math.hypot(dx, f.y)
    if r == 0.0:
        raise ModelError("cannot express a COM located at the foot in polar form")
    theta = math.atan2(f.y, dx)
    r_dot = (dx * f.vx + f.y * f.vy) / r
    theta_dot = (dx * f.vy - f.y * f.vx) / (r * r)
    return StanceState(r, theta, r_dot, theta_dot, foot_x)


# --- guards -------------------------------------------------------------------


def touchdown_guard(f: FlightState, leg_angle: float, p: ModelParams) -> float:
    """Foot height above ground; touchdown when this falls through zero."""
    return f.y - p.rest_length * math.sin(leg_angle)


def liftoff_guard(s: StanceState, p: ModelParams) -> float:
    """Leg compression; liftoff when this falls through zero with r extending."""
    return p.rest_length - s.r


# --- energy -------------------------------------------------------------------


def energy_ledger(
    state: HybridState, p: ModelParams, nonconservative_work: float = 0.0
) -> EnergyLedger:
    if state.phase is Phase.STANCE:
        cart = stance_to_cartesian(state.body)
        v_s = spring_potential(state.body.r, p)
    else:
        cart = state.body
        v_s = 0.0
    t = 0.5 * p.mass * (cart.vx * cart.vx + cart.vy * cart.vy)
    v_g = p.mass * p.gravity * cart.y
    return EnergyLedger(t, v_g, v_s, t + v_g + v_s, nonconservative_work)
