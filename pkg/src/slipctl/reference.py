"""Parabolic stance reference built from energy balance and touchdown geometry."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .model import FlightState, ModelParams


log = logging.getLogger(__name__)


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class GaitCommand:
    v_des: float
    apex_des: float
    attack_angle: float

    def __post_init__(self) -> None:
        if not self.v_des > 0.0:
            raise TrajectoryError(f"GaitCommand.v_des must be > 0, got {self.v_des!r}")
        if not (math.pi / 2 < self.attack_angle < math.pi):
            raise TrajectoryError(
                f"GaitCommand.attack_angle must lie in (pi/2, pi), got {self.attack_angle!r}"
            )

    def check_against(self, p: ModelParams) -> None:
        y_td = p.rest_length * math.sin(self.attack_angle)
        if not self.apex_des > y_td:
            raise TrajectoryError(
                f"GaitCommand.apex_des={self.apex_des!r} must exceed the touchdown "
                f"height r0*sin(attack_angle)={y_td!r}"
            )


@dataclass(frozen=True)
class ReferenceTrajectory:
    quad_a: float
    quad_b: float
    quad_c: float
    waypoints: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]
    t_stance: float
    v_h: float
    start_time: float
    delta_h_apex: float = 0.0
    delta_y_min: float = 0.0
    # Coefficients act on (x - x_origin); keeps the fit well conditioned far from x = 0.
    x_origin: float = 0.0

    def height(self, x: float) -> float:
        xi = x - self.x_origin
        return (self.quad_a * xi + self.quad_b) * xi + self.quad_c

    def slope(self, x: float) -> float:
        return 2.0 * self.quad_a * (x - self.x_origin) + self.quad_b


@dataclass(frozen=True)
class ReferenceSample:
    pos: tuple[float, float]
    vel: tuple[float, float]
    acc: tuple[float, float]
    out_of_window: bool = False


def compute_compression(delta_h_apex: float, p: ModelParams) -> float:
    """Stance COM drop that stores ``m g delta_h_apex`` in the leg spring."""
    if delta_h_apex < 0.0:
        raise TrajectoryError(f"apex height drop must be >= 0, got {delta_h_apex!r}")
    return math.sqrt(2.0 * p.mass * p.gravity * delta_h_apex / p.stiffness)


def stance_waypoints(
    cmd: GaitCommand, touchdown: FlightState, foot_x: float, p: ModelParams
):
    """Landing, lowest and takeoff points of the planned stance plus its duration.

    Returns ``((x0, y0), (x1, y1), (x2, y2), t_stance)``. ``touchdown`` is the
    state the planner believes it landed in; only ``foot_x`` and the command
    enter the geometry.
    """
    r0 = p.rest_length
    c, s = math.cos(cmd.attack_angle), math.sin(cmd.attack_angle)
    x0, y0 = foot_x + r0 * c, r0 * s
    x2, y2 = foot_x - r0 * c, y0
    if not x2 > x0:
        raise TrajectoryError("attack angle gives no forward stance travel")
    dy_min = compute_compression(max(cmd.apex_des - y0, 0.0), p)
    if not dy_min > 0.0:
        raise TrajectoryError("zero compression: parabola would be degenerate")
    if not dy_min < y0:
        raise TrajectoryError(
            f"planned compression {dy_min!r} drives the COM into the ground (y0={y0!r})"
        )
    x1, y1 = foot_x, y0 - dy_min
    t_stance = (x2 - x0) / cmd.v_des
    return (x0, y0), (x1, y1), (x2, y2), t_stance


def fit_parabola(w0, w1, w2) -> tuple[float, float, float]:
    """Coefficients ``(a, b, c)`` of ``y = a x^2 + b x + c`` through three points.

    Gaussian elimination with partial pivoting on the 3x3 Vandermonde system.
    """
    xs = (float(w0[0]), float(w1[0]), float(w2[0]))
    if xs[0] == xs[1] or xs[0] == xs[2] or xs[1] == xs[2]:
        raise TrajectoryError(f"coincident abscissae {xs}: singular Vandermonde system")
    m = [[x * x, x, 1.0, float(w[1])] for x, w in zip(xs, (w0, w1, w2))]
    for col in range(3):
        piv = max(range(col, 3), key=lambda i: abs(m[i][col]))
        if m[piv][col] == 0.0:
            raise TrajectoryError("singular Vandermonde system")
        m[col], m[piv] = m[piv], m[col]
        for i in range(col + 1, 3):
            f = m[i][col] / m[col][col]
            for j in range(col, 4):
                m[i][j] -= f * m[col][j]
    u = [0.0, 0.0, 0.0]
    for i in (2, 1, 0):
        acc = m[i][3] - sum(m[i][j] * u[j] for j in range(i + 1, 3))
        u[i] = acc / m[i][i]
    return u[0], u[1], u[2]


def build_reference(
    cmd: GaitCommand,
    touchdown: FlightState,
    foot_x: float,
    p: ModelParams,
    start_time: float,
) -> ReferenceTrajectory:
    w0, w1, w2, t_stance = stance_waypoints(cmd, touchdown, foot_x, p)
    a, b, c = fit_parabola(*((x - foot_x, y) for x, y in (w0, w1, w2)))
    # The energy balance stores m g dh in the spring but ignores the extra
    # m g dy_min the COM loses on its way down to the bottom point.
    log.debug("reference: energy not accounted for %.6g J", p.mass * p.gravity * (w0[1] - w1[1]))
    return ReferenceTrajectory(
        quad_a=a,
        quad_b=b,
        quad_c=c,
        waypoints=(w0, w1, w2),
        t_stance=t_stance,
        v_h=cmd.v_des,
        start_time=start_time,
        delta_h_apex=cmd.apex_des - w0[1],
        delta_y_min=w0[1] - w1[1],
        x_origin=foot_x,
    )


def reference_output(
    traj: ReferenceTrajectory, t: float, clamp: bool = True
) -> ReferenceSample:
    """Desired COM position, velocity and acceleration at time ``t``.

    Outside ``[start_time, start_time + t_stance]`` the sample is flagged; with
    ``clamp`` the time is pinned to the nearest window end, otherwise the
    parabola is extrapolated at the same horizontal speed.
    """
    t_rel = t - traj.start_time
    outside = t_rel < 0.0 or t_rel > traj.t_stance
    if outside and clamp:
        t_rel = min(max(t_rel, 0.0), traj.t_stance)
    v = traj.v_h
    x = traj.waypoints[0][0] + v * t_rel
    slope = traj.slope(x)
    return ReferenceSample(
        pos=(x, traj.height(x)),
        vel=(v, slope * v),
        acc=(0.0, 2.0 * traj.quad_a * v * v),
        out_of_window=outside,
    )
