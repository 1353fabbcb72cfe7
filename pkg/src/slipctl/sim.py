"""Gait executor: flight servo, stance tracking controller and noisy event listeners.

One cycle is flight (apex, touchdown) followed by stance (liftoff). The
end-of-flight listener fires at a perturbed touchdown height
``r0 sin(leg) (1 + eps)``; the state at that virtual crossing (continuing the
ballistic arc if needed) is what the stance controller believes it landed in,
and the perceived crossing time is when its reference clock starts. The plant
itself always switches on the true guards.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .control import (
    LinearPlant,
    TrackingGains,
    build_plant,
    observer_gains,
    tracking_gains,
)
from .integrator import FALLING, IntegrationError, IntegratorConfig, integrate_until_event
from .model import (
    EnergyLedger,
    FlightState,
    HybridState,
    ModelError,
    ModelParams,
    Phase,
    energy_ledger,
    stance_cartesian_accel,
)
from .reference import (
    GaitCommand,
    ReferenceTrajectory,
    TrajectoryError,
    build_reference,
    reference_output,
)

log = logging.getLogger(__name__)

FLIGHT_HORIZON_S = 20.0


class GaitFailure(RuntimeError):
    def __init__(self, reason: str, step: int | None = None):
        super().__init__(reason if step is None else f"step {step}: {reason}")
        self.reason = reason
        self.step = step


@dataclass(frozen=True)
class ServoConfig:
    attack_angle: float
    time_constant: float = 0.0
    velocity_gain: float = 0.0

    def __post_init__(self) -> None:
        if not (math.pi / 2 < self.attack_angle < math.pi):
            raise ValueError(f"ServoConfig.attack_angle must lie in (pi/2, pi), got {self.attack_angle!r}")
        if not self.time_constant >= 0.0:
            raise ValueError(f"ServoConfig.time_constant must be >= 0, got {self.time_constant!r}")


@dataclass(frozen=True)
class NoiseConfig:
    touchdown_noise_fraction: float = 0.0
    liftoff_noise_fraction: float = 0.0
    seed: int = 0
    distribution: str = "uniform-symmetric"

    def __post_init__(self) -> None:
        for name in ("touchdown_noise_fraction", "liftoff_noise_fraction"):
            v = getattr(self, name)
            if not (0.0 <= v <= 0.5):
                raise ValueError(f"NoiseConfig.{name} must lie in [0, 0.5], got {v!r}")
        if not (0 <= self.seed < 2**64):
            raise ValueError(f"NoiseConfig.seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.distribution != "uniform-symmetric":
            raise ValueError(f"unsupported noise distribution {self.distribution!r}")


@dataclass(frozen=True)
class ControllerConfig:
    eta1: float = -30.0
    eta2: float = -1.0
    observer_poles: tuple[float, float, float, float] = (-120.0, -120.0, -120.0, -120.0)
    enabled: bool = True
    # Per-channel bound on |u| in m/s; None disables saturation.
    saturation: Optional[float] = 2.0
    crush_limit_fraction: float = 0.3

    def __post_init__(self) -> None:
        if self.saturation is not None and not self.saturation >= 0.0:
            raise ValueError(f"ControllerConfig.saturation must be >= 0, got {self.saturation!r}")
        if not (0.0 < self.crush_limit_fraction < 1.0):
            raise ValueError("ControllerConfig.crush_limit_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class GaitConfig:
    params: ModelParams
    command: GaitCommand
    servo: ServoConfig
    noise: NoiseConfig = NoiseConfig()
    integrator: IntegratorConfig = IntegratorConfig()
    controller: ControllerConfig = ControllerConfig()
    output_decimation: int = 1
    record_trajectory: bool = False

    def __post_init__(self) -> None:
        self.command.check_against(self.params)
        if self.output_decimation < 1:
            raise ValueError("output_decimation must be >= 1")


@dataclass(frozen=True)
class ApexRecord:
    y: float
    vx: float
    time: float
    x: float = 0.0


@dataclass(frozen=True)
class EventRecord:
    true_state: FlightState
    perceived_state: FlightState
    time: float
    perceived_time: float
    noise: float = 0.0
    guard_residual: float = 0.0


@dataclass
class StepRecord:
    index: int
    apex: Optional[ApexRecord]
    touchdown: EventRecord
    liftoff: EventRecord
    reference: ReferenceTrajectory
    foot_x: float
    leg_angle: float
    e2_touchdown: float
    e2_max: float
    e2_liftoff: float
    energy_apex: Optional[EnergyLedger]
    saturated_steps: int = 0
    reference_overrun: bool = False


@dataclass
class GaitLog:
    records: list[StepRecord] = field(default_factory=list)
    samples: list[tuple] = field(default_factory=list)
    final_apex: Optional[ApexRecord] = None
    failure: Optional[str] = None
    failure_step: Optional[int] = None

    @property
    def apexes(self) -> list[ApexRecord]:
        out = [r.apex for r in self.records if r.apex is not None]
        if self.final_apex is not None:
            out.append(self.final_apex)
        return out


@dataclass
class FlightResult:
    touchdown: FlightState
    touchdown_time: float
    perceived: FlightState
    perceived_time: float
    leg_angle: float
    apex: Optional[ApexRecord]
    noise: float
    guard_residual: float


@dataclass
class StanceResult:
    liftoff: FlightState
    liftoff_time: float
    perceived_liftoff: FlightState
    perceived_liftoff_time: float
    reference: ReferenceTrajectory
    foot_x: float
    e2_touchdown: float
    e2_max: float
    e2_liftoff: float
    saturated_steps: int
    reference_overrun: bool
    noise: float
    guard_residual: float


def _flight_field(g: float):
    def f(_t, y):
        return np.array([y[2], y[3], 0.0, -g])

    return f


class GaitExecutor:
    """Single-threaded owner of one simulated gait (noise stream, trajectory buffer)."""

    def __init__(self, config: GaitConfig):
        self.config = config
        self.plant: LinearPlant = build_plant(config.params)
        ctl = config.controller
        self.gains: TrackingGains = tracking_gains(ctl.eta1, ctl.eta2)
        self.K_e = observer_gains(self.plant, ctl.observer_poles)
        self.rng = np.random.default_rng(config.noise.seed)
        self.samples: list[tuple] = []
        self._tick = 0
        self._phase_start = True
        self._h0: Optional[float] = None

    # -- noise --------------------------------------------------------------

    def _draw(self, fraction: float) -> float:
        # Always consume one draw so the stream position does not depend on the fraction.
        u = self.rng.uniform(-1.0, 1.0)
        return fraction * u if fraction > 0.0 else 0.0

    # -- trajectory buffer --------------------------------------------------

    def _sample(self, row: tuple, force: bool = False) -> None:
        if not self.config.record_trajectory:
            return
        if force or self._phase_start or self._tick % self.config.output_decimation == 0:
            self.samples.append(row)
        # The first row of every phase is kept so transitions are always visible.
        self._phase_start = False
        self._tick += 1

    def _flight_row(self, t: float, y) -> tuple:
        p = self.config.params
        x, yy, vx, vy = float(y[0]), float(y[1]), float(y[2]), float(y[3])
        H = 0.5 * p.mass * (vx * vx + vy * vy) + p.mass * p.gravity * yy
        return (t, "flight", x, yy, vx, vy, None, None, None, None, None, None, H)

    # -- servo --------------------------------------------------------------

    def _target_angle(self, vx_apex: float) -> float:
        servo = self.config.servo
        a = servo.attack_angle + servo.velocity_gain * (vx_apex - self.config.command.v_des)
        eps = 1e-6
        return min(max(a, math.pi / 2 + eps), math.pi - eps)

    def _leg_angle_fn(self, t_start: float, angle0: float, target: float):
        tau = self.config.servo.time_constant
        if tau == 0.0:
            return lambda _t: target
        return lambda t: target + (angle0 - target) * math.exp(-(t - t_start) / tau)

    # -- phases -------------------------------------------------------------

    def run_flight(
        self, state: FlightState, t0: float, leg_angle0: Optional[float] = None
    ) -> FlightResult:
        cfg = self.config
        p, integ = cfg.params, cfg.integrator
        f = _flight_field(p.gravity)
        self._phase_start = True
        y = state.as_array()
        on_step = (lambda t, s: self._sample(self._flight_row(t, s))) if cfg.record_trajectory else None

        apex: Optional[ApexRecord] = None
        t = t0
        if state.vy > 0.0:
            ev = integrate_until_event(
                t, y, f, lambda _t, s: s[3], FALLING, integ, FLIGHT_HORIZON_S, on_step=on_step
            )
            t, y = ev.time, ev.state
            self._sample(self._flight_row(t, y), force=True)
        if state.vy >= 0.0:
            apex = ApexRecord(y=float(y[1]), vx=float(y[2]), time=t, x=float(y[0]))
        vx_ref = float(y[2])
        target = self._target_angle(vx_ref)
        leg0 = target if leg_angle0 is None else leg_angle0
        leg = self._leg_angle_fn(t0, leg0, target)
        r0 = p.rest_length
        if y[1] <= r0 * math.sin(target):
            raise GaitFailure(
                f"apex height {float(y[1]):.6g} m below touchdown height {r0 * math.sin(target):.6g} m"
            )

        # Perceived touchdown from the noisy end-of-flight listener, on the same step grid.
        eps = self._draw(cfg.noise.touchdown_noise_fraction)
        t_apex, y_apex = t, y

        ev = integrate_until_event(
            t,
            y,
            f,
            lambda tt, s: s[1] - r0 * math.sin(leg(tt)),
            FALLING,
            integ,
            FLIGHT_HORIZON_S,
            on_step=on_step,
        )
        t_td, y_td = ev.time, ev.state
        self._sample(self._flight_row(t_td, y_td), force=True)
        leg_td = leg(t_td)
        td = FlightState.from_array(y_td)

        if eps == 0.0:
            perceived, t_perc = td, t_td
        else:
            thresh = r0 * math.sin(leg_td) * (1.0 + eps)
            if thresh >= y_apex[1]:
                perceived, t_perc = FlightState.from_array(y_apex), t_apex
            else:
                pev = integrate_until_event(
                    t_apex, y_apex, f, lambda _t, s: s[1] - thresh, FALLING, integ, FLIGHT_HORIZON_S
                )
                perceived, t_perc = FlightState.from_array(pev.state), pev.time
        return FlightResult(td, t_td, perceived, t_perc, leg_td, apex, eps, ev.residual)

    def run_stance(
        self,
        touchdown: FlightState,
        t_td: float,
        perceived: FlightState,
        t_perc: float,
        leg_angle: float,
    ) -> StanceResult:
        """Stance from true touchdown to true liftoff.

        The tracking controller engages at ``max(t_td, t_perc)``: before a late
        end-of-flight signal the leg is passive. On engagement the observer is
        reset to the perceived touchdown state. An early end-of-stance signal
        releases the actuator and the leg finishes extending passively.
        """
        cfg = self.config
        p, integ, ctl = cfg.params, cfg.integrator, cfg.controller
        self._phase_start = True
        r0 = p.rest_length
        cos_l = math.cos(leg_angle)
        foot = touchdown.x - r0 * cos_l
        foot_perc = perceived.x - r0 * cos_l
        cmd = replace(cfg.command, attack_angle=leg_angle)
        ref = build_reference(cmd, perceived, foot_perc, p, t_perc)

        CK = self.gains.CK
        ck11, ck12, ck21, ck22 = float(CK[0, 0]), float(CK[0, 1]), float(CK[1, 0]), float(CK[1, 1])
        Ke = self.K_e
        l1y, l2y, l1x, l2x = float(Ke[0, 0]), float(Ke[1, 0]), float(Ke[2, 1]), float(Ke[3, 1])
        sat = ctl.saturation
        r_crush = ctl.crush_limit_fraction * r0
        half_h = 0.5 * integ.step_size

        held = [0.0, 0.0]  # (ux, uy)
        stats = {"e2_max": 0.0, "saturated": 0, "overrun": False}
        engaged = [False]

        def e2_at(t, x, y):
            rs = reference_output(ref, t, clamp=False)
            return rs, rs.pos[0] - x, rs.pos[1] - y

        def before_step(t, s):
            if not engaged[0]:
                held[0] = held[1] = 0.0
                return
            rs, ex, ey = e2_at(t, s[0], s[2])
            n = math.hypot(ex, ey)
            if n > stats["e2_max"]:
                stats["e2_max"] = n
            if rs.out_of_window:
                stats["overrun"] = True
            if not ctl.enabled:
                held[0] = held[1] = 0.0
                return
            # u = (CB)^-1 (ydot_d - C A xhat + CK e2), CB = I, C A xhat = (vx_hat, vy_hat).
            # Velocities are taken at mid-step so the held input matches the step average.
            vel_mid = reference_output(ref, t + half_h, clamp=False).vel
            axh, ayh = stance_cartesian_accel(s[4] - foot, s[6], s[5], s[7], p)
            fx = vel_mid[0] - (s[5] + half_h * axh)
            fy = vel_mid[1] - (s[7] + half_h * ayh)
            # Plant output order is (y, x).
            uy = fy + ck11 * ey + ck12 * ex
            ux = fx + ck21 * ey + ck22 * ex
            if sat is not None:
                if abs(ux) > sat or abs(uy) > sat:
                    stats["saturated"] += 1
                ux = min(max(ux, -sat), sat)
                uy = min(max(uy, -sat), sat)
            held[0], held[1] = ux, uy

        def f(_t, s):
            x, vx, y, vy, xh, vxh, yh, vyh = s.tolist()
            ux, uy = held
            ax, ay = stance_cartesian_accel(x - foot, y, vx, vy, p)
            axh, ayh = stance_cartesian_accel(xh - foot, yh, vxh, vyh, p)
            ix, iy = x - xh, y - yh
            return np.array(
                [
                    vx + ux,
                    ax,
                    vy + uy,
                    ay,
                    vxh + ux + l1x * ix,
                    axh + l2x * ix,
                    vyh + uy + l1y * iy,
                    ayh + l2y * iy,
                ]
            )

        def on_step(t, s):
            x, y = s[0], s[2]
            if y <= 0.0:
                raise GaitFailure("COM struck the ground during stance")
            if math.hypot(x - foot, y) <= r_crush:
                raise GaitFailure("leg compressed below the crush limit")
            if cfg.record_trajectory:
                self._sample(self._stance_row(t, s, foot, held, ref))

        def radius_guard(threshold):
            return lambda _t, s: threshold - math.hypot(s[0] - foot, s[2])

        def segment(t, s, guard):
            return integrate_until_event(
                t, s, f, guard, FALLING, integ, horizon, before_step=before_step, on_step=on_step
            )

        def release(s, u):
            # Velocity-source actuator lets go: its contribution becomes plain COM velocity.
            s = s.copy()
            s[1] += u[0]
            s[3] += u[1]
            return s

        horizon = max(4.0 * ref.t_stance, 1.0)
        eps_lo = self._draw(cfg.noise.liftoff_noise_fraction)
        lift = radius_guard(r0)
        s = np.array([touchdown.x, touchdown.vx, touchdown.y, touchdown.vy, 0.0, 0.0, 0.0, 0.0])
        t = t_td
        lifted = False
        residual = 0.0

        if t_perc > t_td:
            # Late end-of-flight signal: passive until it fires (or until liftoff).
            ev = segment(t, s, lambda tt, ss: min(t_perc - tt, lift(tt, ss)))
            t, s, residual = ev.time, ev.state, ev.residual
            lifted = lift(t, s) <= 0.0 and not (t_perc - t <= 0.0 and lift(t, s) > -integ.guard_tolerance)
            if lifted:
                log.debug("liftoff before the end-of-flight listener fired")

        if lifted:
            e2_td = e2_lo = math.hypot(*e2_at(t, s[0], s[2])[1:])
            liftoff = FlightState(float(s[0]), float(s[2]), float(s[1]), float(s[3]))
            return StanceResult(
                liftoff, t, liftoff, t, ref, foot, e2_td, e2_td, e2_lo, 0, False, eps_lo, residual
            )

        s[4:] = (perceived.x, perceived.vx, perceived.y, perceived.vy)
        engaged[0] = True
        e2_td = math.hypot(*e2_at(t, s[0], s[2])[1:])
        stats["e2_max"] = e2_td

        eos = radius_guard(r0 * (1.0 + eps_lo)) if eps_lo < 0.0 else lift
        ev = segment(t, s, eos)
        t, s = ev.time, ev.state
        u_end = tuple(held)
        perceived_lo = FlightState(float(s[0]), float(s[2]), float(s[1] + u_end[0]), float(s[3] + u_end[1]))
        t_perc_lo = t
        if eps_lo < 0.0:
            if cfg.record_trajectory:
                self._sample(self._stance_row(t, s, foot, held, ref), force=True)
            engaged[0] = False
            s = release(s, u_end)
            held[0] = held[1] = 0.0
            ev = segment(t, s, lift)
            t, s = ev.time, ev.state
        u_final = tuple(held)
        liftoff = FlightState(
            float(s[0]), float(s[2]), float(s[1] + u_final[0]), float(s[3] + u_final[1])
        )
        if cfg.record_trajectory:
            self._sample(self._stance_row(t, s, foot, held, ref), force=True)
        e2_lo = math.hypot(*e2_at(t, liftoff.x, liftoff.y)[1:])
        return StanceResult(
            liftoff=liftoff,
            liftoff_time=t,
            perceived_liftoff=perceived_lo,
            perceived_liftoff_time=t_perc_lo,
            reference=ref,
            foot_x=foot,
            e2_touchdown=e2_td,
            e2_max=max(stats["e2_max"], e2_lo),
            e2_liftoff=e2_lo,
            saturated_steps=stats["saturated"],
            reference_overrun=stats["overrun"],
            noise=eps_lo,
            guard_residual=ev.residual,
        )

    def _stance_row(self, t, s, foot, held, ref) -> tuple:
        p = self.config.params
        x, y = float(s[0]), float(s[2])
        vx, vy = float(s[1]) + held[0], float(s[3]) + held[1]
        dx = x - foot
        r = math.hypot(dx, y)
        theta = math.atan2(y, dx)
        rs = reference_output(ref, t, clamp=False)
        # Channels follow the plant output order: 1 is vertical, 2 horizontal.
        e21, e22 = rs.pos[1] - y, rs.pos[0] - x
        H = (
            0.5 * p.mass * (vx * vx + vy * vy)
            + p.mass * p.gravity * y
            + 0.5 * p.stiffness * (p.rest_length - r) ** 2
        )
        return (t, "stance", x, y, vx, vy, r, theta, held[1], held[0], e21, e22, H)

    # -- full gait ----------------------------------------------------------

    def run_gait(self, initial: FlightState, n_steps: int, t0: float = 0.0) -> GaitLog:
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        cfg = self.config
        p = cfg.params
        glog = GaitLog()
        self.samples = glog.samples
        self._tick = 0
        self._h0 = energy_ledger(
            HybridState(Phase.FLIGHT, initial, t0, cfg.servo.attack_angle), p
        ).hamiltonian
        state, t = initial, t0
        leg0: Optional[float] = None
        i = 0
        try:
            for i in range(n_steps):
                fr = self.run_flight(state, t, leg0)
                sr = self.run_stance(fr.touchdown, fr.touchdown_time, fr.perceived, fr.perceived_time, fr.leg_angle)
                energy = None
                if fr.apex is not None:
                    apex_state = FlightState(fr.apex.x, fr.apex.y, fr.apex.vx, 0.0)
                    e = energy_ledger(HybridState(Phase.FLIGHT, apex_state, fr.apex.time, fr.leg_angle), p)
                    energy = replace(e, nonconservative_work=e.hamiltonian - self._h0)
                glog.records.append(
                    StepRecord(
                        index=i,
                        apex=fr.apex,
                        touchdown=EventRecord(
                            fr.touchdown, fr.perceived, fr.touchdown_time, fr.perceived_time,
                            fr.noise, fr.guard_residual,
                        ),
                        liftoff=EventRecord(
                            sr.liftoff, sr.perceived_liftoff, sr.liftoff_time,
                            sr.perceived_liftoff_time, sr.noise, sr.guard_residual,
                        ),
                        reference=sr.reference,
                        foot_x=sr.foot_x,
                        leg_angle=fr.leg_angle,
                        e2_touchdown=sr.e2_touchdown,
                        e2_max=sr.e2_max,
                        e2_liftoff=sr.e2_liftoff,
                        energy_apex=energy,
                        saturated_steps=sr.saturated_steps,
                        reference_overrun=sr.reference_overrun,
                    )
                )
                if sr.saturated_steps:
                    log.debug("step %d: actuator saturated on %d steps", i, sr.saturated_steps)
                state, t = sr.liftoff, sr.liftoff_time
                leg0 = math.pi - fr.leg_angle
            glog.final_apex = self._next_apex(state, t)
        except GaitFailure as exc:
            glog.failure = exc.reason
            glog.failure_step = i
            log.info("gait failed at step %d: %s", i, exc.reason)
        except (TrajectoryError, ModelError, IntegrationError) as exc:
            # Planner or integrator refusing the state is a failed step, not a crash.
            glog.failure = f"{type(exc).__name__}: {exc}"
            glog.failure_step = i
            log.info("gait failed at step %d: %s", i, glog.failure)
        return glog

    def _next_apex(self, state: FlightState, t: float) -> Optional[ApexRecord]:
        self._phase_start = True
        if state.vy <= 0.0:
            if state.y < self.config.params.rest_length * math.sin(self._target_angle(state.vx)):
                raise GaitFailure("liftoff without upward velocity below touchdown height")
            return None
        ev = integrate_until_event(
            t,
            state.as_array(),
            _flight_field(self.config.params.gravity),
            lambda _t, s: s[3],
            FALLING,
            self.config.integrator,
            FLIGHT_HORIZON_S,
            on_step=(lambda tt, s: self._sample(self._flight_row(tt, s)))
            if self.config.record_trajectory
            else None,
        )
        y = ev.state
        self._sample(self._flight_row(ev.time, y), force=True)
        if y[1] <= self.config.params.rest_length * math.sin(self._target_angle(float(y[2]))):
            raise GaitFailure(f"apex height {float(y[1]):.6g} m below touchdown height")
        return ApexRecord(y=float(y[1]), vx=float(y[2]), time=ev.time, x=float(y[0]))


def run_gait(config: GaitConfig, initial: FlightState, n_steps: int) -> GaitLog:
    return GaitExecutor(config).run_gait(initial, n_steps)


def apex_state(y: float, vx: float, x: float = 0.0) -> FlightState:
    return FlightState(x, y, vx, 0.0)
