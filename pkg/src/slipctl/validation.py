"""Quick invariant checks run by ``slipctl validate`` against a user config."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig
from .control import assemble_error_dynamics, build_plant, observer_gains, tracking_gains
from .integrator import FALLING, integrate_until_event
from .model import FlightState
from .reference import build_reference, reference_output
from .experiments import passive_config
from .sim import GaitExecutor, NoiseConfig, run_gait


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _gain_algebra(cfg: RunConfig, rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    plant = build_plant()
    for _ in range(200):
        e1, e2 = -rng.uniform(0.5, 50.0, size=2)
        g = tracking_gains(e1, e2)
        got = np.sort(np.linalg.eigvals(-g.CK).real)
        worst = max(worst, float(np.max(np.abs(got - np.sort([e1, e2])))))
    for _ in range(50):
        poles = -rng.uniform(1.0, 200.0, size=4)
        Ke = observer_gains(plant, poles)
        got = np.sort(np.linalg.eigvals(plant.A - Ke @ plant.C).real)
        worst = max(worst, float(np.max(np.abs(got - np.sort(poles)))))
    ctl = cfg.gait.controller
    assemble_error_dynamics(plant, tracking_gains(ctl.eta1, ctl.eta2), observer_gains(plant, ctl.observer_poles))
    return CheckResult("gain-algebra", worst < 1e-9, f"worst pole error {worst:.3g}")


def _reference(cfg: RunConfig) -> CheckResult:
    g = cfg.gait
    p, cmd = g.params, g.command
    c, s = math.cos(cmd.attack_angle), math.sin(cmd.attack_angle)
    td = FlightState(p.rest_length * c, p.rest_length * s, cmd.v_des, -1.0)
    ref = build_reference(cmd, td, 0.0, p, 0.0)
    res = max(abs(ref.height(x) - y) for x, y in ref.waypoints)
    energy = abs(0.5 * p.stiffness * ref.delta_y_min**2 - p.mass * p.gravity * ref.delta_h_apex)
    energy /= p.mass * p.gravity * ref.delta_h_apex
    vx = max(abs(reference_output(ref, t).vel[0] - cmd.v_des) for t in np.linspace(0, ref.t_stance, 11))
    ok = res < 1e-12 and energy < 1e-12 and vx == 0.0
    return CheckResult("reference", ok, f"waypoint residual {res:.3g}, energy identity {energy:.3g}")


def _events(cfg: RunConfig) -> CheckResult:
    g = cfg.gait
    y0, vy0, yt = 0.5, 0.3, 0.2
    grav = g.params.gravity
    ev = integrate_until_event(
        0.0,
        np.array([0.0, y0, 1.0, vy0]),
        lambda _t, s: np.array([s[2], s[3], 0.0, -grav]),
        lambda _t, s: s[1] - yt,
        FALLING,
        g.integrator,
        10.0,
    )
    t_exact = (vy0 + math.sqrt(vy0 * vy0 + 2.0 * grav * (y0 - yt))) / grav
    dt = abs(ev.time - t_exact)
    return CheckResult("event-accuracy", ev.residual < 1e-9 and dt < 1e-9, f"residual {ev.residual:.3g}, dt {dt:.3g}")


def _energy(cfg: RunConfig) -> CheckResult:
    pc = replace(passive_config(cfg.gait), record_trajectory=True, output_decimation=50)
    glog = GaitExecutor(pc).run_gait(cfg.initial, 2)
    H = np.array([row[12] for row in glog.samples])
    drift = float(np.max(np.abs(H - H[0])) / abs(H[0]))
    return CheckResult("passive-energy", drift < 1e-6, f"relative drift {drift:.3g} over {len(glog.records)} hops")


def _repeatability(cfg: RunConfig) -> CheckResult:
    quiet = replace(cfg.gait, noise=NoiseConfig(0.0, 0.0, cfg.seed), record_trajectory=False)
    glog = run_gait(quiet, cfg.initial, 12)
    if glog.failure:
        return CheckResult("repeatability", False, glog.failure)
    ap = glog.apexes
    d = max(max(abs(a.y - b.y), abs(a.vx - b.vx)) for a, b in zip(ap[9:], ap[10:]))
    return CheckResult("repeatability", d < 1e-4, f"apex change from cycle 10: {d:.3g}")


def _containment(cfg: RunConfig) -> CheckResult:
    worst, fails = 0.0, 0
    for k in range(3):
        noisy = replace(cfg.gait, noise=NoiseConfig(0.1, 0.0, cfg.seed + k), record_trajectory=False)
        glog = run_gait(noisy, cfg.initial, 4)
        fails += glog.failure is not None
        for r in glog.records:
            worst = max(worst, r.e2_liftoff / r.e2_touchdown if r.e2_touchdown > 0 else 0.0)
    return CheckResult("noise-containment", fails == 0 and worst < 1.0, f"worst ratio {worst:.3g}, failures {fails}")


def _determinism(cfg: RunConfig) -> CheckResult:
    g = replace(cfg.gait, record_trajectory=True, output_decimation=25)
    a = GaitExecutor(g).run_gait(cfg.initial, 2).samples
    b = GaitExecutor(g).run_gait(cfg.initial, 2).samples
    return CheckResult("determinism", a == b, f"{len(a)} samples compared")


def run_checks(cfg: RunConfig) -> list[CheckResult]:
    rng = np.random.default_rng(cfg.seed)
    checks = [
        lambda: _gain_algebra(cfg, rng),
        lambda: _reference(cfg),
        lambda: _events(cfg),
        lambda: _energy(cfg),
        lambda: _repeatability(cfg),
        lambda: _containment(cfg),
        lambda: _determinism(cfg),
    ]
    out = []
    for i, chk in enumerate(checks):
        try:
            out.append(chk())
        except Exception as exc:  # a crashing check is a failed check
            out.append(CheckResult(f"check-{i}", False, f"{type(exc).__name__}: {exc}"))
    return out
