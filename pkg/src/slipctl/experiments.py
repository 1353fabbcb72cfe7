"""Apex return map, limit-cycle search, Jacobian stability test and noise sweeps.

The Poincare section is the flight apex; a section point is the pair
``(y, vx)``. One application of the map is one full gait cycle run from a
fresh apex state at ``x = 0, t = 0``, so the map is autonomous.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .model import FlightState
from .sim import GaitConfig, GaitExecutor, GaitFailure, NoiseConfig, apex_state

log = logging.getLogger(__name__)

Apex = tuple[float, float]
ApexMap = Callable[[Apex], Apex]


class ExperimentError(RuntimeError):
    pass


class NonConvergence(ExperimentError):
    pass


@dataclass(frozen=True)
class ReturnMapSample:
    before: Apex
    after: Apex


@dataclass
class LimitCycle:
    fixed_point: Apex
    history: list[Apex]
    iterations: int
    # Offset of the fixed-point apex from the commanded apex height.
    apex_bias: float


@dataclass
class JacobianResult:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    magnitudes: np.ndarray
    delta: float

    @property
    def stable(self) -> bool:
        return bool(np.all(self.magnitudes < 1.0))


@dataclass
class LevelStats:
    level: float
    runs: int
    successes: int
    max_e2_liftoff: float
    max_e2_touchdown: float
    worst_e2_ratio: float
    containment_violations: int
    max_apex_deviation: float
    reconverge_cycles: list[int] = field(default_factory=list)
    failure_reasons: dict[str, int] = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        return self.successes / self.runs if self.runs else 0.0

    def to_dict(self) -> dict:
        rc = self.reconverge_cycles
        return {
            "level": self.level,
            "runs": self.runs,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "max_e2_liftoff": self.max_e2_liftoff,
            "max_e2_touchdown": self.max_e2_touchdown,
            "worst_e2_ratio": self.worst_e2_ratio,
            "containment_violations": self.containment_violations,
            "max_apex_deviation": self.max_apex_deviation,
            "reconverge_cycles_mean": float(np.mean(rc)) if rc else None,
            "reconverge_cycles_max": max(rc) if rc else None,
            "failure_reasons": dict(sorted(self.failure_reasons.items())),
        }


@dataclass
class RobustnessReport:
    levels: list[float]
    seeds: list[int]
    n_steps: int
    reference_apex: Apex
    stats: list[LevelStats]

    def to_dict(self) -> dict:
        return {
            "levels": self.levels,
            "seeds": self.seeds,
            "n_steps": self.n_steps,
            "reference_apex": list(self.reference_apex),
            "per_level": [s.to_dict() for s in self.stats],
        }


def _quiet(config: GaitConfig) -> GaitConfig:
    noise = replace(config.noise, touchdown_noise_fraction=0.0, liftoff_noise_fraction=0.0)
    return replace(config, noise=noise, record_trajectory=False)


def apex_return_map(config: GaitConfig) -> ApexMap:
    """One-cycle apex map of ``config`` with event noise switched off."""
    quiet = _quiet(config)

    def step(apex: Apex) -> Apex:
        glog = GaitExecutor(quiet).run_gait(apex_state(apex[0], apex[1]), 1)
        if glog.failure is not None:
            raise GaitFailure(glog.failure, 0)
        nxt = glog.final_apex
        if nxt is None:
            raise GaitFailure("no apex after liftoff", 0)
        return (nxt.y, nxt.vx)

    return step


def return_map_sample(config: GaitConfig, apex: Apex) -> ReturnMapSample:
    return ReturnMapSample(tuple(apex), apex_return_map(config)(apex))


def find_limit_cycle(
    config: GaitConfig,
    start: Optional[Apex] = None,
    tol: float = 1e-8,
    max_cycles: int = 200,
    step_fn: Optional[ApexMap] = None,
) -> LimitCycle:
    """Iterate the apex map until successive apexes agree to ``tol`` (sup-norm)."""
    step = step_fn or apex_return_map(config)
    cmd = config.command
    cur = tuple(start) if start is not None else (cmd.apex_des, cmd.v_des)
    history = [cur]
    for i in range(1, max_cycles + 1):
        nxt = step(cur)
        history.append(nxt)
        if max(abs(nxt[0] - cur[0]), abs(nxt[1] - cur[1])) < tol:
            bias = nxt[0] - cmd.apex_des
            log.info("limit cycle after %d cycles: apex %r, bias %.3e m", i, nxt, bias)
            return LimitCycle(nxt, history, i, bias)
        cur = nxt
    raise NonConvergence(f"apex map did not settle to {tol} within {max_cycles} cycles")


def return_map_jacobian(
    fixed_point: Apex,
    config: Optional[GaitConfig] = None,
    delta: float = 1e-5,
    step_fn: Optional[ApexMap] = None,
) -> JacobianResult:
    """Central-difference Jacobian of the apex map at ``fixed_point``.

    Column ``j`` is ``(P(z + delta e_j) - P(z - delta e_j)) / (2 delta)``.
    """
    if not delta > 0.0:
        raise ValueError(f"delta must be > 0, got {delta!r}")
    if step_fn is None:
        if config is None:
            raise ValueError("need a config or a map")
        step_fn = apex_return_map(config)
    z = np.asarray(fixed_point, dtype=float)
    J = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = delta
        plus = np.asarray(step_fn(tuple(z + e)), dtype=float)
        minus = np.asarray(step_fn(tuple(z - e)), dtype=float)
        J[:, j] = (plus - minus) / (2.0 * delta)
    eig = np.linalg.eigvals(J)
    return JacobianResult(J, eig, np.abs(eig), delta)


def _reconverge(step: ApexMap, apex: Apex, target: Apex, tol: float, budget: int) -> Optional[int]:
    cur = apex
    for n in range(budget + 1):
        if max(abs(cur[0] - target[0]), abs(cur[1] - target[1])) < tol:
            return n
        if n == budget:
            break
        try:
            cur = step(cur)
        except GaitFailure:
            return None
    return None


def robustness_sweep(
    levels: Sequence[float],
    n_seeds: int,
    n_steps: int,
    config: GaitConfig,
    initial: Optional[FlightState] = None,
    seeds: Optional[Sequence[int]] = None,
    reconverge_tol: float = 1e-4,
    reconverge_budget: int = 30,
) -> RobustnessReport:
    """Run every ``(level, seed)`` cell with touchdown-threshold noise.

    Per cell the sweep records success, the liftoff and touchdown tracking
    errors of every stance, the largest apex excursion from the noise-free
    limit cycle, and how many noise-free cycles the final apex needs to come
    back within ``reconverge_tol`` of it.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    levels = sorted(float(v) for v in levels)
    if any(not 0.0 <= v <= 0.5 for v in levels):
        raise ValueError(f"noise levels must lie in [0, 0.5], got {levels}")
    seed_list = list(seeds) if seeds is not None else list(range(n_seeds))
    if len(seed_list) != n_seeds:
        raise ValueError("len(seeds) must equal n_seeds")

    cycle = find_limit_cycle(config)
    target = cycle.fixed_point
    step = apex_return_map(config)
    start = initial or apex_state(target[0], target[1])

    out = []
    for level in levels:
        st = LevelStats(level, 0, 0, 0.0, 0.0, 0.0, 0, 0.0)
        for seed in seed_list:
            noise = NoiseConfig(level, config.noise.liftoff_noise_fraction, seed, config.noise.distribution)
            cell = replace(config, noise=noise, record_trajectory=False)
            glog = GaitExecutor(cell).run_gait(start, n_steps)
            st.runs += 1
            for r in glog.records:
                st.max_e2_liftoff = max(st.max_e2_liftoff, r.e2_liftoff)
                st.max_e2_touchdown = max(st.max_e2_touchdown, r.e2_touchdown)
                if r.e2_touchdown > 0.0:
                    st.worst_e2_ratio = max(st.worst_e2_ratio, r.e2_liftoff / r.e2_touchdown)
                if not r.e2_liftoff < r.e2_touchdown:
                    st.containment_violations += 1
            for a in glog.apexes:
                dev = max(abs(a.y - target[0]), abs(a.vx - target[1]))
                st.max_apex_deviation = max(st.max_apex_deviation, dev)
            if glog.failure is not None:
                st.failure_reasons[glog.failure] = st.failure_reasons.get(glog.failure, 0) + 1
                continue
            st.successes += 1
            fa = glog.final_apex
            n = _reconverge(step, (fa.y, fa.vx), target, reconverge_tol, reconverge_budget)
            if n is not None:
                st.reconverge_cycles.append(n)
        out.append(st)
    return RobustnessReport(levels, seed_list, n_steps, target, out)


def passive_config(config: GaitConfig) -> GaitConfig:
    """Same plant with the damper removed and the stance controller switched off."""
    return replace(
        config,
        params=replace(config.params, damping=0.0),
        controller=replace(config.controller, enabled=False),
        noise=NoiseConfig(0.0, 0.0, config.noise.seed),
    )


def passive_fixed_point(
    config: GaitConfig,
    apex_y: float,
    vx_bounds: tuple[float, float] = (0.2, 8.0),
    samples: int = 60,
) -> Apex:
    """Forward speed at which the undamped, uncontrolled gait repeats its apex.

    Energy is conserved, so equal apex heights on consecutive apexes mean a
    periodic orbit. The root is bracketed on a speed grid, then refined.
    """
    step = apex_return_map(passive_config(config))

    def gap(vx: float) -> float:
        try:
            y_next, vx_next = step((apex_y, vx))
        except GaitFailure:
            return math.nan
        # A stance that sends the body backwards repeats the height but is not a gait.
        return y_next - apex_y if vx_next > 0.0 else math.nan

    grid = np.linspace(vx_bounds[0], vx_bounds[1], samples)
    vals = [gap(float(v)) for v in grid]
    for (a, ga), (b, gb) in zip(zip(grid, vals), zip(grid[1:], vals[1:])):
        if math.isfinite(ga) and math.isfinite(gb) and ga * gb < 0.0:
            vx = brentq(gap, float(a), float(b), xtol=1e-13, rtol=1e-14)
            return (apex_y, vx)
    raise NonConvergence(f"no periodic passive gait at apex {apex_y} in vx {vx_bounds}")
