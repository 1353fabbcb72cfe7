"""Fixed-step RK4 with bisection-based event localization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Derivative = Callable[[float, np.ndarray], np.ndarray]
Guard = Callable[[float, np.ndarray], float]

FALLING = -1
RISING = 1
EITHER = 0


class IntegrationError(RuntimeError):
    pass


class EventTimeout(IntegrationError):
    """No event before the configured horizon."""


@dataclass(frozen=True)
class IntegratorConfig:
    step_size: float = 1e-4
    event_tolerance: float = 1e-9
    max_bisection_iters: int = 60
    # Bisection keeps going past event_tolerance until the guard residual is this small.
    guard_tolerance: float = 1e-12

    def __post_init__(self) -> None:
        h = self.step_size
        if not (math.isfinite(h) and h > 0.0):
            raise ValueError(f"step_size must be > 0, got {h!r}")
        if not (0.0 < self.event_tolerance < h):
            raise ValueError("event_tolerance must lie in (0, step_size)")
        needed = math.ceil(math.log2(h / self.event_tolerance))
        if self.max_bisection_iters < needed:
            raise ValueError(
                f"max_bisection_iters={self.max_bisection_iters} cannot reach "
                f"event_tolerance; need at least {needed}"
            )
        if not self.guard_tolerance >= 0.0:
            raise ValueError("guard_tolerance must be >= 0")


@dataclass
class EventResult:
    time: float
    state: np.ndarray
    residual: float
    steps: int
    bracket: float
    residual_history: list[float] = field(default_factory=list)


def step_rk4(y: np.ndarray, f: Derivative, h: float, t: float = 0.0) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of size ``h`` from ``(t, y)``."""
    half = 0.5 * h
    k1 = f(t, y)
    k2 = f(t + half, y + half * k1)
    k3 = f(t + half, y + half * k2)
    k4 = f(t + h, y + h * k3)
    y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    # A NaN or inf anywhere poisons the sum; cheaper than an elementwise check.
    if not math.isfinite(float(y_new.sum())):
        raise IntegrationError(f"non-finite state after RK4 step at t={t!r}")
    return y_new


def _crossed(g_before: float, g_after: float, direction: int) -> bool:
    if direction == FALLING:
        return g_before > 0.0 and g_after <= 0.0
    if direction == RISING:
        return g_before < 0.0 and g_after >= 0.0
    return (g_before > 0.0 and g_after <= 0.0) or (g_before < 0.0 and g_after >= 0.0)


def integrate_until_event(
    t0: float,
    y0: np.ndarray,
    f: Derivative,
    guard: Guard,
    direction: int,
    config: IntegratorConfig,
    horizon: float,
    before_step: Optional[Callable[[float, np.ndarray], None]] = None,
    on_step: Optional[Callable[[float, np.ndarray], None]] = None,
) -> EventResult:
    """Step with RK4 until ``guard`` crosses zero in ``direction``.

    ``before_step(t, y)`` runs once at the start of every step; it is the hook
    for zero-order-hold inputs, which then stay fixed for that step and for
    every bisection sub-step taken from its start. ``on_step(t, y)`` sees each
    accepted grid point (including the initial one) and may raise to abort.

    The returned state lies on the post-crossing side of the guard.
    """
    h = config.step_size
    y = np.asarray(y0, dtype=float)
    t = t0
    g = guard(t, y)
    if on_step is not None:
        on_step(t, y)
    n = 0
    max_steps = int(math.ceil(horizon / h))
    while n < max_steps:
        if before_step is not None:
            before_step(t, y)
        y_next = step_rk4(y, f, h, t)
        t_next = t0 + (n + 1) * h
        g_next = guard(t_next, y_next)
        if _crossed(g, g_next, direction):
            return _bisect(t, y, g, y_next, g_next, f, guard, direction, config, n + 1)
        n += 1
        t, y, g = t_next, y_next, g_next
        if on_step is not None:
            on_step(t, y)
    raise EventTimeout(f"no guard crossing within {horizon} s of t={t0}")


def _bisect(t, y, g, y_hi, g_hi, f, guard, direction, config, steps) -> EventResult:
    h = config.step_size
    lo, hi = 0.0, h
    g_lo = g
    history = [abs(g_hi)]
    for _ in range(config.max_bisection_iters):
        if hi - lo <= config.event_tolerance and abs(g_hi) <= config.guard_tolerance:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        y_mid = step_rk4(y, f, mid, t)
        g_mid = guard(t + mid, y_mid)
        if _crossed(g_lo, g_mid, direction):
            hi, y_hi, g_hi = mid, y_mid, g_mid
            history.append(abs(g_hi))
        else:
            lo, g_lo = mid, g_mid
    return EventResult(
        time=t + hi,
        state=y_hi,
        residual=abs(g_hi),
        steps=steps,
        bracket=hi - lo,
        residual_history=history,
    )
