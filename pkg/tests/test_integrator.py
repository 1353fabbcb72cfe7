import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipctl.integrator import (
    EITHER,
    FALLING,
    RISING,
    EventTimeout,
    IntegrationError,
    IntegratorConfig,
    integrate_until_event,
    step_rk4,
)

G = 9.81


def ballistic(_t, y):
    return np.array([y[2], y[3], 0.0, -G])


def test_config_defaults_and_invariants():
    c = IntegratorConfig()
    assert (c.step_size, c.event_tolerance, c.max_bisection_iters) == (1e-4, 1e-9, 60)
    with pytest.raises(ValueError):
        IntegratorConfig(step_size=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(event_tolerance=1e-3)
    with pytest.raises(ValueError, match="max_bisection_iters"):
        IntegratorConfig(max_bisection_iters=10)


def test_zero_field_leaves_state_unchanged():
    y = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(step_rk4(y, lambda t, s: np.zeros_like(s), 0.1), y)


def test_linear_decay_matches_rk4_polynomial():
    z = -0.1
    expected = 1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24
    got = step_rk4(np.array([1.0]), lambda t, s: -s, 0.1)[0]
    assert got == pytest.approx(expected, abs=1e-15)
    assert got == pytest.approx(0.9048375, abs=1e-7)


def test_non_finite_step_raises():
    with pytest.raises(IntegrationError):
        step_rk4(np.array([1.0]), lambda t, s: np.array([np.inf]), 0.1)


def _oscillator_error(h: float, T: float = 1.0) -> float:
    y = np.array([1.0, 0.0])
    f = lambda _t, s: np.array([s[1], -s[0]])
    for _ in range(int(round(T / h))):
        y = step_rk4(y, f, h)
    return float(np.max(np.abs(y - [math.cos(T), -math.sin(T)])))


@pytest.mark.parametrize("h", [0.1, 0.05, 0.025])
def test_halving_step_cuts_error_at_least_8x(h):
    assert _oscillator_error(h) / _oscillator_error(h / 2) >= 8.0


def test_ballistic_parabola_is_exact_for_rk4():
    # Cubic-free polynomial solution: RK4 reproduces it to rounding.
    y = np.array([0.0, 1.0, 1.5, 2.0])
    t = 0.0
    for _ in range(1000):
        y = step_rk4(y, ballistic, 1e-3, t)
        t += 1e-3
    np.testing.assert_allclose(y, [1.5, 1.0 + 2.0 - 0.5 * G, 1.5, 2.0 - G], atol=1e-12)


def test_linear_guard_crossing():
    cfg = IntegratorConfig()
    ev = integrate_until_event(
        0.0, np.array([0.0]), lambda t, s: np.zeros(1), lambda t, s: 1.0 - t, FALLING, cfg, 5.0
    )
    assert abs(ev.time - 1.0) <= cfg.event_tolerance
    assert ev.bracket <= cfg.event_tolerance


def test_ballistic_drop_time():
    cfg = IntegratorConfig()
    ev = integrate_until_event(
        0.0, np.array([0.0, 1.0, 0.0, 0.0]), ballistic, lambda t, s: s[1] - 0.5, FALLING, cfg, 5.0
    )
    assert ev.time == pytest.approx(math.sqrt(2 * 0.5 / G), abs=1e-9)
    assert ev.time == pytest.approx(0.319275, abs=1e-6)
    assert ev.residual < 1e-9
    assert ev.state[1] - 0.5 <= 0.0


@settings(max_examples=30, deadline=None)
@given(
    y0=st.floats(0.3, 2.0),
    vy0=st.floats(-2.0, 3.0),
    frac=st.floats(0.05, 0.95),
)
def test_touchdown_time_matches_quadratic_formula(y0, vy0, frac):
    yt = frac * y0
    cfg = IntegratorConfig()
    ev = integrate_until_event(
        0.0, np.array([0.0, y0, 1.0, vy0]), ballistic, lambda t, s: s[1] - yt, FALLING, cfg, 10.0
    )
    t_exact = (vy0 + math.sqrt(vy0 * vy0 + 2 * G * (y0 - yt))) / G
    assert abs(ev.time - t_exact) < 1e-9
    assert ev.residual < 1e-9


def test_wrong_direction_crossing_is_ignored():
    # Launched upward from below the threshold: the rising crossing is skipped,
    # the event is the later falling one.
    cfg = IntegratorConfig()
    y0, vy0, yt = 0.1, 3.0, 0.2
    ev = integrate_until_event(
        0.0, np.array([0.0, y0, 0.0, vy0]), ballistic, lambda t, s: s[1] - yt, FALLING, cfg, 5.0
    )
    t_fall = (vy0 + math.sqrt(vy0**2 - 2 * G * (yt - y0))) / G
    assert ev.time == pytest.approx(t_fall, abs=1e-9)


@pytest.mark.parametrize("direction", [RISING, EITHER])
def test_rising_and_either_directions(direction):
    cfg = IntegratorConfig()
    ev = integrate_until_event(
        0.0, np.array([0.0]), lambda t, s: np.zeros(1), lambda t, s: t - 0.25, direction, cfg, 1.0
    )
    assert ev.time == pytest.approx(0.25, abs=1e-9)


def test_timeout():
    with pytest.raises(EventTimeout):
        integrate_until_event(
            0.0, np.array([1.0]), lambda t, s: np.zeros(1), lambda t, s: 1.0, FALLING, IntegratorConfig(), 0.01
        )


def test_bisection_residual_monotone():
    cfg = IntegratorConfig(step_size=1e-2)
    ev = integrate_until_event(
        0.0, np.array([0.0, 1.0, 0.0, 0.0]), ballistic, lambda t, s: s[1] - 0.5, FALLING, cfg, 5.0
    )
    h = ev.residual_history
    assert len(h) > 1
    assert all(b <= a for a, b in zip(h, h[1:]))
    assert ev.bracket <= cfg.event_tolerance


def test_hooks_see_every_grid_point_and_are_deterministic():
    seen = []
    cfg = IntegratorConfig(step_size=1e-3)
    run = lambda: integrate_until_event(
        0.0, np.array([0.0, 1.0, 0.0, 0.0]), ballistic, lambda t, s: s[1] - 0.5, FALLING, cfg, 5.0,
        on_step=lambda t, s: seen.append(t),
    )
    a = run()
    n = len(seen)
    b = run()
    assert n == a.steps
    assert seen[:n] == seen[n:]
    np.testing.assert_array_equal(a.state, b.state)
    assert a.time == b.time
