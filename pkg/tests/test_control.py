import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from slipctl.control import (
    ControlDesignError,
    assemble_error_dynamics,
    build_plant,
    control_law,
    make_observer,
    observability_rank,
    observer_derivative,
    observer_gains,
    observer_update,
    spectra_union,
    tracking_gains,
)
from slipctl.integrator import step_rk4

neg = st.floats(-60.0, -0.1)


def test_plant_structure():
    pl = build_plant()
    np.testing.assert_array_equal(pl.C @ pl.B, np.eye(2))
    np.testing.assert_array_equal(pl.A @ [0, 1, 0, 0], [1, 0, 0, 0])
    np.testing.assert_array_equal(pl.C, [[1, 0, 0, 0], [0, 0, 1, 0]])
    # [C; CA] is square here, so a nonzero determinant is rank 4.
    assert abs(np.linalg.det(np.vstack([pl.C, pl.C @ pl.A]))) == pytest.approx(1.0)
    assert observability_rank(pl.A, pl.C) == 4


def test_unobservable_pair_detected():
    pl = build_plant()
    C_vel = np.array([[0.0, 1, 0, 0], [0, 0, 0, 1]])
    assert observability_rank(pl.A, C_vel) < 4


def test_gains_unit_poles():
    g = tracking_gains(-1.0, -1.0)
    np.testing.assert_allclose(g.K[0], [1, 0], atol=1e-15)
    np.testing.assert_allclose(g.K[2], [1, 1], atol=1e-15)
    np.testing.assert_allclose(-g.CK, [[-1, 0], [-1, -1]], atol=1e-15)


def test_gains_two_three():
    g = tracking_gains(-2.0, -3.0)
    np.testing.assert_allclose(g.K[0], [4, -2], atol=1e-15)
    np.testing.assert_allclose(-g.CK, [[-4, 2], [-1, -1]], atol=1e-15)
    np.testing.assert_allclose(np.poly(-g.CK), [1, 5, 6], atol=1e-12)


@settings(max_examples=300)
@given(neg, neg)
def test_gain_structure_and_spectrum(e1, e2):
    g = tracking_gains(e1, e2)
    np.testing.assert_array_equal(g.K[1], [0, 0])
    np.testing.assert_array_equal(g.K[3], [0, 0])
    np.testing.assert_array_equal(g.K[2], [1, 1])
    # char poly of -CK is lambda^2 - (e1+e2) lambda + e1 e2
    np.testing.assert_allclose(np.poly(-g.CK), [1, -(e1 + e2), e1 * e2], rtol=1e-12, atol=1e-9)


def test_default_gains_are_triangular():
    g = tracking_gains(-30.0, -1.0)
    assert g.CK[0, 1] == 0.0
    np.testing.assert_allclose(np.diag(-g.CK), [-30.0, -1.0])


@pytest.mark.parametrize("e1,e2", [(0.0, -1.0), (-1.0, 0.5), (1.0, 1.0)])
def test_gains_reject_nonnegative(e1, e2):
    with pytest.raises(ControlDesignError):
        tracking_gains(e1, e2)


def test_observer_gain_examples():
    pl = build_plant()
    Ke = observer_gains(pl, (-5, -5, -1, -2))
    np.testing.assert_allclose(Ke[:2, 0], [10, 25])
    np.testing.assert_allclose(Ke[2:, 1], [3, 2])
    assert Ke[2, 0] == Ke[3, 0] == Ke[0, 1] == Ke[1, 1] == 0.0


def test_observer_random_poles():
    pl = build_plant()
    rng = np.random.default_rng(11)
    for _ in range(100):
        poles = -rng.uniform(0.5, 200.0, size=4)
        Ke = observer_gains(pl, poles)
        got = np.sort(np.linalg.eigvals(pl.A - Ke @ pl.C).real)
        np.testing.assert_allclose(got, np.sort(poles), atol=1e-9)


@pytest.mark.parametrize("poles", [(-1, -1, -1), (-1, -1, -1, 0.0), (-1, -1, -1, float("nan"))])
def test_observer_rejects_bad_poles(poles):
    with pytest.raises(ControlDesignError):
        observer_gains(build_plant(), poles)


def test_observer_error_decays_like_matrix_exponential():
    pl = build_plant()
    obs = make_observer(pl, (-10, -10, -10, -10), [0.05, -0.2, 0.03, 0.1])
    z = np.zeros(4)
    F = pl.A - obs.K_e @ pl.C
    e0 = z - obs.x_hat
    h = 1e-3
    for n in range(1, 1501):
        obs = observer_update(obs, pl, np.zeros(2), pl.C @ z, None, h)
        if n % 250 == 0:
            np.testing.assert_allclose(z - obs.x_hat, expm(F * n * h) @ e0, atol=1e-10)
    assert np.linalg.norm(z - obs.x_hat) < 1e-3 * np.linalg.norm(e0)


def test_observer_constant_offset_steady_state():
    pl = build_plant()
    obs = make_observer(pl, (-8, -9, -10, -11), np.zeros(4))
    delta = np.array([0.01, -0.02])
    for _ in range(4000):
        obs = observer_update(obs, pl, np.zeros(2), delta, None, 1e-3)
    F = pl.A - obs.K_e @ pl.C
    xss = -np.linalg.solve(F, obs.K_e @ delta)
    np.testing.assert_allclose(obs.x_hat, xss, atol=1e-12)
    np.testing.assert_allclose(xss, [0.01, 0, -0.02, 0], atol=1e-15)


def test_observer_at_truth_follows_plant():
    # Plant and observer integrated jointly, as the stance simulator does.
    pl = build_plant()
    Ke = observer_gains(pl, (-50,) * 4)
    g = np.array([0.0, -9.81, 0.0, 0.0])
    u = np.array([0.1, -0.2])

    def f(_t, w):
        z, xh = w[:4], w[4:]
        dz = pl.A @ z + pl.B @ u + g
        return np.concatenate([dz, observer_derivative(xh, pl, Ke, u, pl.C @ z, lambda _x: g)])

    z0 = np.array([0.3, 0.0, 0.0, 1.0])
    w = np.concatenate([z0, z0])
    for _ in range(200):
        w = step_rk4(w, f, 1e-3)
        assert np.max(np.abs(w[4:] - w[:4])) < 1e-14


def test_observer_update_with_held_measurement_converges():
    pl = build_plant()
    z = np.array([0.3, 0.0, 0.1, 0.0])
    obs = make_observer(pl, (-50,) * 4, z + [0.01, 0.0, -0.01, 0.0])
    for _ in range(1000):
        obs = observer_update(obs, pl, np.zeros(2), pl.C @ z, None, 1e-3)
    np.testing.assert_allclose(obs.x_hat, z, atol=1e-9)


def test_observer_update_validates_inputs():
    pl = build_plant()
    obs = make_observer(pl, (-5,) * 4, np.zeros(4))
    with pytest.raises(ValueError):
        observer_update(obs, pl, np.zeros(2), np.zeros(2), None, 0.0)
    with pytest.raises(ValueError):
        observer_update(obs, pl, np.zeros(2), [np.nan, 0.0], None, 1e-3)


def test_observer_derivative_innovation_zero_at_truth():
    pl = build_plant()
    Ke = observer_gains(pl, (-5,) * 4)
    x = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(observer_derivative(x, pl, Ke, np.zeros(2), pl.C @ x), pl.A @ x)


def test_control_law_examples():
    pl = build_plant()
    g = tracking_gains(-1.0, -1.0)
    zero = np.zeros(2)
    np.testing.assert_array_equal(control_law(pl, g, np.zeros(4), zero, zero, zero), zero)
    u = control_law(pl, g, np.zeros(4), np.array([1.0, 0.0]), zero, zero)
    np.testing.assert_allclose(u, [1.0, 1.0])


@pytest.mark.parametrize("etas", [(-30.0, -1.0), (-2.0, -3.0), (-5.0, -5.0)])
def test_cancellation_gives_designed_error_dynamics(etas):
    # Exact state feedback in continuous time: e2' = -CK e2 regardless of drift.
    pl = build_plant()
    g = tracking_gains(*etas)
    grav = np.array([0.0, -9.81, 0.0, 0.0])

    def yd(t):
        return np.array([0.2 + 0.05 * np.sin(3 * t), 1.1 * t])

    def yd_dot(t):
        return np.array([0.15 * np.cos(3 * t), 1.1])

    def f(t, z):
        u = control_law(pl, g, z, yd(t), yd_dot(t), pl.C @ z)
        return pl.A @ z + pl.B @ u + grav

    z = np.array([0.25, 0.0, -0.03, 1.0])
    e0 = yd(0.0) - pl.C @ z
    h, t = 1e-3, 0.0
    for _ in range(500):
        z = step_rk4(z, f, h, t)
        t += h
    np.testing.assert_allclose(yd(t) - pl.C @ z, expm(-g.CK * t) @ e0, atol=1e-10)


def test_error_dynamics_unit_example():
    pl = build_plant()
    g = tracking_gains(-1.0, -1.0)
    Ke = observer_gains(pl, (-10,) * 4)
    E, eig = assemble_error_dynamics(pl, g, Ke)
    assert E.shape == (6, 6)
    want = np.poly([-10, -10, -10, -10, -1, -1])
    np.testing.assert_allclose(np.poly(E), want, rtol=1e-12, atol=1e-9)
    assert np.max(eig.real) < 0.0


def test_error_dynamics_blocks():
    pl = build_plant()
    g = tracking_gains(-4.0, -7.0)
    Ke = observer_gains(pl, (-20, -25, -30, -35))
    E, eig = assemble_error_dynamics(pl, g, Ke)
    np.testing.assert_array_equal(E[:4, 4:], np.zeros((4, 2)))
    np.testing.assert_array_equal(E[4:, :4], -pl.C @ pl.A)
    np.testing.assert_allclose(np.sort(eig.real), np.sort(spectra_union(pl, g, Ke).real), atol=1e-9)
    np.testing.assert_allclose(np.sort(eig.real), [-35, -30, -25, -20, -7, -4], atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(neg, neg, st.lists(st.floats(-150, -1), min_size=4, max_size=4))
def test_separation_error_decays(e1, e2, poles):
    pl = build_plant()
    E, eig = assemble_error_dynamics(pl, tracking_gains(e1, e2), observer_gains(pl, poles))
    assert np.max(eig.real) < 0.0
    slowest = min(abs(e1), abs(e2), *map(abs, poles))
    x0 = np.ones(6)
    x_end = expm(E * (40.0 / slowest)) @ x0
    assert np.linalg.norm(x_end) < 1e-6 * np.linalg.norm(x0) * max(1.0, np.linalg.norm(E)) ** 3
