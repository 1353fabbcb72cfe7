"""Output-tracking controller with feedback cancellation and a Luenberger observer.

State ordering is ``z = (y, ydot, x, xdot)``: the vertical channel comes first
and the measured output is ``C z = (y, x)``. With the gain structure below,
``-C K`` is triangular when ``eta2 = -1``; the first output channel then decays
at ``|eta1|`` on its own while the second decays at unit rate. Putting height
first means the fast channel is the one that decides when the leg lifts off.

The stance actuator is modelled as a velocity source: the two inputs add
directly to the position rates, so ``B`` selects rows 0 and 2 and ``C B = I``.
Spring, damper and gravity enter the velocity rows through a known drift
``d(z)``; because ``C d = 0`` the drift reaches the output error only through
the state, which the observer reconstructs using the same drift model.

The textbook law reads ``u = (CB)^-1 (ydot_d - C A xhat + K e2)`` with a 4x2
``K``. ``K e2`` is then a 4-vector, so what is implemented is the projected
gain ``C K``; that is also the only form whose closed-loop output error obeys
``e2' = -C K e2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .integrator import step_rk4

Drift = Callable[[np.ndarray], np.ndarray]


class ControlDesignError(ValueError):
    pass


@dataclass(frozen=True)
class LinearPlant:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


@dataclass(frozen=True)
class TrackingGains:
    eta1: float
    eta2: float
    K: np.ndarray
    CK: np.ndarray


@dataclass(frozen=True)
class ObserverState:
    x_hat: np.ndarray
    K_e: np.ndarray
    poles: tuple[float, float, float, float]


@dataclass(frozen=True)
class TrackingError:
    e1: np.ndarray
    e2: np.ndarray


def observability_rank(A: np.ndarray, C: np.ndarray) -> int:
    n = A.shape[0]
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return int(np.linalg.matrix_rank(np.vstack(blocks)))


def build_plant(p=None) -> LinearPlant:
    """Linear abstraction of the stance plant; independent of the physical parameters."""
    A = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )
    B = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    C = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    if abs(np.linalg.det(C @ B)) < 1e-12:
        raise ControlDesignError("C B is singular")
    if observability_rank(A, C) != 4:
        raise ControlDesignError("(A, C) is not observable")
    return LinearPlant(A, B, C)


def tracking_gains(eta1: float, eta2: float) -> TrackingGains:
    """Gain matrix placing the eigenvalues of ``-C K`` at ``eta1`` and ``eta2``.

    ``k31 = k32 = 1`` and rows 2 and 4 are zero; the remaining entries follow
    from matching ``det(-CK - lambda I)`` to ``(lambda - eta1)(lambda - eta2)``.
    """
    if not (eta1 < 0.0 and eta2 < 0.0):
        raise ControlDesignError(f"error-dynamics eigenvalues must be negative, got {eta1}, {eta2}")
    s, p = eta1 + eta2, eta1 * eta2
    K = -np.array(
        [
            [s + 1.0, s + p + 1.0],
            [0.0, 0.0],
            [-1.0, -1.0],
            [0.0, 0.0],
        ]
    )
    C = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    CK = C @ K
    # Coefficient check: eigenvalues of a repeated pair are only sqrt(eps) accurate.
    got = np.poly(-CK)
    want = np.array([1.0, -s, p])
    if not np.allclose(got, want, rtol=1e-12, atol=1e-12 * max(1.0, abs(p))):
        raise ControlDesignError(f"gain construction missed its poles: {got} vs {want}")
    return TrackingGains(eta1, eta2, K, CK)


def observer_gains(plant: LinearPlant, poles: Sequence[float]) -> np.ndarray:
    """Observer gain ``K_e`` with ``eig(A - K_e C)`` at ``poles``.

    The first two poles go to the ``(y, ydot)`` chain and the last two to the
    ``(x, xdot)`` chain. Each chain is a double integrator measured through its
    position, so ``lambda^2 + l1 lambda + l2`` gives ``l1 = -(p + q)``,
    ``l2 = p q``.
    """
    poles = tuple(float(v) for v in poles)
    if len(poles) != 4:
        raise ControlDesignError(f"need 4 observer poles, got {len(poles)}")
    if any(not (math.isfinite(v) and v < 0.0) for v in poles):
        raise ControlDesignError(f"observer poles must be finite and negative: {poles}")
    if observability_rank(plant.A, plant.C) != 4:
        raise ControlDesignError("(A, C) is not observable")
    ref = build_plant()
    if not (np.array_equal(plant.A, ref.A) and np.array_equal(plant.C, ref.C)):
        raise ControlDesignError("closed-form placement needs the decoupled double-integrator plant")
    K_e = np.zeros((4, 2))
    for chain, (pa, pb) in enumerate((poles[:2], poles[2:])):
        K_e[2 * chain, chain] = -(pa + pb)
        K_e[2 * chain + 1, chain] = pa * pb
    return K_e


def observer_derivative(
    x_hat: np.ndarray,
    plant: LinearPlant,
    K_e: np.ndarray,
    u: np.ndarray,
    y_meas: np.ndarray,
    drift: Optional[Drift] = None,
) -> np.ndarray:
    dx = plant.A @ x_hat + plant.B @ u + K_e @ (y_meas - plant.C @ x_hat)
    if drift is not None:
        dx = dx + drift(x_hat)
    return dx


def observer_update(
    obs: ObserverState,
    plant: LinearPlant,
    u,
    y_meas,
    drift: Optional[Drift],
    h: float,
) -> ObserverState:
    """Advance the estimate one RK4 step with ``u`` and ``y_meas`` held."""
    if not h > 0.0:
        raise ValueError(f"step must be > 0, got {h!r}")
    y_meas = np.asarray(y_meas, dtype=float)
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(y_meas)):
        raise ValueError(f"non-finite measurement {y_meas}")
    x_new = step_rk4(
        obs.x_hat,
        lambda _t, xh: observer_derivative(xh, plant, obs.K_e, u, y_meas, drift),
        h,
    )
    return ObserverState(x_new, obs.K_e, obs.poles)


def make_observer(plant: LinearPlant, poles: Sequence[float], x_hat0) -> ObserverState:
    return ObserverState(
        np.asarray(x_hat0, dtype=float).copy(),
        observer_gains(plant, poles),
        tuple(float(v) for v in poles),
    )


def control_law(
    plant: LinearPlant,
    gains: TrackingGains,
    x_hat: np.ndarray,
    y_d,
    yd_dot,
    y_meas,
) -> np.ndarray:
    """Feedback-cancelling input ``u = (CB)^-1 (ydot_d - C A xhat + C K e2)``."""
    e2 = np.asarray(y_d, dtype=float) - np.asarray(y_meas, dtype=float)
    rhs = np.asarray(yd_dot, dtype=float) - plant.C @ (plant.A @ x_hat) + gains.CK @ e2
    return np.linalg.solve(plant.C @ plant.B, rhs)


def assemble_error_dynamics(plant: LinearPlant, gains: TrackingGains, K_e: np.ndarray):
    """Block matrix ``E = [[A - K_e C, 0], [-C A, -C K]]`` over ``(e1, e2)``.

    Returns ``(E, eigenvalues)``.
    """
    obs_block = plant.A - K_e @ plant.C
    top = np.hstack([obs_block, np.zeros((4, 2))])
    bottom = np.hstack([-plant.C @ plant.A, -gains.CK])
    E = np.vstack([top, bottom])
    # Block-triangular: the characteristic polynomial factors over the blocks.
    # Compared on coefficients because repeated poles make eigenvalues ill-conditioned.
    want = np.polymul(np.poly(obs_block), np.poly(-gains.CK))
    got = np.poly(E)
    if not np.allclose(got, want, rtol=1e-9, atol=1e-9 * np.abs(want).max()):
        raise ControlDesignError("error dynamics spectrum is not the union of its blocks")
    return E, np.linalg.eigvals(E)


def spectra_union(plant: LinearPlant, gains: TrackingGains, K_e: np.ndarray) -> np.ndarray:
    """Eigenvalues of the two diagonal blocks of the error dynamics, concatenated."""
    return np.concatenate(
        [np.linalg.eigvals(plant.A - K_e @ plant.C), np.linalg.eigvals(-gains.CK)]
    )
