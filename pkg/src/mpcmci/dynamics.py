"""Discrete-time control systems and the two benchmark plants.

A plant is a deterministic step map x_{t+1} = f(x_t, u_t) with box control
bounds and an optional state box.  Two plants are registered:

* ``unicycle5d`` -- state (x, y, theta, v, omega), acceleration inputs
  (a, alpha), second-order kinematic unicycle discretised at ``dt``.
* ``doubleintegrator1d`` -- state (x, v), force input (u,), exact
  zero-order-hold double integrator.

All operations are pure; plants are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ControlBounds",
    "Plant",
    "PLANT_REGISTRY",
    "make_plant",
    "make_unicycle",
    "make_double_integrator",
    "step",
    "simulate",
]


@dataclass(frozen=True)
class ControlBounds:
    """Componentwise box on control inputs."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be 1-d arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.lower, self.upper)

    def contains(self, u: np.ndarray, tol: float = 0.0) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))


@dataclass(frozen=True)
class Plant:
    """A discrete-time control system.

    ``step_map`` must be deterministic: identical inputs yield bit-identical
    outputs.  ``step_many``/``jacobians`` are vectorised companions used by
    the transcription and solver hot paths; ``jacobians`` returns the stacked
    derivatives (A, B) of the step map with respect to state and control.
    ``state_lower``/``state_upper`` carry plant-level state box constraints
    (±inf where unconstrained); ``n_pos`` is the number of leading position
    entries used by tracking costs and plots.
    """

    name: str
    state_dim: int
    control_dim: int
    dt: float
    bounds: ControlBounds
    step_map: Callable[[np.ndarray, np.ndarray], np.ndarray]
    step_many: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobians: Callable[[np.ndarray, np.ndarray], tuple]
    state_lower: np.ndarray = field(default=None)
    state_upper: np.ndarray = field(default=None)
    n_pos: int = 2
    # weighted second derivatives of the step map over stacked (state,
    # control) variables; None for linear plants
    weighted_hessian: Callable = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.bounds.dim != self.control_dim:
            raise ValueError("control bounds do not match control dimension")
        lo = self.state_lower
        hi = self.state_upper
        lo = np.full(self.state_dim, -np.inf) if lo is None else np.asarray(lo, float)
        hi = np.full(self.state_dim, np.inf) if hi is None else np.asarray(hi, float)
        if lo.shape != (self.state_dim,) or hi.shape != (self.state_dim,):
            raise ValueError("state bounds must match state dimension")
        object.__setattr__(self, "state_lower", lo)
        object.__setattr__(self, "state_upper", hi)


# ---------------------------------------------------------------------------
# unicycle with acceleration inputs


def _unicycle_step(x, u, dt):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    px, py, th, v, om = x
    a, al = u
    s = v * dt + 0.5 * a * dt * dt
    return np.array(
        [px + np.cos(th) * s, py + np.sin(th) * s, th + om * dt, v + a * dt, om + al * dt]
    )


def _unicycle_step_many(X, U, dt):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    th = X[:, 2]
    s = X[:, 3] * dt + 0.5 * U[:, 0] * dt * dt
    out = np.empty_like(X)
    out[:, 0] = X[:, 0] + np.cos(th) * s
    out[:, 1] = X[:, 1] + np.sin(th) * s
    out[:, 2] = th + X[:, 4] * dt
    out[:, 3] = X[:, 3] + U[:, 0] * dt
    out[:, 4] = X[:, 4] + U[:, 1] * dt
    return out


def _unicycle_jacobians(X, U, dt):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    m = X.shape[0]
    th = X[:, 2]
    c, sn = np.cos(th), np.sin(th)
    s = X[:, 3] * dt + 0.5 * U[:, 0] * dt * dt
    A = np.zeros((m, 5, 5))
    B = np.zeros((m, 5, 2))
    A[:, 0, 0] = 1.0
    A[:, 0, 2] = -sn * s
    A[:, 0, 3] = c * dt
    A[:, 1, 1] = 1.0
    A[:, 1, 2] = c * s
    A[:, 1, 3] = sn * dt
    A[:, 2, 2] = 1.0
    A[:, 2, 4] = dt
    A[:, 3, 3] = 1.0
    A[:, 4, 4] = 1.0
    B[:, 0, 0] = 0.5 * c * dt * dt
    B[:, 1, 0] = 0.5 * sn * dt * dt
    B[:, 3, 0] = dt
    B[:, 4, 1] = dt
    return A, B


def _unicycle_weighted_hessian(X, U, W, dt):
    """Hessian of sum_i W_i . f_i(x, u) over the stacked (state, control)
    variables, per batch row.  Only the position rows are nonlinear (through
    theta), so the result has entries on (theta, v, a) alone."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    m = X.shape[0]
    th = X[:, 2]
    c, sn = np.cos(th), np.sin(th)
    s = X[:, 3] * dt + 0.5 * U[:, 0] * dt * dt
    w_c = W[:, 0] * c + W[:, 1] * sn  # weight along the heading
    w_p = -W[:, 0] * sn + W[:, 1] * c  # weight across the heading
    H = np.zeros((m, 7, 7))
    H[:, 2, 2] = -w_c * s
    H[:, 2, 3] = H[:, 3, 2] = w_p * dt
    H[:, 2, 5] = H[:, 5, 2] = 0.5 * w_p * dt * dt
    return H


def make_unicycle(dt: float = 0.05, accel_max: float = 1.0, angaccel_max: float = 1.0) -> Plant:
    """Second-order kinematic unicycle, state (x, y, theta, v, omega)."""
    bounds = ControlBounds(
        np.array([-accel_max, -angaccel_max]), np.array([accel_max, angaccel_max])
    )
    return Plant(
        name="unicycle5d",
        state_dim=5,
        control_dim=2,
        dt=dt,
        bounds=bounds,
        step_map=partial(_unicycle_step, dt=dt),
        step_many=partial(_unicycle_step_many, dt=dt),
        jacobians=partial(_unicycle_jacobians, dt=dt),
        n_pos=2,
        weighted_hessian=partial(_unicycle_weighted_hessian, dt=dt),
    )


# ---------------------------------------------------------------------------
# 1-d double integrator


def _dblint_step(x, u, dt):
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return np.array([x[0] + x[1] * dt + 0.5 * u[0] * dt * dt, x[1] + u[0] * dt])


def _dblint_step_many(X, U, dt):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    out = np.empty_like(X)
    out[:, 0] = X[:, 0] + X[:, 1] * dt + 0.5 * U[:, 0] * dt * dt
    out[:, 1] = X[:, 1] + U[:, 0] * dt
    return out


def _dblint_jacobians(X, U, dt):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = X.shape[0]
    A = np.zeros((m, 2, 2))
    B = np.zeros((m, 2, 1))
    A[:, 0, 0] = 1.0
    A[:, 0, 1] = dt
    A[:, 1, 1] = 1.0
    B[:, 0, 0] = 0.5 * dt * dt
    B[:, 1, 0] = dt
    return A, B


def make_double_integrator(
    dt: float = 1.0, u_max: float = 1.5, velocity_bound: bool = True
) -> Plant:
    """1-d double integrator; optionally carries the |v| <= u_max/2 state box."""
    bounds = ControlBounds(np.array([-u_max]), np.array([u_max]))
    if velocity_bound:
        state_lower = np.array([-np.inf, -0.5 * u_max])
        state_upper = np.array([np.inf, 0.5 * u_max])
    else:
        state_lower = state_upper = None
    return Plant(
        name="doubleintegrator1d",
        state_dim=2,
        control_dim=1,
        dt=dt,
        bounds=bounds,
        step_map=partial(_dblint_step, dt=dt),
        step_many=partial(_dblint_step_many, dt=dt),
        jacobians=partial(_dblint_jacobians, dt=dt),
        state_lower=state_lower,
        state_upper=state_upper,
        n_pos=1,
    )


PLANT_REGISTRY: dict[str, Callable[..., Plant]] = {
    "unicycle5d": make_unicycle,
    "doubleintegrator1d": make_double_integrator,
}


def make_plant(name: str, **kwargs) -> Plant:
    """Construct a registered plant by identifier."""
    try:
        factory = PLANT_REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown plant {name!r}; known: {sorted(PLANT_REGISTRY)}") from None
    return factory(**kwargs)


# ---------------------------------------------------------------------------
# operations


def step(plant: Plant, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One step of the plant dynamics.  Does not clamp u to bounds."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != (plant.state_dim,):
        raise ValueError(f"state has shape {x.shape}, expected ({plant.state_dim},)")
    if u.shape != (plant.control_dim,):
        raise ValueError(f"control has shape {u.shape}, expected ({plant.control_dim},)")
    return plant.step_map(x, u)


def simulate(plant: Plant, x0: np.ndarray, controls: Sequence[np.ndarray]) -> np.ndarray:
    """Roll the plant forward; returns the (T+1, state_dim) state trajectory."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (plant.state_dim,):
        raise ValueError(f"state has shape {x0.shape}, expected ({plant.state_dim},)")
    controls = np.atleast_2d(np.asarray(controls, dtype=float)) if len(controls) else np.zeros(
        (0, plant.control_dim)
    )
    if controls.shape[1] != plant.control_dim:
        raise ValueError("control trajectory has wrong width")
    out = np.empty((controls.shape[0] + 1, plant.state_dim))
    out[0] = x0
    for t in range(controls.shape[0]):
        out[t + 1] = plant.step_map(out[t], controls[t])
    return out
