"""Signed-distance and barrier functions, recovery laws, and runnable checks.

A :class:`SafetySpec` pairs a signed-distance function d (negative inside the
obstacle) with a barrier function h whose 0-superlevel set is rendered
invariant by the spec's recovery control law.  Squared-form variants d', h'
share the 0-superlevel sets of d, h but avoid square roots inside optimizer
constraints; the plain forms are used for logging and reporting.

Two concrete specs are provided:

* :class:`CircularObstacleSafety` for the planar unicycle and a disk obstacle,
  with the braking recovery law (zero steering, clipped deceleration).
* :class:`ClearanceSafety1d` for the 1-d double integrator and the unsafe
  half-line x < 0, with conservative barrier h = x - margin.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import Plant

__all__ = [
    "ObstacleSpec",
    "SafetySpec",
    "CircularObstacleSafety",
    "ClearanceSafety1d",
    "unicycle_safety",
    "double_integrator_safety",
    "CbfCheckReport",
    "check_cbf_descent",
    "check_compatibility",
    "sample_states",
    "default_unicycle_region",
    "report_to_csv",
]


@dataclass(frozen=True)
class ObstacleSpec:
    """A disk obstacle in the position plane."""

    center: np.ndarray = field(default=None)
    radius: float = 1.0

    def __post_init__(self):
        c = np.zeros(2) if self.center is None else np.asarray(self.center, dtype=float)
        if c.shape != (2,):
            raise ValueError("obstacle center must be a 2-vector")
        if self.radius <= 0:
            raise ValueError("obstacle radius must be positive")
        object.__setattr__(self, "center", c)


class SafetySpec:
    """Base interface for a distance/barrier/recovery triple.

    Scalar entry points take a single state; ``*_many`` variants take a
    (m, state_dim) batch.  ``distance_sq_grad``/``barrier_sq_grad`` return the
    (m, state_dim) gradients of the squared forms used inside transcriptions.
    """

    obstacle: Optional[ObstacleSpec] = None
    a_m: Optional[float] = None

    # -- scalar forms -----------------------------------------------------
    def distance(self, x) -> float:
        return float(self.distance_many(np.asarray(x, float)[None, :])[0])

    def barrier(self, x) -> float:
        return float(self.barrier_many(np.asarray(x, float)[None, :])[0])

    def distance_sq(self, x) -> float:
        return float(self.distance_sq_many(np.asarray(x, float)[None, :])[0])

    def barrier_sq(self, x) -> float:
        return float(self.barrier_sq_many(np.asarray(x, float)[None, :])[0])

    def recovery(self, x) -> np.ndarray:
        return self.recovery_many(np.asarray(x, float)[None, :])[0]

    # -- batch forms (implemented by subclasses) --------------------------
    def distance_many(self, X) -> np.ndarray:
        raise NotImplementedError

    def barrier_many(self, X) -> np.ndarray:
        raise NotImplementedError

    def distance_sq_many(self, X) -> np.ndarray:
        raise NotImplementedError

    def barrier_sq_many(self, X) -> np.ndarray:
        raise NotImplementedError

    def distance_sq_grad(self, X) -> np.ndarray:
        raise NotImplementedError

    def barrier_sq_grad(self, X) -> np.ndarray:
        raise NotImplementedError

    def distance_sq_hess_diag(self, X) -> np.ndarray:
        """Diagonal Hessian of the squared distance form (exact for the
        concrete specs, whose Hessians are diagonal)."""
        return np.zeros_like(np.atleast_2d(np.asarray(X, float)))

    def barrier_sq_hess_diag(self, X) -> np.ndarray:
        return np.zeros_like(np.atleast_2d(np.asarray(X, float)))

    def recovery_many(self, X) -> np.ndarray:
        raise NotImplementedError


class CircularObstacleSafety(SafetySpec):
    """Disk-obstacle safety pair for the 5-state unicycle.

    d(x)  = ||p - c|| - r0
    h(x)  = d(x) - v^2 / (2 a_m)        (braking-distance barrier)
    d'(x) = ||p - c||^2 - r0^2
    h'(x) = ||p - c||^2 - (r0 + v^2 / (2 a_m))^2

    The recovery law holds the steering at zero and decelerates with
    a = clip(-2 v / dt, -a_m, a_m); it coincides with the three published
    branches on their domains and is the unique continuous extension over the
    gap 0.5*a_m*dt < |v| <= a_m*dt.
    """

    def __init__(self, obstacle: ObstacleSpec, a_m: float, dt: float):
        if a_m <= 0:
            raise ValueError("a_m must be positive")
        self.obstacle = obstacle
        self.a_m = float(a_m)
        self.dt = float(dt)

    def _radius2(self, X):
        dx = X[:, 0] - self.obstacle.center[0]
        dy = X[:, 1] - self.obstacle.center[1]
        return dx * dx + dy * dy

    def distance_many(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        return np.sqrt(self._radius2(X)) - self.obstacle.radius

    def barrier_many(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        v = X[:, 3]
        return self.distance_many(X) - v * v / (2.0 * self.a_m)

    def distance_sq_many(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        return self._radius2(X) - self.obstacle.radius**2

    def barrier_sq_many(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        v = X[:, 3]
        reach = self.obstacle.radius + v * v / (2.0 * self.a_m)
        return self._radius2(X) - reach * reach

    def distance_sq_grad(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        g = np.zeros_like(X)
        g[:, 0] = 2.0 * (X[:, 0] - self.obstacle.center[0])
        g[:, 1] = 2.0 * (X[:, 1] - self.obstacle.center[1])
        return g

    def barrier_sq_grad(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        v = X[:, 3]
        reach = self.obstacle.radius + v * v / (2.0 * self.a_m)
        g = np.zeros_like(X)
        g[:, 0] = 2.0 * (X[:, 0] - self.obstacle.center[0])
        g[:, 1] = 2.0 * (X[:, 1] - self.obstacle.center[1])
        g[:, 3] = -2.0 * reach * v / self.a_m
        return g

    def distance_sq_hess_diag(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        h = np.zeros_like(X)
        h[:, 0] = 2.0
        h[:, 1] = 2.0
        return h

    def barrier_sq_hess_diag(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        v = X[:, 3]
        reach = self.obstacle.radius + v * v / (2.0 * self.a_m)
        h = np.zeros_like(X)
        h[:, 0] = 2.0
        h[:, 1] = 2.0
        h[:, 3] = -2.0 * (v * v / (self.a_m * self.a_m) + reach / self.a_m)
        return h

    def recovery_many(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        a = np.clip(-2.0 * X[:, 3] / self.dt, -self.a_m, self.a_m)
        out = np.zeros((X.shape[0], 2))
        out[:, 0] = a
        return out


class ClearanceSafety1d(SafetySpec):
    """Half-line safety pair for the 1-d double integrator.

    The unsafe set is {x < 0}; d(x) = x and the conservative barrier is
    h(x) = x - margin.  Both are polynomial already, so the squared forms
    coincide with the plain ones.  The recovery law u = clip(-2 v / dt,
    -u_max, u_max) reverses the velocity and holds the position, keeping h
    constant whenever |v| <= u_max * dt / 2.
    """

    def __init__(self, margin: float, u_max: float, dt: float = 1.0):
        if margin <= 0:
            raise ValueError("margin must be positive")
        self.obstacle = None
        self.a_m = None
        self.margin = float(margin)
        self.u_max = float(u_max)
        self.dt = float(dt)

    def distance_many(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        return X[:, 0].copy()

    def barrier_many(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        return X[:, 0] - self.margin

    distance_sq_many = distance_many
    barrier_sq_many = barrier_many

    def distance_sq_grad(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        g = np.zeros_like(X)
        g[:, 0] = 1.0
        return g

    barrier_sq_grad = distance_sq_grad

    def recovery_many(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        u = np.clip(-2.0 * X[:, 1] / self.dt, -self.u_max, self.u_max)
        return u[:, None]


def unicycle_safety(
    plant: Plant, obstacle: ObstacleSpec | None = None, a_m: float | None = None
) -> CircularObstacleSafety:
    """Safety spec for the unicycle; a_m defaults to the plant's braking bound."""
    if obstacle is None:
        obstacle = ObstacleSpec()
    if a_m is None:
        a_m = float(plant.bounds.upper[0])
    return CircularObstacleSafety(obstacle, a_m, plant.dt)


def double_integrator_safety(plant: Plant, margin: float = 0.2) -> ClearanceSafety1d:
    return ClearanceSafety1d(margin, float(plant.bounds.upper[0]), plant.dt)


# ---------------------------------------------------------------------------
# module-level operation wrappers


def distance(spec: SafetySpec, x) -> float:
    return spec.distance(x)


def barrier(spec: SafetySpec, x) -> float:
    return spec.barrier(x)


def distance_sq(spec: SafetySpec, x) -> float:
    return spec.distance_sq(x)


def barrier_sq(spec: SafetySpec, x) -> float:
    return spec.barrier_sq(x)


def recovery_control(spec: SafetySpec, x) -> np.ndarray:
    return spec.recovery(x)


# ---------------------------------------------------------------------------
# runnable checks


@dataclass
class CbfCheckReport:
    """Outcome of a sampled property check.

    ``violations`` lists (state, value_before, value_after) rows for samples
    that broke the property by more than ``tol``; ``max_descent_violation`` is
    the largest violation measure over all samples (may be negative when the
    property holds with margin).  The full per-sample arrays are kept for CSV
    export: columns are the state entries, h before, h after, d, and a 0/1
    violation flag.
    """

    samples_tested: int
    violations: list
    max_descent_violation: float
    tol: float
    states: np.ndarray = None
    h_before: np.ndarray = None
    h_after: np.ndarray = None
    d_values: np.ndarray = None
    flags: np.ndarray = None

    @property
    def passed(self) -> bool:
        return not self.violations


def check_cbf_descent(
    spec: SafetySpec, plant: Plant, states: np.ndarray, tol: float = 1e-9
) -> CbfCheckReport:
    """Verify h(f(x, recovery(x))) >= h(x) - tol on a sample of states.

    Also checks that the recovery controls respect the plant's bounds (a
    bound breach is reported as a violation row with the offending margin).
    """
    X = np.atleast_2d(np.asarray(states, float))
    U = spec.recovery_many(X)
    lo, hi = plant.bounds.lower, plant.bounds.upper
    bound_breach = np.maximum(lo - U, U - hi).max(axis=1)
    X1 = plant.step_many(X, U)
    h0 = spec.barrier_many(X)
    h1 = spec.barrier_many(X1)
    descent_gap = h0 - h1  # > 0 means h decreased
    measure = np.maximum(descent_gap, bound_breach)
    bad = measure > tol
    violations = [
        (X[i].copy(), float(h0[i]), float(h1[i])) for i in np.flatnonzero(bad)
    ]
    return CbfCheckReport(
        samples_tested=X.shape[0],
        violations=violations,
        max_descent_violation=float(measure.max()) if measure.size else -np.inf,
        tol=tol,
        states=X,
        h_before=h0,
        h_after=h1,
        d_values=spec.distance_many(X),
        flags=bad.astype(int),
    )


def check_compatibility(spec: SafetySpec, states: np.ndarray, tol: float = 1e-9) -> CbfCheckReport:
    """Verify h(x) >= 0 implies d(x) >= 0 on a sample of states.

    The violation measure is min(h(x), -d(x)): positive exactly when a state
    is certified safe by the barrier yet collides per the distance function.
    """
    X = np.atleast_2d(np.asarray(states, float))
    h = spec.barrier_many(X)
    d = spec.distance_many(X)
    measure = np.minimum(h, -d)
    bad = measure > tol
    violations = [(X[i].copy(), float(h[i]), float(d[i])) for i in np.flatnonzero(bad)]
    return CbfCheckReport(
        samples_tested=X.shape[0],
        violations=violations,
        max_descent_violation=float(measure.max()) if measure.size else -np.inf,
        tol=tol,
        states=X,
        h_before=h,
        h_after=h,
        d_values=d,
        flags=bad.astype(int),
    )


def default_unicycle_region() -> np.ndarray:
    """Sampling box for unicycle sweeps: (x, y) in [-2.5, 2.5]^2,
    theta in [-pi, pi], v in [-2, 2], omega in [-2, 2]."""
    return np.array(
        [[-2.5, 2.5], [-2.5, 2.5], [-np.pi, np.pi], [-2.0, 2.0], [-2.0, 2.0]]
    )


def sample_states(region: np.ndarray, n: int, seed: int = 0) -> np.ndarray:
    """Uniform samples from a per-dimension box given as an (dim, 2) array."""
    region = np.asarray(region, float)
    rng = np.random.default_rng(seed)
    u = rng.random((n, region.shape[0]))
    return region[:, 0] + u * (region[:, 1] - region[:, 0])


def report_to_csv(report: CbfCheckReport, path) -> None:
    """Write the per-sample rows of a check report as CSV."""
    if report.states is None:
        raise ValueError("report carries no per-sample rows")
    dim = report.states.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(dim)] + ["h_before", "h_after", "d", "violation"])
        for i in range(report.samples_tested):
            writer.writerow(
                [f"{v:.12g}" for v in report.states[i]]
                + [
                    f"{report.h_before[i]:.12g}",
                    f"{report.h_after[i]:.12g}",
                    f"{report.d_values[i]:.12g}",
                    int(report.flags[i]),
                ]
            )
