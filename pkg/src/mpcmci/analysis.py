"""Experiment drivers: feasibility grids, receding-horizon tracking,
one-step reachability probes, and the exact double-integrator comparison.

CSV schemas (consumed by the plotting scripts):

* grid: ``case,variant,N,ix,iy,x,y,verdict,max_violation,solve_ms``
* tracking: ``t,x,y,theta,v,omega,a,alpha,status,h,d,ref_x,ref_y,err``
* reachability: ``N,M,iu1,iu2,u1,u2,x1_*,member``

Each CSV is paired with a summary JSON naming the config hash and artifact
paths.  All drivers are deterministic; the grid driver can fan points out to
a process pool with results ordered by point index.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import Plant, make_double_integrator, simulate, step
from .safety import SafetySpec, double_integrator_safety
from .ocp import (
    CostSpec,
    FormulationParams,
    OcpProblem,
    ScalarStateFn,
    WarmStart,
    build_problem,
    cold_start,
    shift_warm_start,
    start_from_controls,
)
from .solver import SolveResult, SolverConfig, feasibility_phase, shifted_duals, solve

__all__ = [
    "CASE_PRESETS",
    "GridSpec",
    "GridResult",
    "feasibility_grid",
    "CircleReference",
    "TrackingConfig",
    "TrajectoryLog",
    "run_receding_horizon",
    "ReachabilityReport",
    "reachability_probe",
    "control_grid",
    "AppendixComparison",
    "appendix_example",
    "config_hash",
    "write_summary",
]

# fixed (theta, v, omega) triples of the two published feasibility cases
CASE_PRESETS = {
    1: {"fixed_theta": 0.0, "fixed_v": 1.0, "fixed_omega": 0.0},
    2: {"fixed_theta": 1.57, "fixed_v": 1.5, "fixed_omega": 2.0},
}


# ---------------------------------------------------------------------------
# feasibility grid


@dataclass(frozen=True)
class GridSpec:
    """A position lattice at fixed (theta, v, omega) and a horizon ladder.

    ``horizons`` follow the published convention counting predicted states
    including the current one, so a ladder entry N is transcribed with N-1
    control steps (the smallest meaningful entry is 2).  The lattice is
    inclusive of the range endpoints.
    """

    x_range: tuple = (-2.5, 2.5)
    y_range: tuple = (-2.5, 2.5)
    nx: int = 100
    ny: int = 100
    fixed_theta: float = 0.0
    fixed_v: float = 1.0
    fixed_omega: float = 0.0
    horizons: tuple = (2, 6, 11, 16, 21)
    variant: str = "MPC_MCI"
    gamma: float = 0.2
    label: str = "custom"

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid counts must be >= 1")
        if self.x_range[0] > self.x_range[1] or self.y_range[0] > self.y_range[1]:
            raise ValueError("ranges must be ordered")
        if any(n < 2 for n in self.horizons):
            raise ValueError("grid horizons count predicted states and must be >= 2")

    def axes(self):
        return (
            np.linspace(self.x_range[0], self.x_range[1], self.nx),
            np.linspace(self.y_range[0], self.y_range[1], self.ny),
        )

    def points(self) -> np.ndarray:
        xs, ys = self.axes()
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        n = X.size
        return np.stack(
            [
                X.ravel(),
                Y.ravel(),
                np.full(n, self.fixed_theta),
                np.full(n, self.fixed_v),
                np.full(n, self.fixed_omega),
            ],
            axis=-1,
        )


@dataclass
class GridResult:
    spec: GridSpec
    states: np.ndarray  # (n_points, state_dim)
    verdicts: dict  # table N -> int8 array (1 feasible, 0 infeasible, -1 failure)
    violations: dict  # table N -> float array
    solve_ms: dict  # table N -> float array

    def feasible_count(self, n: int) -> int:
        return int(np.sum(self.verdicts[n] == 1))

    def infeasible_count(self, n: int) -> int:
        return int(np.sum(self.verdicts[n] == 0))

    def failure_count(self, n: int) -> int:
        return int(np.sum(self.verdicts[n] == -1))

    def feasible_fraction(self, n: int) -> float:
        evaluated = self.verdicts[n].size - self.failure_count(n)
        return self.feasible_count(n) / evaluated if evaluated else float("nan")

    def summary(self) -> dict:
        return {
            "label": self.spec.label,
            "variant": self.spec.variant,
            "points": int(self.states.shape[0]),
            "horizons": {
                str(n): {
                    "feasible_fraction": self.feasible_fraction(n),
                    "feasible_count": self.feasible_count(n),
                    "infeasible_count": self.infeasible_count(n),
                    "failure_count": self.failure_count(n),
                }
                for n in self.spec.horizons
            },
        }

    def to_csv(self, path) -> None:
        spec = self.spec
        with open(path, "w", newline="") as fh:
            fh.write("case,variant,N,ix,iy,x,y,verdict,max_violation,solve_ms\n")
            names = {1: "feasible", 0: "infeasible", -1: "failure"}
            for n in spec.horizons:
                verdict = self.verdicts[n]
                viol = self.violations[n]
                ms = self.solve_ms[n]
                for idx in range(self.states.shape[0]):
                    ix, iy = divmod(idx, spec.ny)
                    fh.write(
                        f"{spec.label},{spec.variant},{n},{ix},{iy},"
                        f"{self.states[idx, 0]:.12g},{self.states[idx, 1]:.12g},"
                        f"{names[int(verdict[idx])]},{viol[idx]:.6g},{ms[idx]:.3f}\n"
                    )


def _policy_controls(plant: Plant, safety: SafetySpec, x0, n: int, steer: float = 0.0):
    """Closed-loop rollout of the braking recovery law, optionally with a
    constant steering-rate command replacing the second input."""
    x = np.asarray(x0, float).copy()
    U = np.empty((n, plant.control_dim))
    for k in range(n):
        u = np.array(safety.recovery(x), float)
        if steer and plant.control_dim > 1:
            u[1] = steer
        u = plant.bounds.clip(u)
        U[k] = u
        x = plant.step_map(x, u)
    return U


def _extend_controls(plant: Plant, safety: SafetySpec, x0, controls, n: int):
    """Prefix with existing controls, continue with the recovery law."""
    controls = np.atleast_2d(controls)[: n]
    x = simulate(plant, x0, controls)[-1]
    if controls.shape[0] == n:
        return controls
    tail = _policy_controls(plant, safety, x, n - controls.shape[0])
    return np.vstack([controls, tail])


def _grid_point_ladder(plant, safety, spec, cfg, x0):
    """Verdicts for one lattice point across the horizon ladder."""
    out = []
    d0 = safety.distance_sq(x0)
    h0 = safety.barrier_sq(x0)
    if d0 < 0.0 or (spec.variant == "NMPC_DCBF" and h0 < 0.0):
        # k=0 constraints on the fixed current state: signed distance for
        # every variant, safe-set membership for the CBF-chain baseline
        viol = -d0 if d0 < 0.0 else -h0
        for n in spec.horizons:
            out.append((0, viol, 0.0))
        return out
    prev_controls = None
    for n in spec.horizons:
        n_ctrl = n - 1
        t0 = time.perf_counter()
        params = FormulationParams(spec.variant, n_ctrl, gamma=spec.gamma)
        problem = build_problem(plant, safety, CostSpec(reference=None), params, x0)
        starts = []
        if prev_controls is not None:
            starts.append(_extend_controls(plant, safety, x0, prev_controls, n_ctrl))
        starts.append(_policy_controls(plant, safety, x0, n_ctrl))
        if spec.variant == "MPC_MCI":
            alm = float(plant.bounds.upper[-1])
            starts.append(_policy_controls(plant, safety, x0, n_ctrl, steer=alm))
            starts.append(_policy_controls(plant, safety, x0, n_ctrl, steer=-alm))
        best: Optional[SolveResult] = None
        for controls in starts:
            res = feasibility_phase(problem, start_from_controls(problem, controls), cfg)
            if best is None or res.max_violation < best.max_violation:
                best = res
            if res.status == "feasible_point":
                break
            if res.status == "infeasible" and res.max_violation > 0.3:
                # deep inside the infeasible region; further starts never flip
                # a margin this large
                break
        ms = (time.perf_counter() - t0) * 1e3
        if best.status == "feasible_point":
            verdict = 1
            prev_controls = problem.control_block(best.primal)
        elif best.status == "infeasible":
            verdict = 0
            prev_controls = problem.control_block(best.primal)
        else:
            verdict = -1
        out.append((verdict, best.max_violation, ms))
    return out


def _grid_chunk(args):
    plant, safety, spec, cfg, indices, states = args
    return [
        (idx, _grid_point_ladder(plant, safety, spec, cfg, states[i]))
        for i, idx in enumerate(indices)
    ]


def feasibility_grid(
    plant: Plant,
    safety: SafetySpec,
    spec: GridSpec,
    solver_cfg: SolverConfig | None = None,
    jobs: int = 1,
) -> GridResult:
    """Feasibility verdict of the chosen formulation at every lattice point.

    Slack variables are pinned off for the CBF-chain baseline; lattice points
    whose current state already violates a k=0 constraint are recorded
    infeasible without a solve.  Warm starts chain along the horizon ladder:
    a feasible witness at one horizon, extended by the recovery law, seeds
    the next (the constructive recursive-feasibility argument made
    computational).
    """
    cfg = solver_cfg or SolverConfig()
    states = spec.points()
    n_points = states.shape[0]
    ladders: list = [None] * n_points
    if jobs and jobs > 1:
        idx_chunks = np.array_split(np.arange(n_points), min(jobs * 4, n_points))
        payload = [
            (plant, safety, spec, cfg, chunk.tolist(), states[chunk]) for chunk in idx_chunks
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for chunk_result in pool.map(_grid_chunk, payload):
                for idx, ladder in chunk_result:
                    ladders[idx] = ladder
    else:
        for idx in range(n_points):
            ladders[idx] = _grid_point_ladder(plant, safety, spec, cfg, states[idx])
    verdicts = {n: np.empty(n_points, dtype=np.int8) for n in spec.horizons}
    violations = {n: np.empty(n_points) for n in spec.horizons}
    solve_ms = {n: np.empty(n_points) for n in spec.horizons}
    for idx, ladder in enumerate(ladders):
        for j, n in enumerate(spec.horizons):
            verdicts[n][idx], violations[n][idx], solve_ms[n][idx] = ladder[j]
    return GridResult(spec, states, verdicts, violations, solve_ms)


# ---------------------------------------------------------------------------
# receding-horizon tracking


@dataclass(frozen=True)
class CircleReference:
    """Position reference looping a circle of given radius and period."""

    radius: float = 1.1
    period: float = 10.0

    def __call__(self, t: float) -> np.ndarray:
        w = 2.0 * np.pi * t / self.period
        return self.radius * np.array([np.cos(w), np.sin(w)])


@dataclass(frozen=True)
class TrackingConfig:
    """Closed-loop tracking run configuration (defaults follow the study)."""

    variant: str = "MPC_MCI"
    horizon: int = 30
    r_r: float = 1.1
    t_r: float = 10.0
    duration: float = 20.0
    x0: tuple = (-2.0, -2.0, 0.0, 0.0, 0.0)
    cost: Optional[CostSpec] = None
    gamma: float = 0.2
    m_cbf: Optional[int] = None
    slack_enabled: bool = True

    def __post_init__(self):
        if self.r_r <= 0 or self.t_r <= 0:
            raise ValueError("reference radius and period must be positive")
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")

    def effective_cost(self) -> CostSpec:
        if self.cost is not None:
            return self.cost
        return CostSpec(reference=CircleReference(self.r_r, self.t_r))


@dataclass
class TrajectoryLog:
    """Closed-loop run record: one row per step plus the terminal state."""

    header: dict
    t: np.ndarray  # (T+1,)
    states: np.ndarray  # (T+1, nx)
    controls: np.ndarray  # (T, nu)
    status: list  # per applied step
    solve_time: np.ndarray  # (T,) seconds
    warm_violation: np.ndarray  # (T,) shifted-warm-start violation, NaN if cold
    h: np.ndarray  # (T+1,)
    d: np.ndarray  # (T+1,)
    ref: np.ndarray  # (T+1, n_pos)
    err: np.ndarray  # (T+1,)
    fallback: np.ndarray  # (T,) bool, recovery law applied

    @property
    def n_steps(self) -> int:
        return self.controls.shape[0]

    def mean_position_error(self, t_from: float, t_to: float) -> float:
        mask = (self.t >= t_from) & (self.t <= t_to)
        return float(np.mean(self.err[mask]))

    def summary(self) -> dict:
        return {
            "variant": self.header.get("variant"),
            "horizon": self.header.get("horizon"),
            "steps": int(self.n_steps),
            "min_d": float(self.d.min()) if self.d.size else None,
            "min_h": float(self.h.min()) if self.h.size else None,
            "max_warm_violation": (
                float(np.nanmax(self.warm_violation))
                if self.warm_violation.size and not np.all(np.isnan(self.warm_violation))
                else None
            ),
            "fallback_steps": int(self.fallback.sum()),
            "mean_err": float(self.err.mean()) if self.err.size else None,
        }

    def to_csv(self, path) -> None:
        if self.states.shape[1] != 5:
            raise ValueError("tracking CSV schema expects the 5-state unicycle")
        with open(path, "w", newline="") as fh:
            fh.write("t,x,y,theta,v,omega,a,alpha,status,h,d,ref_x,ref_y,err\n")
            for i in range(self.t.size):
                if i < self.n_steps:
                    a, al = self.controls[i]
                    status = self.status[i]
                else:
                    a = al = float("nan")
                    status = "end"
                row = [
                    f"{self.t[i]:.6g}",
                    *(f"{v:.12g}" for v in self.states[i]),
                    f"{a:.12g}",
                    f"{al:.12g}",
                    status,
                    f"{self.h[i]:.12g}",
                    f"{self.d[i]:.12g}",
                    f"{self.ref[i, 0]:.12g}",
                    f"{self.ref[i, 1]:.12g}",
                    f"{self.err[i]:.12g}",
                ]
                fh.write(",".join(row) + "\n")


def _tracking_params(cfg: TrackingConfig) -> FormulationParams:
    if cfg.variant == "NMPC_DCBF":
        return FormulationParams(
            cfg.variant,
            cfg.horizon,
            m_cbf=cfg.m_cbf,
            gamma=cfg.gamma,
            slack_enabled=cfg.slack_enabled,
        )
    return FormulationParams(cfg.variant, cfg.horizon, gamma=cfg.gamma)


def run_receding_horizon(
    plant: Plant,
    safety: SafetySpec,
    cfg: TrackingConfig,
    solver_cfg: SolverConfig | None = None,
) -> TrajectoryLog:
    """Receding-horizon closed loop: solve, apply the first control, step.

    The first solve is cold-started; afterwards the previous solution is
    shifted and closed with the recovery control.  A failed solve never
    drives the plant: the recovery law is applied and the step flagged.
    """
    scfg = solver_cfg or SolverConfig(tol_feas=1e-8)
    cost = cfg.effective_cost()
    params = _tracking_params(cfg)
    reference = cost.reference
    x = np.asarray(cfg.x0, dtype=float)
    n_steps = int(round(cfg.duration / plant.dt))
    nx, nu = plant.state_dim, plant.control_dim

    t_grid = np.arange(n_steps + 1) * plant.dt
    states = np.empty((n_steps + 1, nx))
    controls = np.empty((n_steps, nu))
    status: list = []
    solve_time = np.empty(n_steps)
    warm_viol = np.full(n_steps, np.nan)
    fallback = np.zeros(n_steps, dtype=bool)

    prev_problem = None
    prev_result = None
    for k in range(n_steps):
        t_now = t_grid[k]
        states[k] = x
        problem = build_problem(plant, safety, cost, params, x, t_now)
        duals = None
        if prev_result is not None:
            warm = shift_warm_start(prev_result.primal, prev_problem, problem, plant, safety)
            warm_viol[k] = problem.max_violation(warm.values)
            duals = shifted_duals(prev_result, problem)
        elif k == 0:
            warm = cold_start(problem)
        else:
            warm = start_from_controls(
                problem, _policy_controls(plant, safety, x, params.horizon)
            )
        tic = time.perf_counter()
        res = solve(problem, warm, scfg, duals=duals)
        solve_time[k] = time.perf_counter() - tic
        if res.ok:
            u = problem.control_block(res.primal)[0].copy()
            prev_problem, prev_result = problem, res
            status.append(res.status)
        else:
            u = plant.bounds.clip(safety.recovery(x))
            prev_problem = prev_result = None
            fallback[k] = True
            status.append(f"{res.status}+recovery")
        controls[k] = u
        x = step(plant, x, u)
    states[n_steps] = x

    refs = np.array([reference(t) for t in t_grid]) if reference is not None else np.zeros(
        (n_steps + 1, plant.n_pos)
    )
    err = np.linalg.norm(states[:, : plant.n_pos] - refs, axis=1)
    header = {
        "variant": cfg.variant,
        "horizon": cfg.horizon,
        "slack_enabled": cfg.slack_enabled and cfg.variant == "NMPC_DCBF",
        "gamma": cfg.gamma,
        "r_r": cfg.r_r,
        "t_r": cfg.t_r,
        "duration": cfg.duration,
        "x0": list(cfg.x0),
        "tol_feas": scfg.tol_feas,
    }
    return TrajectoryLog(
        header=header,
        t=t_grid,
        states=states,
        controls=controls,
        status=status,
        solve_time=solve_time,
        warm_violation=warm_viol,
        h=safety.barrier_many(states),
        d=safety.distance_many(states),
        ref=refs,
        err=err,
        fallback=fallback,
    )


# ---------------------------------------------------------------------------
# one-step reachability


def control_grid(plant: Plant, n_per_dim: int = 11) -> tuple:
    """Cartesian control sample grid; returns (values (k, nu), indices (k, 2))."""
    axes = [
        np.linspace(plant.bounds.lower[i], plant.bounds.upper[i], n_per_dim)
        for i in range(plant.control_dim)
    ]
    if plant.control_dim == 1:
        values = axes[0][:, None]
        indices = np.stack([np.arange(n_per_dim), np.zeros(n_per_dim, int)], axis=-1)
        return values, indices
    U1, U2 = np.meshgrid(axes[0], axes[1], indexing="ij")
    values = np.stack([U1.ravel(), U2.ravel()], axis=-1)
    I1, I2 = np.meshgrid(np.arange(n_per_dim), np.arange(n_per_dim), indexing="ij")
    indices = np.stack([I1.ravel(), I2.ravel()], axis=-1)
    return values, indices


@dataclass
class ReachabilityReport:
    x0: np.ndarray
    u_values: np.ndarray  # (k, nu)
    u_indices: np.ndarray  # (k, 2)
    next_states: np.ndarray  # (k, nx)
    mci: dict  # N -> bool array (k,)
    nmpc: dict  # (N, M) -> bool array (k,)
    failures: int = 0

    def missing_points(self, n_small: int, n_large: int) -> np.ndarray:
        """Indices in R_{n_small} but not R_{n_large} (must be empty)."""
        return np.flatnonzero(self.mci[n_small] & ~self.mci[n_large])

    def nmpc_bitmaps_identical(self) -> bool:
        maps = list(self.nmpc.values())
        return all(np.array_equal(maps[0], m) for m in maps[1:])

    def mci1_equals_nmpc11(self) -> bool:
        if 1 not in self.mci or (1, 1) not in self.nmpc:
            raise ValueError("requires horizon 1 bitmaps on both variants")
        return bool(np.array_equal(self.mci[1], self.nmpc[(1, 1)]))

    def to_csv(self, path) -> None:
        nx = self.next_states.shape[1]
        with open(path, "w", newline="") as fh:
            head = ",".join(f"x1_{i}" for i in range(nx))
            fh.write(f"variant,N,M,iu1,iu2,u1,u2,{head},member\n")
            for label, key_map in (("MPC_MCI", self.mci), ("NMPC_DCBF", self.nmpc)):
                for key, bitmap in key_map.items():
                    n, m = (key, key) if isinstance(key, int) else key
                    for j in range(self.u_values.shape[0]):
                        u1 = self.u_values[j, 0]
                        u2 = self.u_values[j, 1] if self.u_values.shape[1] > 1 else 0.0
                        xs = ",".join(f"{v:.12g}" for v in self.next_states[j])
                        fh.write(
                            f"{label},{n},{m},{self.u_indices[j, 0]},{self.u_indices[j, 1]},"
                            f"{u1:.12g},{u2:.12g},{xs},{int(bitmap[j])}\n"
                        )


def _membership_ladder(plant, safety, x0, u_values, horizon_params, cfg):
    """Feasibility bitmap per horizon with the first control pinned.

    ``horizon_params`` is an ascending list of (key, FormulationParams);
    witnesses from shorter horizons seed the longer ones.
    """
    k = u_values.shape[0]
    bitmaps = {}
    failures = 0
    witnesses = [None] * k
    for key, params in horizon_params:
        base = build_problem(plant, safety, CostSpec(reference=None), params, x0)
        bitmap = np.zeros(k, dtype=bool)
        for j in range(k):
            u0 = u_values[j]
            problem = base.with_pinned_control(0, u0)
            n_ctrl = params.horizon
            starts = []
            if witnesses[j] is not None:
                starts.append(_extend_controls(plant, safety, x0, witnesses[j], n_ctrl))
            x1 = plant.step_map(np.asarray(x0, float), u0)
            tail = (
                _policy_controls(plant, safety, x1, n_ctrl - 1)
                if n_ctrl > 1
                else np.zeros((0, plant.control_dim))
            )
            starts.append(np.vstack([u0[None, :], tail]))
            best = None
            for controls in starts:
                controls = controls.copy()
                controls[0] = u0  # keep the pin exact
                res = feasibility_phase(problem, start_from_controls(problem, controls), cfg)
                if best is None or res.max_violation < best.max_violation:
                    best = res
                if res.status == "feasible_point":
                    break
            if best.status == "feasible_point":
                bitmap[j] = True
                witnesses[j] = problem.control_block(best.primal)
            elif best.status != "infeasible":
                failures += 1
        bitmaps[key] = bitmap
    return bitmaps, failures


def reachability_probe(
    plant: Plant,
    safety: SafetySpec,
    x0,
    horizons: Sequence[int] = (1, 2, 3, 5, 6),
    u_grid: int = 11,
    solver_cfg: SolverConfig | None = None,
    nmpc_pairs: Sequence[tuple] = ((1, 1), (6, 6), (11, 11)),
    gamma: float = 0.2,
) -> ReachabilityReport:
    """Sampled one-step reachable sets via pinned-first-control feasibility.

    For each sampled u_0, membership of f(x0, u_0) in the horizon-N set is
    decided by feasibility of the N-step problem with the first control
    pinned through tight variable bounds.
    """
    cfg = solver_cfg or SolverConfig()
    x0 = np.asarray(x0, dtype=float)
    if safety.distance(x0) < 0:
        raise ValueError("reachability probe requires a collision-free start")
    u_values, u_indices = control_grid(plant, u_grid)
    next_states = plant.step_many(np.tile(x0, (u_values.shape[0], 1)), u_values)
    mci_params = [
        (n, FormulationParams("MPC_MCI", n, gamma=gamma)) for n in sorted(horizons)
    ]
    nmpc_params = [
        ((n, m), FormulationParams("NMPC_DCBF", n, m_cbf=m, gamma=gamma))
        for n, m in sorted(nmpc_pairs)
    ]
    mci_maps, fail1 = _membership_ladder(plant, safety, x0, u_values, mci_params, cfg)
    nmpc_maps, fail2 = _membership_ladder(plant, safety, x0, u_values, nmpc_params, cfg)
    return ReachabilityReport(
        x0=x0,
        u_values=u_values,
        u_indices=u_indices,
        next_states=next_states,
        mci=mci_maps,
        nmpc=nmpc_maps,
        failures=fail1 + fail2,
    )


# ---------------------------------------------------------------------------
# exact double-integrator comparison


@dataclass
class AppendixComparison:
    """Verdict pair of the exact 1-d double-integrator example.

    The primary verdicts are computed without the |v| <= u_max/2 state box
    (the published feasible witness itself violates that box); the verdicts
    with the box enforced are reported alongside.
    """

    mci_status: str
    dtcbf_status: str
    witness_controls: np.ndarray
    witness_states: np.ndarray
    transient_distance: float
    terminal_barrier: float
    dtcbf_required_first_push: float  # lower bound on u_0/2 from the k=0 CBF row
    dtcbf_margin: float  # best-achievable shortfall on the first predicted state
    with_velocity_bound: dict = field(default_factory=dict)

    @property
    def verdict_pair(self) -> tuple:
        return (self.mci_status, self.dtcbf_status)


def _quasi_cbf_1d(margin: float) -> ScalarStateFn:
    def value(X):
        return X[:, 0] - margin

    def grad(X):
        g = np.zeros_like(X)
        g[:, 0] = 1.0
        return g

    return ScalarStateFn(value, grad)


def appendix_example(solver_cfg: SolverConfig | None = None) -> AppendixComparison:
    """Two-step comparison: distance-plus-terminal-CBF vs CBF at both steps.

    Self-contained data: x0 = (0.1, -0.7), u_max = 1.5, margin 0.2, dt = 1.
    """
    cfg = solver_cfg or SolverConfig()
    x0 = np.array([0.1, -0.7])
    u_max, margin = 1.5, 0.2
    quasi = _quasi_cbf_1d(margin)

    def verdicts(velocity_bound: bool):
        plant = make_double_integrator(u_max=u_max, velocity_bound=velocity_bound)
        saf = double_integrator_safety(plant, margin=margin)
        p_mci = build_problem(
            plant, saf, CostSpec(reference=None), FormulationParams("MPC_MCI", 2), x0
        )
        r_mci = feasibility_phase(p_mci, cold_start(p_mci), cfg)
        p_dt = build_problem(
            plant,
            saf,
            CostSpec(reference=None),
            FormulationParams("DTCBF_MPC", 2, gamma=1.0, quasi_cbf=quasi),
            x0,
        )
        r_dt = feasibility_phase(p_dt, cold_start(p_dt), cfg)
        status = {"feasible_point": "feasible", "infeasible": "infeasible"}
        return (
            plant,
            saf,
            status.get(r_mci.status, r_mci.status),
            status.get(r_dt.status, r_dt.status),
            r_dt.max_violation,
        )

    plant, saf, mci_status, dtcbf_status, dtcbf_margin = verdicts(velocity_bound=False)
    _, _, mci_b, dtcbf_b, margin_b = verdicts(velocity_bound=True)

    # the constructive witness: full push, then coast
    witness_controls = np.array([[u_max], [0.0]])
    witness_states = simulate(plant, x0, witness_controls)
    transient_distance = saf.distance(witness_states[1])
    terminal_barrier = saf.barrier(witness_states[2])
    # the k=0 CBF row asks x0 + v0 + u0/2 >= margin, i.e. u0/2 >= margin - x0 - v0
    required = margin - float(x0[0] + x0[1])
    return AppendixComparison(
        mci_status=mci_status,
        dtcbf_status=dtcbf_status,
        witness_controls=witness_controls,
        witness_states=witness_states,
        transient_distance=transient_distance,
        terminal_barrier=terminal_barrier,
        dtcbf_required_first_push=required,
        dtcbf_margin=dtcbf_margin,
        with_velocity_bound={
            "mci_status": mci_b,
            "dtcbf_status": dtcbf_b,
            "dtcbf_margin": margin_b,
        },
    )


# ---------------------------------------------------------------------------
# artifact helpers


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if callable(obj):
        return repr(obj)
    return obj


def config_hash(config) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_summary(path, config, artifacts: Sequence[str], payload: dict) -> None:
    doc = {
        "config_hash": config_hash(config),
        "config": _jsonable(config),
        "artifacts": list(map(str, artifacts)),
        **_jsonable(payload),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
