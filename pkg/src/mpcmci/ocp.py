"""Finite-horizon transcriptions of the four MPC formulations.

Each variant is transcribed as a constrained nonlinear program over
multiple-shooting decision variables z = [X, U, S]:

* X: the N predicted states after the current one (the current state is a
  fixed parameter, not a decision variable),
* U: the N control inputs,
* S: the slack variables of the relaxed CBF-decay baseline, when enabled.

Equality constraints are the N dynamics-defect blocks x_{k+1} - f(x_k, u_k);
control bounds and plant state boxes become variable bounds.  The variants
add their safety inequalities (target >= 0):

* ``MPC``: none (optionally a terminal-set row).
* ``MPC_MCI``: squared signed distance on the transient predicted states
  plus a single terminal squared-barrier row; the current state's distance
  requirement is a build precondition.
* ``NMPC_DCBF``: barrier-decay rows h'(x_{k+1}) >= w_k (1-gamma) h'(x_k) on
  the first M steps, with w_k >= 0 decision variables or pinned to zero.
* ``DTCBF_MPC``: a transient bound function on intermediate states plus the
  two-step quasi-CBF terminal pair.

Evaluation is vectorised; gradients of the objective and all constraints are
hand-coded and exposed both as dense Jacobians (for derivative checks) and as
vector-Jacobian products on a cached evaluation bundle (the solver hot path).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .dynamics import Plant, simulate
from .safety import SafetySpec

__all__ = [
    "VARIANTS",
    "CostSpec",
    "FormulationParams",
    "ScalarStateFn",
    "DecisionLayout",
    "ConstraintBlock",
    "OcpProblem",
    "WarmStart",
    "InfeasibleStartError",
    "build_problem",
    "cold_start",
    "start_from_controls",
    "random_start",
    "shift_warm_start",
    "max_violation",
]

VARIANTS = ("MPC", "NMPC_DCBF", "DTCBF_MPC", "MPC_MCI")


class InfeasibleStartError(Exception):
    """The fixed current state already violates a k=0 constraint."""


@dataclass(frozen=True)
class CostSpec:
    """Weights of the tracking objective.

    The stage cost is a quadratic position error plus a quadratic control
    term; the terminal cost scales the terminal position error by
    ``terminal_weight``.  ``slack_weight`` penalises slack deviation from the
    nominal decay value 1.  ``reference`` maps absolute time to the target
    position (length = plant.n_pos); without it the position terms drop.
    """

    stage_pos_weight: float = 10.0
    stage_ctrl_weight: float = 1.0
    terminal_weight: float = 10.0
    slack_weight: float = 100.0
    reference: Optional[Callable[[float], np.ndarray]] = None

    def __post_init__(self):
        for name in ("stage_pos_weight", "stage_ctrl_weight", "terminal_weight", "slack_weight"):
            w = getattr(self, name)
            if not np.isfinite(w) or w < 0:
                raise ValueError(f"{name} must be finite and nonnegative")


@dataclass(frozen=True)
class ScalarStateFn:
    """A scalar state function with its gradient, both batched over states."""

    value: Callable[[np.ndarray], np.ndarray]  # (m, nx) -> (m,)
    grad: Callable[[np.ndarray], np.ndarray]  # (m, nx) -> (m, nx)


@dataclass(frozen=True)
class FormulationParams:
    """Which formulation to transcribe and its knobs.

    ``m_cbf`` defaults to the horizon (NMPC_DCBF only); ``gamma`` is the CBF
    decay rate, constant across steps.  ``quasi_cbf``/``transient_bound``
    supply the h2/H descriptors of the two-step terminal baseline
    (``transient_bound`` defaults to ``quasi_cbf``).  ``precondition_tol`` is
    the numerical slack allowed on the fixed current state's k=0 constraint.
    """

    variant: str = "MPC_MCI"
    horizon: int = 10
    m_cbf: Optional[int] = None
    gamma: float = 0.2
    slack_enabled: bool = False
    terminal_set: Optional[ScalarStateFn] = None
    quasi_cbf: Optional[ScalarStateFn] = None
    transient_bound: Optional[ScalarStateFn] = None
    precondition_tol: float = 1e-6


@dataclass(frozen=True)
class DecisionLayout:
    """Named slices of the decision vector."""

    state_dim: int
    control_dim: int
    horizon: int
    n_slack: int

    @property
    def states(self) -> slice:
        return slice(0, self.horizon * self.state_dim)

    @property
    def controls(self) -> slice:
        start = self.horizon * self.state_dim
        return slice(start, start + self.horizon * self.control_dim)

    @property
    def slacks(self) -> slice:
        start = self.horizon * (self.state_dim + self.control_dim)
        return slice(start, start + self.n_slack)

    @property
    def n_vars(self) -> int:
        return self.horizon * (self.state_dim + self.control_dim) + self.n_slack

    def state_index(self, k: int) -> slice:
        """Slice of decision state x_{k} (k in 1..N maps to block k-1)."""
        if not 1 <= k <= self.horizon:
            raise IndexError("decision states are x_1..x_N")
        lo = (k - 1) * self.state_dim
        return slice(lo, lo + self.state_dim)


@dataclass(frozen=True)
class ConstraintBlock:
    """One named constraint block: fn maps the decision vector to residuals
    (equalities, target 0) or values (inequalities, target >= 0)."""

    name: str
    dim: int
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.fn(z)


@dataclass
class _Bundle:
    """Cached evaluation of everything the solver needs at one point."""

    Xd: np.ndarray  # (N, nx) decision states x_1..x_N
    U: np.ndarray  # (N, nu)
    S: np.ndarray  # (n_slack,)
    prevX: np.ndarray  # (N, nx): x_0..x_{N-1} feeding each step
    A: np.ndarray  # (N, nx, nx) d step / d state at (prevX, U)
    B: np.ndarray  # (N, nx, nu)
    defects: np.ndarray  # (N, nx)
    ineq: np.ndarray  # (m_ineq,)
    ineq_aux: tuple  # variant-specific gradient data


class OcpProblem:
    """A transcribed finite-horizon program; immutable after construction."""

    def __init__(self, plant, safety, cost, params, x_current, t_now):
        self.plant: Plant = plant
        self.safety: SafetySpec = safety
        self.cost: CostSpec = cost
        self.params: FormulationParams = params
        self.x_current = np.asarray(x_current, dtype=float)
        self.t_now = float(t_now)

        N = params.horizon
        nx, nu = plant.state_dim, plant.control_dim
        m = params.m_cbf if params.m_cbf is not None else N
        n_slack = m if (params.variant == "NMPC_DCBF" and params.slack_enabled) else 0
        self.layout = DecisionLayout(nx, nu, N, n_slack)
        self.n_vars = self.layout.n_vars
        self._m = m

        lb = np.empty(self.n_vars)
        ub = np.empty(self.n_vars)
        lb[self.layout.states] = np.tile(plant.state_lower, N)
        ub[self.layout.states] = np.tile(plant.state_upper, N)
        lb[self.layout.controls] = np.tile(plant.bounds.lower, N)
        ub[self.layout.controls] = np.tile(plant.bounds.upper, N)
        lb[self.layout.slacks] = 0.0
        ub[self.layout.slacks] = np.inf
        self.var_lb = lb
        self.var_ub = ub

        if cost.reference is not None:
            self.refs = np.array(
                [np.asarray(cost.reference(self.t_now + k * plant.dt), float) for k in range(N + 1)]
            )
            if self.refs.shape[1] != plant.n_pos:
                raise ValueError("reference width must equal plant.n_pos")
        else:
            self.refs = None

        self.eq_constraints = [
            ConstraintBlock(f"dynamics[{k}]", nx, _block_eq_fn(self, k)) for k in range(N)
        ]
        self.n_eq = N * nx
        self._ineq_names = self._ineq_row_names()
        self.ineq_constraints = [
            ConstraintBlock(name, 1, _block_ineq_fn(self, i))
            for i, name in enumerate(self._ineq_names)
        ]
        self.n_ineq = len(self._ineq_names)

    # -- layout helpers ----------------------------------------------------

    def state_block(self, z) -> np.ndarray:
        return np.asarray(z)[self.layout.states].reshape(self.layout.horizon, self.plant.state_dim)

    def control_block(self, z) -> np.ndarray:
        return np.asarray(z)[self.layout.controls].reshape(
            self.layout.horizon, self.plant.control_dim
        )

    def slack_block(self, z) -> np.ndarray:
        return np.asarray(z)[self.layout.slacks]

    def pack(self, Xd, U, S=None) -> np.ndarray:
        z = np.empty(self.n_vars)
        z[self.layout.states] = np.asarray(Xd, float).ravel()
        z[self.layout.controls] = np.asarray(U, float).ravel()
        if self.layout.n_slack:
            z[self.layout.slacks] = 1.0 if S is None else np.asarray(S, float)
        return z

    def with_pinned_control(self, k: int, u: np.ndarray) -> "OcpProblem":
        """Clone with control k fixed to u via tight variable bounds."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.plant.control_dim,):
            raise ValueError("pinned control has wrong shape")
        clone = object.__new__(OcpProblem)
        clone.__dict__.update(self.__dict__)
        lb = self.var_lb.copy()
        ub = self.var_ub.copy()
        nu = self.plant.control_dim
        lo = self.layout.controls.start + k * nu
        lb[lo : lo + nu] = u
        ub[lo : lo + nu] = u
        clone.var_lb = lb
        clone.var_ub = ub
        return clone

    # -- variant row naming --------------------------------------------------

    def _ineq_row_names(self):
        N = self.layout.horizon
        variant = self.params.variant
        names = []
        if variant == "MPC_MCI":
            names += [f"distance[{k}]" for k in range(1, N)]
            names.append("terminal_barrier")
        elif variant == "NMPC_DCBF":
            names += [f"cbf_decay[{k}]" for k in range(self._m)]
        elif variant == "DTCBF_MPC":
            names += [f"transient_bound[{k}]" for k in range(1, N - 1)]
            names.append("quasi_cbf_first")
            names.append("quasi_cbf_decay")
        if self.params.terminal_set is not None:
            names.append("terminal_set")
        return names

    # -- evaluation ----------------------------------------------------------

    def eval_bundle(self, z: np.ndarray) -> _Bundle:
        N = self.layout.horizon
        Xd = self.state_block(z)
        U = self.control_block(z)
        S = self.slack_block(z)
        prevX = np.vstack([self.x_current[None, :], Xd[:-1]]) if N > 1 else self.x_current[None, :]
        F = self.plant.step_many(prevX, U)
        A, B = self.plant.jacobians(prevX, U)
        defects = Xd - F
        ineq, aux = self._ineq_eval(Xd, prevX, S)
        return _Bundle(Xd, U, S, prevX, A, B, defects, ineq, aux)

    def _ineq_eval(self, Xd, prevX, S):
        N = self.layout.horizon
        variant = self.params.variant
        safety = self.safety
        vals = []
        aux = ()
        if variant == "MPC_MCI":
            dgrad = safety.distance_sq_grad(Xd[: N - 1]) if N > 1 else np.zeros((0, Xd.shape[1]))
            hgrad = safety.barrier_sq_grad(Xd[N - 1 :])
            if N > 1:
                vals.append(safety.distance_sq_many(Xd[: N - 1]))
            vals.append(safety.barrier_sq_many(Xd[N - 1 :]))
            aux = (dgrad, hgrad)
        elif variant == "NMPC_DCBF":
            m = self._m
            gamma = self.params.gamma
            h_next = safety.barrier_sq_many(Xd[:m])
            g_next = safety.barrier_sq_grad(Xd[:m])
            if self.params.slack_enabled:
                h_prev = safety.barrier_sq_many(prevX[:m])
                g_prev = safety.barrier_sq_grad(prevX[:m])
                vals.append(h_next - S * (1.0 - gamma) * h_prev)
                aux = (g_next, h_prev, g_prev)
            else:
                vals.append(h_next)
                aux = (g_next, None, None)
        elif variant == "DTCBF_MPC":
            quasi = self.params.quasi_cbf
            trans = self.params.transient_bound or quasi
            gamma = self.params.gamma
            if N >= 2:
                mid = Xd[: N - 2]
                t_val = trans.value(mid) if len(mid) else np.zeros(0)
                t_grad = trans.grad(mid) if len(mid) else np.zeros((0, Xd.shape[1]))
                pre, last = Xd[N - 2 : N - 1], Xd[N - 1 :]
                q_pre, q_last = quasi.value(pre), quasi.value(last)
                g_pre, g_last = quasi.grad(pre), quasi.grad(last)
                if len(mid):
                    vals.append(t_val)
                vals.append(q_pre)
                vals.append(q_last - (1.0 - gamma) * q_pre)
                aux = (t_grad, g_pre, g_last)
            else:  # N == 1: the first quasi row sits on the fixed current state
                q_cur = quasi.value(self.x_current[None, :])
                q_last = quasi.value(Xd)
                g_last = quasi.grad(Xd)
                vals.append(q_cur)
                vals.append(q_last - (1.0 - gamma) * q_cur)
                aux = (None, None, g_last)
        if self.params.terminal_set is not None:
            ts = self.params.terminal_set
            vals.append(ts.value(Xd[N - 1 :]))
            aux = aux + (ts.grad(Xd[N - 1 :]),)
        values = np.concatenate(vals) if vals else np.zeros(0)
        return values, aux

    def eq_vjp(self, bundle: _Bundle, w: np.ndarray) -> np.ndarray:
        """Gradient contribution of w . defects, over the decision vector."""
        N = self.layout.horizon
        nx = self.plant.state_dim
        W = w.reshape(N, nx)
        g = np.zeros(self.n_vars)
        gX = W.copy()
        if N > 1:
            # block k depends on decision state x_k for k >= 1 via -A_k
            gX[:-1] -= np.einsum("kij,ki->kj", bundle.A[1:], W[1:])
        g[self.layout.states] = gX.ravel()
        g[self.layout.controls] = (-np.einsum("kij,ki->kj", bundle.B, W)).ravel()
        return g

    def ineq_vjp(self, bundle: _Bundle, w: np.ndarray) -> np.ndarray:
        """Gradient contribution of w . ineq over the decision vector."""
        N = self.layout.horizon
        variant = self.params.variant
        g = np.zeros(self.n_vars)
        gX = np.zeros_like(bundle.Xd)
        used = 0
        if variant == "MPC_MCI":
            dgrad, hgrad = bundle.ineq_aux[:2]
            if N > 1:
                gX[: N - 1] += w[: N - 1, None] * dgrad
                used = N - 1
            gX[N - 1] += w[used] * hgrad[0]
            used += 1
        elif variant == "NMPC_DCBF":
            m = self._m
            gamma = self.params.gamma
            g_next, h_prev, g_prev = bundle.ineq_aux[:3]
            wm = w[:m]
            gX[:m] += wm[:, None] * g_next
            if self.params.slack_enabled:
                scale = wm * bundle.S * (1.0 - gamma)
                # prevX[0] is the fixed current state: no gradient
                gX[: m - 1] -= scale[1:, None] * g_prev[1:]
                g[self.layout.slacks] = -wm * (1.0 - gamma) * h_prev
            used = m
        elif variant == "DTCBF_MPC":
            gamma = self.params.gamma
            if N >= 2:
                t_grad, g_pre, g_last = bundle.ineq_aux[:3]
                n_mid = N - 2
                if n_mid:
                    gX[:n_mid] += w[:n_mid, None] * t_grad
                gX[N - 2] += w[n_mid] * g_pre[0]
                gX[N - 1] += w[n_mid + 1] * g_last[0]
                gX[N - 2] -= w[n_mid + 1] * (1.0 - gamma) * g_pre[0]
                used = n_mid + 2
            else:
                g_last = bundle.ineq_aux[2]
                gX[0] += w[1] * g_last[0]
                used = 2
        if self.params.terminal_set is not None:
            ts_grad = bundle.ineq_aux[-1]
            gX[N - 1] += w[used] * ts_grad[0]
        g[self.layout.states] += gX.ravel()
        return g

    # -- objective -----------------------------------------------------------

    def objective_parts(self, bundle: _Bundle):
        """(value, gradient) of the objective at the bundled point."""
        cost = self.cost
        N = self.layout.horizon
        npos = self.plant.n_pos
        val = cost.stage_ctrl_weight * float(np.sum(bundle.U**2))
        grad = np.zeros(self.n_vars)
        gU = 2.0 * cost.stage_ctrl_weight * bundle.U
        gX = np.zeros_like(bundle.Xd)
        if self.refs is not None:
            wq = cost.stage_pos_weight
            err0 = self.x_current[:npos] - self.refs[0]
            val += wq * float(err0 @ err0)
            if N > 1:
                errs = bundle.Xd[: N - 1, :npos] - self.refs[1:N]
                val += wq * float(np.sum(errs**2))
                gX[: N - 1, :npos] += 2.0 * wq * errs
            err_t = bundle.Xd[N - 1, :npos] - self.refs[N]
            val += cost.terminal_weight * float(err_t @ err_t)
            gX[N - 1, :npos] += 2.0 * cost.terminal_weight * err_t
        if self.layout.n_slack:
            ds = bundle.S - 1.0
            val += cost.slack_weight * float(ds @ ds)
            grad[self.layout.slacks] = 2.0 * cost.slack_weight * ds
        grad[self.layout.states] = gX.ravel()
        grad[self.layout.controls] = gU.ravel()
        return val, grad

    def objective_hessian_diag(self) -> np.ndarray:
        """Exact (diagonal) Hessian of the quadratic objective."""
        h = np.zeros(self.n_vars)
        N = self.layout.horizon
        nx, npos = self.plant.state_dim, self.plant.n_pos
        if self.refs is not None:
            for k in range(1, N):
                sl = self.layout.state_index(k)
                h[sl.start : sl.start + npos] = 2.0 * self.cost.stage_pos_weight
            sl = self.layout.state_index(N)
            h[sl.start : sl.start + npos] = 2.0 * self.cost.terminal_weight
        h[self.layout.controls] = 2.0 * self.cost.stage_ctrl_weight
        if self.layout.n_slack:
            h[self.layout.slacks] = 2.0 * self.cost.slack_weight
        return h

    def objective(self, z: np.ndarray) -> float:
        return self.objective_parts(self.eval_bundle(z))[0]

    def objective_grad(self, z: np.ndarray) -> np.ndarray:
        return self.objective_parts(self.eval_bundle(z))[1]

    def eq_residuals(self, z: np.ndarray) -> np.ndarray:
        return self.eval_bundle(z).defects.ravel()

    def ineq_values(self, z: np.ndarray) -> np.ndarray:
        return self.eval_bundle(z).ineq

    def max_violation(self, z: np.ndarray) -> float:
        """Worst violation over defects, inequalities, and variable bounds."""
        b = self.eval_bundle(z)
        worst = float(np.max(np.abs(b.defects))) if b.defects.size else 0.0
        if b.ineq.size:
            worst = max(worst, float(np.max(-np.minimum(b.ineq, 0.0))))
        z = np.asarray(z)
        bound = np.maximum(self.var_lb - z, z - self.var_ub)
        bound = bound[np.isfinite(bound)]
        if bound.size:
            worst = max(worst, float(max(bound.max(), 0.0)))
        return worst

    def merit_hessian(self, b: _Bundle, w_eq, w_in, eq_scale, in_scale, diag=None):
        """Hessian of diag-quadratic + eq_scale/2*|c|^2-type merits.

        Assembles ``diag + eq_scale * J_eq^T J_eq + in_scale * G_a^T G_a``
        plus the exact second-order terms ``sum_i w_eq_i hess(c_i) +
        sum_j w_in_j hess(g_j)`` wherever curvature is available (the plant's
        weighted step Hessian, the squared safety forms); rows without
        curvature data fall back to the Gauss-Newton model.  Active
        inequality rows are those with nonzero ``w_in``.
        """
        N = self.layout.horizon
        nx, nu = self.plant.state_dim, self.plant.control_dim
        J_eq = self.eq_jacobian_from(b)
        H = eq_scale * (J_eq.T @ J_eq)
        idx = np.arange(self.n_vars)
        if diag is not None:
            H[idx, idx] += diag
        w_in = np.asarray(w_in) if self.n_ineq else np.zeros(0)
        active = w_in != 0.0
        if np.any(active):
            J_in = self.ineq_jacobian_from(b)[active]
            H += in_scale * (J_in.T @ J_in)
        # defect curvature: c_k = x_{k+1} - f(.) so weights enter negated
        if self.plant.weighted_hessian is not None:
            W = np.asarray(w_eq).reshape(N, nx)
            blocks = self.plant.weighted_hessian(b.prevX, b.U, W)
            cs = self.layout.controls.start
            for k in range(N):
                iu = np.arange(cs + k * nu, cs + (k + 1) * nu)
                if k >= 1:
                    sx = self.layout.state_index(k)
                    ii = np.concatenate([np.arange(sx.start, sx.stop), iu])
                    H[np.ix_(ii, ii)] -= blocks[k]
                else:
                    H[np.ix_(iu, iu)] -= blocks[k][nx:, nx:]
        if np.any(active):
            self._add_ineq_curvature(H, b, w_in)
        return H

    def _add_ineq_curvature(self, H, b: _Bundle, w_in):
        N = self.layout.horizon
        variant = self.params.variant
        safety = self.safety
        dH = np.zeros_like(b.Xd)
        if variant == "MPC_MCI":
            if N > 1:
                dH[: N - 1] += w_in[: N - 1, None] * safety.distance_sq_hess_diag(b.Xd[: N - 1])
            dH[N - 1] += w_in[N - 1] * safety.barrier_sq_hess_diag(b.Xd[N - 1 :])[0]
        elif variant == "NMPC_DCBF":
            m = self._m
            wm = w_in[:m]
            dH[:m] += wm[:, None] * safety.barrier_sq_hess_diag(b.Xd[:m])
            if self.params.slack_enabled:
                gamma = self.params.gamma
                prev_hess = safety.barrier_sq_hess_diag(b.prevX[:m])
                scale = wm * b.S * (1.0 - gamma)
                dH[: m - 1] -= scale[1:, None] * prev_hess[1:]
                g_prev = b.ineq_aux[2]
                ss = self.layout.slacks.start
                for j in range(1, m):
                    cross = -(1.0 - gamma) * wm[j] * g_prev[j]
                    cols = self.layout.state_index(j)
                    H[ss + j, cols] += cross
                    H[cols, ss + j] += cross
        # descriptor-based rows (DTCBF, terminal sets) carry no curvature
        # data; the Gauss-Newton model covers them
        sl = self.layout.states
        H[np.arange(sl.start, sl.stop), np.arange(sl.start, sl.stop)] += dH.ravel()

    # -- dense Jacobians ------------------------------------------------------

    def eq_jacobian_from(self, b: _Bundle) -> np.ndarray:
        N, nx, nu = self.layout.horizon, self.plant.state_dim, self.plant.control_dim
        J = np.zeros((self.n_eq, self.n_vars))
        eye = np.eye(nx)
        for k in range(N):
            rows = slice(k * nx, (k + 1) * nx)
            J[rows, self.layout.state_index(k + 1)] = eye
            if k >= 1:
                J[rows, self.layout.state_index(k)] = -b.A[k]
            cl = self.layout.controls.start + k * nu
            J[rows, cl : cl + nu] = -b.B[k]
        return J

    def ineq_jacobian_from(self, b: _Bundle) -> np.ndarray:
        N = self.layout.horizon
        variant = self.params.variant
        xsl = self.layout.states.start
        nx = self.plant.state_dim
        J = np.zeros((self.n_ineq, self.n_vars))

        def xcols(k):  # decision state x_k, k in 1..N
            lo = xsl + (k - 1) * nx
            return slice(lo, lo + nx)

        row = 0
        if variant == "MPC_MCI":
            dgrad, hgrad = b.ineq_aux[:2]
            for k in range(1, N):
                J[row, xcols(k)] = dgrad[k - 1]
                row += 1
            J[row, xcols(N)] = hgrad[0]
            row += 1
        elif variant == "NMPC_DCBF":
            m = self._m
            gamma = self.params.gamma
            g_next, h_prev, g_prev = b.ineq_aux[:3]
            for j in range(m):
                J[row, xcols(j + 1)] = g_next[j]
                if self.params.slack_enabled:
                    if j >= 1:
                        J[row, xcols(j)] -= b.S[j] * (1.0 - gamma) * g_prev[j]
                    J[row, self.layout.slacks.start + j] = -(1.0 - gamma) * h_prev[j]
                row += 1
        elif variant == "DTCBF_MPC":
            gamma = self.params.gamma
            if N >= 2:
                t_grad, g_pre, g_last = b.ineq_aux[:3]
                for k in range(1, N - 1):
                    J[row, xcols(k)] = t_grad[k - 1]
                    row += 1
                J[row, xcols(N - 1)] = g_pre[0]
                row += 1
                J[row, xcols(N)] = g_last[0]
                J[row, xcols(N - 1)] -= (1.0 - gamma) * g_pre[0]
                row += 1
            else:
                g_last = b.ineq_aux[2]
                row += 1  # constant row on the fixed current state
                J[row, xcols(1)] = g_last[0]
                row += 1
        if self.params.terminal_set is not None:
            J[row, xcols(N)] = b.ineq_aux[-1][0]
        return J

    def eq_jacobian(self, z: np.ndarray) -> np.ndarray:
        return self.eq_jacobian_from(self.eval_bundle(z))

    def ineq_jacobian(self, z: np.ndarray) -> np.ndarray:
        return self.ineq_jacobian_from(self.eval_bundle(z))


def _block_eq_fn(problem: OcpProblem, k: int):
    def fn(z):
        b = problem.eval_bundle(np.asarray(z, float))
        return b.defects[k].copy()

    return fn


def _block_ineq_fn(problem: OcpProblem, i: int):
    def fn(z):
        return problem.eval_bundle(np.asarray(z, float)).ineq[i : i + 1].copy()

    return fn


# ---------------------------------------------------------------------------
# builder


def build_problem(
    plant: Plant,
    safety: SafetySpec,
    cost: CostSpec,
    params: FormulationParams,
    x_current: np.ndarray,
    t_now: float = 0.0,
) -> OcpProblem:
    """Transcribe one formulation at the given current state and time."""
    x_current = np.asarray(x_current, dtype=float)
    if x_current.shape != (plant.state_dim,):
        raise ValueError(
            f"current state has shape {x_current.shape}, expected ({plant.state_dim},)"
        )
    if params.variant not in VARIANTS:
        raise ValueError(f"unknown variant {params.variant!r}; known: {VARIANTS}")
    if params.horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not 0.0 < params.gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    if params.variant != "NMPC_DCBF":
        if params.m_cbf is not None:
            raise ValueError("m_cbf applies to NMPC_DCBF only")
        if params.slack_enabled:
            raise ValueError("slack_enabled applies to NMPC_DCBF only")
    else:
        m = params.m_cbf if params.m_cbf is not None else params.horizon
        if not 1 <= m <= params.horizon:
            raise ValueError("m_cbf must lie in [1, horizon]")
    if params.variant == "DTCBF_MPC":
        if params.quasi_cbf is None:
            raise ValueError("DTCBF_MPC requires a quasi_cbf descriptor")
    elif params.quasi_cbf is not None or params.transient_bound is not None:
        raise ValueError("quasi_cbf/transient_bound apply to DTCBF_MPC only")
    if params.variant == "MPC_MCI":
        d0 = safety.distance(x_current)
        if d0 < -params.precondition_tol:
            raise InfeasibleStartError(
                f"current state violates the distance constraint (d = {d0:.6g})"
            )
    return OcpProblem(plant, safety, cost, params, x_current, t_now)


# ---------------------------------------------------------------------------
# warm starts


@dataclass(frozen=True)
class WarmStart:
    values: np.ndarray
    provenance: str  # "cold" | "shifted"

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


def start_from_controls(
    problem: OcpProblem, controls: np.ndarray, provenance: str = "cold"
) -> WarmStart:
    """Pack a rollout-consistent start from a control sequence."""
    U = problem.plant.bounds.clip(np.atleast_2d(np.asarray(controls, float)))
    if U.shape != (problem.layout.horizon, problem.plant.control_dim):
        raise ValueError("control sequence has wrong shape")
    X = simulate(problem.plant, problem.x_current, U)[1:]
    return WarmStart(problem.pack(X, U), provenance)


def cold_start(problem: OcpProblem) -> WarmStart:
    """Zero controls (clipped into bounds), states by rollout, slacks nominal."""
    U = np.zeros((problem.layout.horizon, problem.plant.control_dim))
    return start_from_controls(problem, U, "cold")


def random_start(problem: OcpProblem, seed: int = 0, span: float = 5.0) -> WarmStart:
    """Uniform sample within variable bounds (±span where unbounded)."""
    rng = np.random.default_rng(seed)
    lb = np.maximum(problem.var_lb, -span)
    ub = np.minimum(problem.var_ub, span)
    return WarmStart(lb + rng.random(problem.n_vars) * (ub - lb), "cold")


def shift_warm_start(
    prev_solution: np.ndarray,
    prev_problem: OcpProblem,
    new_problem: OcpProblem,
    plant: Plant,
    safety: SafetySpec,
) -> WarmStart:
    """Shift the previous solution one step and append the recovery control.

    The new control block is the previous one shifted left, closed with the
    recovery law at the previous terminal state; the new state block is the
    exact rollout of those controls from the new current state.
    """
    prev_solution = np.asarray(prev_solution, dtype=float)
    if prev_solution.shape != (prev_problem.n_vars,):
        raise ValueError("previous solution has wrong length")
    if prev_problem.layout.horizon != new_problem.layout.horizon:
        raise ValueError("warm-start shift requires equal horizons")
    prev_U = prev_problem.control_block(prev_solution)
    x_f = prev_problem.state_block(prev_solution)[-1]
    u_tail = plant.bounds.clip(safety.recovery(x_f))
    new_U = np.vstack([prev_U[1:], u_tail[None, :]])
    new_X = simulate(plant, new_problem.x_current, new_U)[1:]
    S = None
    if new_problem.layout.n_slack:
        prev_S = (
            prev_problem.slack_block(prev_solution)
            if prev_problem.layout.n_slack
            else np.ones(new_problem.layout.n_slack)
        )
        S = np.append(prev_S[1:], 1.0)[: new_problem.layout.n_slack]
    return WarmStart(new_problem.pack(new_X, new_U, S), "shifted")


def max_violation(problem: OcpProblem, z: np.ndarray) -> float:
    return problem.max_violation(np.asarray(z, dtype=float))
