import numpy as np
import pytest

from mpcmci import (
    CostSpec,
    FormulationParams,
    InfeasibleStartError,
    ScalarStateFn,
    build_problem,
    cold_start,
    shift_warm_start,
    simulate,
    start_from_controls,
)
from mpcmci.analysis import CircleReference
from mpcmci.ocp import random_start
from mpcmci.solver import SolverConfig, finite_difference_jacobian, solve

SAFE_STATE = np.array([2.0, 0.5, 0.4, 1.0, -0.3])


def quasi_1d(margin):
    def value(X):
        return X[:, 0] - margin

    def grad(X):
        g = np.zeros_like(X)
        g[:, 0] = 1.0
        return g

    return ScalarStateFn(value, grad)


def build(unicycle, unicycle_cbf, variant, n, **kw):
    params = FormulationParams(variant, n, **kw)
    return build_problem(unicycle, unicycle_cbf, CostSpec(reference=None), params, SAFE_STATE)


def test_mci_counts_published_example(unicycle, unicycle_cbf):
    p = build(unicycle, unicycle_cbf, "MPC_MCI", 2)
    assert p.n_vars == 2 * (5 + 2) == 14
    assert len(p.eq_constraints) == 2
    assert sum(c.dim for c in p.eq_constraints) == 10
    assert [c.name for c in p.ineq_constraints] == ["distance[1]", "terminal_barrier"]


def test_nmpc_slack_counts(unicycle, unicycle_cbf):
    p = build(unicycle, unicycle_cbf, "NMPC_DCBF", 2, m_cbf=2, slack_enabled=True)
    assert p.n_vars == 14 + 2
    assert len(p.ineq_constraints) == 2
    # slack nonnegativity lives in the variable bounds
    assert np.all(p.var_lb[p.layout.slacks] == 0.0)
    assert np.all(np.isinf(p.var_ub[p.layout.slacks]))


@pytest.mark.parametrize("n", range(1, 7))
@pytest.mark.parametrize("variant", ["MPC", "MPC_MCI", "NMPC_DCBF", "DTCBF_MPC"])
def test_constraint_count_formulas(unicycle, unicycle_cbf, variant, n):
    kw = {}
    if variant == "DTCBF_MPC":
        kw["quasi_cbf"] = quasi_1d(0.2)
    p = build(unicycle, unicycle_cbf, variant, n, **kw)
    assert len(p.eq_constraints) == n
    assert p.n_eq == 5 * n
    expected_ineq = {
        "MPC": 0,
        "MPC_MCI": n,  # n-1 transients + 1 terminal
        "NMPC_DCBF": n,  # m defaults to n
        "DTCBF_MPC": max(n - 2, 0) + 2,
    }[variant]
    assert p.n_ineq == expected_ineq
    assert p.n_vars == n * 7


def test_layout_slices_disjoint_and_cover(unicycle, unicycle_cbf):
    p = build(unicycle, unicycle_cbf, "NMPC_DCBF", 4, m_cbf=3, slack_enabled=True)
    lay = p.layout
    idx = np.zeros(p.n_vars, dtype=int)
    for sl in (lay.states, lay.controls, lay.slacks):
        idx[sl] += 1
    assert np.all(idx == 1)
    assert lay.n_vars == p.n_vars == 4 * 7 + 3


def test_dtcbf_appendix_constraints_reduce_to_position_margins(dblint, dblint_cbf):
    params = FormulationParams("DTCBF_MPC", 2, gamma=1.0, quasi_cbf=quasi_1d(0.2))
    p = build_problem(dblint, dblint_cbf, CostSpec(reference=None), params, np.array([0.1, -0.7]))
    # pack a candidate with x1 = (0.5, .), x2 = (0.9, .): rows are x1-0.2, x2-0.2
    z = p.pack(np.array([[0.5, 0.1], [0.9, 0.2]]), np.array([[0.3], [0.1]]))
    np.testing.assert_allclose(p.ineq_values(z), [0.3, 0.7], atol=1e-14)


def test_dynamics_defects_zero_on_rollout(unicycle, unicycle_cbf):
    p = build(unicycle, unicycle_cbf, "MPC_MCI", 5)
    U = np.linspace(-0.5, 0.5, 10).reshape(5, 2)
    z = start_from_controls(p, U).values
    np.testing.assert_allclose(p.eq_residuals(z), 0.0, atol=1e-14)
    for block in p.eq_constraints:
        np.testing.assert_allclose(block(z), 0.0, atol=1e-14)


def test_objective_cross_check_against_simulate(unicycle, unicycle_cbf):
    ref = CircleReference(1.1, 10.0)
    cost = CostSpec(
        stage_pos_weight=10.0, stage_ctrl_weight=1.0, terminal_weight=10.0, reference=ref
    )
    params = FormulationParams("MPC_MCI", 6)
    t_now = 0.35
    p = build_problem(unicycle, unicycle_cbf, cost, params, SAFE_STATE, t_now)
    U = np.random.default_rng(5).uniform(-1, 1, size=(6, 2))
    z = start_from_controls(p, U).values
    traj = simulate(unicycle, SAFE_STATE, U)
    expected = 0.0
    for k in range(6):
        err = traj[k, :2] - ref(t_now + k * unicycle.dt)
        expected += 10.0 * err @ err + 1.0 * U[k] @ U[k]
    err_t = traj[6, :2] - ref(t_now + 6 * unicycle.dt)
    expected += 10.0 * err_t @ err_t
    assert p.objective(z) == pytest.approx(expected, rel=1e-12)


def test_slack_relaxation_monotone(unicycle, unicycle_cbf):
    off = build(unicycle, unicycle_cbf, "NMPC_DCBF", 4)
    on = build(unicycle, unicycle_cbf, "NMPC_DCBF", 4, slack_enabled=True)
    U = np.random.default_rng(9).uniform(-0.3, 0.3, size=(4, 2))
    z_off = start_from_controls(off, U).values
    if np.all(off.ineq_values(z_off) >= 0):
        z_on = on.pack(off.state_block(z_off), U, S=np.zeros(4))
        assert np.all(on.ineq_values(z_on) >= 0)
        assert on.max_violation(z_on) <= off.max_violation(z_off) + 1e-14


def test_shift_warm_start_construction(unicycle, unicycle_cbf):
    cost = CostSpec(reference=CircleReference())
    params = FormulationParams("MPC_MCI", 4)
    p0 = build_problem(unicycle, unicycle_cbf, cost, params, SAFE_STATE, 0.0)
    U = np.array([[0.2, 0.1], [-0.1, 0.0], [0.3, -0.2], [0.05, 0.4]])
    z0 = start_from_controls(p0, U).values
    x1 = simulate(unicycle, SAFE_STATE, U[:1])[1]
    p1 = build_problem(unicycle, unicycle_cbf, cost, params, x1, unicycle.dt)
    warm = shift_warm_start(z0, p0, p1, unicycle, unicycle_cbf)
    assert warm.provenance == "shifted"
    shifted_U = p1.control_block(warm.values)
    np.testing.assert_array_equal(shifted_U[:3], U[1:])
    x_f = p0.state_block(z0)[-1]
    np.testing.assert_array_equal(shifted_U[3], unicycle_cbf.recovery(x_f))
    # states are the exact rollout of the shifted controls
    np.testing.assert_allclose(p1.eq_residuals(warm.values), 0.0, atol=1e-14)


def test_shift_single_step_degenerate(unicycle, unicycle_cbf):
    params = FormulationParams("MPC_MCI", 1)
    p0 = build_problem(unicycle, unicycle_cbf, CostSpec(reference=None), params, SAFE_STATE)
    U = np.array([[0.5, -0.5]])
    z0 = start_from_controls(p0, U).values
    x1 = simulate(unicycle, SAFE_STATE, U)[1]
    p1 = build_problem(unicycle, unicycle_cbf, CostSpec(reference=None), params, x1)
    warm = shift_warm_start(z0, p0, p1, unicycle, unicycle_cbf)
    np.testing.assert_array_equal(
        p1.control_block(warm.values)[0], unicycle_cbf.recovery(p0.state_block(z0)[-1])
    )


def test_shifted_candidate_feasible_after_converged_solve(unicycle, unicycle_cbf):
    # Lemma-1 construction made executable on one step
    cost = CostSpec(reference=CircleReference())
    params = FormulationParams("MPC_MCI", 8)
    cfg = SolverConfig(tol_feas=1e-8)
    p0 = build_problem(unicycle, unicycle_cbf, cost, params, SAFE_STATE, 0.0)
    res = solve(p0, cold_start(p0), cfg)
    assert res.ok
    u0 = p0.control_block(res.primal)[0]
    x1 = simulate(unicycle, SAFE_STATE, u0[None, :])[1]
    p1 = build_problem(unicycle, unicycle_cbf, cost, params, x1, unicycle.dt)
    warm = shift_warm_start(res.primal, p0, p1, unicycle, unicycle_cbf)
    assert p1.max_violation(warm.values) <= 1e-6


def test_mci_precondition_rejects_colliding_start(unicycle, unicycle_cbf):
    inside = np.array([0.2, 0.0, 0.0, 0.5, 0.0])
    with pytest.raises(InfeasibleStartError):
        build(unicycle, unicycle_cbf, "MPC_MCI", 3)
        build_problem(
            unicycle,
            unicycle_cbf,
            CostSpec(reference=None),
            FormulationParams("MPC_MCI", 3),
            inside,
        )


def test_usage_errors(unicycle, unicycle_cbf):
    with pytest.raises(ValueError):
        build(unicycle, unicycle_cbf, "MPC_MCI", 3, m_cbf=2)
    with pytest.raises(ValueError):
        build(unicycle, unicycle_cbf, "MPC_MCI", 3, slack_enabled=True)
    with pytest.raises(ValueError):
        build(unicycle, unicycle_cbf, "DTCBF_MPC", 3)
    with pytest.raises(ValueError):
        build(unicycle, unicycle_cbf, "NMPC_DCBF", 3, gamma=0.0)
    with pytest.raises(ValueError):
        build(unicycle, unicycle_cbf, "NMPC_DCBF", 3, m_cbf=4)
    with pytest.raises(ValueError):
        build(unicycle, unicycle_cbf, "SQP_MAGIC", 3)


def test_pinned_control_bounds(unicycle, unicycle_cbf):
    p = build(unicycle, unicycle_cbf, "MPC_MCI", 3)
    u0 = np.array([0.25, -0.5])
    q = p.with_pinned_control(0, u0)
    lo = q.layout.controls.start
    np.testing.assert_array_equal(q.var_lb[lo : lo + 2], u0)
    np.testing.assert_array_equal(q.var_ub[lo : lo + 2], u0)
    # original untouched
    assert p.var_lb[lo] == -1.0


@pytest.mark.parametrize(
    "variant,kw",
    [
        ("MPC_MCI", {}),
        ("NMPC_DCBF", {"slack_enabled": True}),
        ("NMPC_DCBF", {"m_cbf": 2}),
        ("DTCBF_MPC", {"quasi_cbf": quasi_1d(0.2)}),
    ],
)
def test_hand_coded_jacobians_match_finite_differences(unicycle, unicycle_cbf, variant, kw):
    cost = CostSpec(reference=CircleReference())
    params = FormulationParams(variant, 4, **kw)
    p = build_problem(unicycle, unicycle_cbf, cost, params, SAFE_STATE, 0.1)
    z = random_start(p, seed=12).values
    z[p.layout.states] = start_from_controls(p, p.control_block(z)).values[p.layout.states]
    z += 0.01 * np.random.default_rng(1).standard_normal(z.size)
    h = 1e-6
    J_fd = finite_difference_jacobian(p.eq_residuals, z, h)
    np.testing.assert_allclose(p.eq_jacobian(z), J_fd, atol=1e-6)
    if p.n_ineq:
        G_fd = finite_difference_jacobian(p.ineq_values, z, h)
        np.testing.assert_allclose(p.ineq_jacobian(z), G_fd, atol=1e-6)
    g_fd = finite_difference_jacobian(lambda zz: p.objective(zz), z, h)[0]
    np.testing.assert_allclose(p.objective_grad(z), g_fd, atol=1e-5)
    # vjp agrees with the dense Jacobian rows
    b = p.eval_bundle(z)
    w = np.random.default_rng(2).standard_normal(p.n_eq)
    np.testing.assert_allclose(p.eq_vjp(b, w), p.eq_jacobian(z).T @ w, atol=1e-11)
    if p.n_ineq:
        wi = np.random.default_rng(3).standard_normal(p.n_ineq)
        np.testing.assert_allclose(p.ineq_vjp(b, wi), p.ineq_jacobian(z).T @ wi, atol=1e-11)
