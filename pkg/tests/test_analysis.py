import json
import time

import numpy as np
import pytest

from mpcmci import SolverConfig
from mpcmci.analysis import (
    CASE_PRESETS,
    CircleReference,
    GridSpec,
    TrackingConfig,
    appendix_example,
    config_hash,
    feasibility_grid,
    reachability_probe,
    run_receding_horizon,
    write_summary,
)


@pytest.fixture(scope="module")
def small_grid(unicycle, unicycle_cbf):
    spec = GridSpec(
        nx=12, ny=12, horizons=(2, 6), variant="MPC_MCI", label="case1", **CASE_PRESETS[1]
    )
    return spec, feasibility_grid(unicycle, unicycle_cbf, spec, SolverConfig())


@pytest.fixture(scope="module")
def small_nmpc_grid(unicycle, unicycle_cbf):
    spec = GridSpec(
        nx=12, ny=12, horizons=(2, 6), variant="NMPC_DCBF", label="case1", **CASE_PRESETS[1]
    )
    return spec, feasibility_grid(unicycle, unicycle_cbf, spec, SolverConfig())


def test_appendix_example_exact_values():
    t0 = time.perf_counter()
    result = appendix_example()
    assert time.perf_counter() - t0 < 1.0
    assert result.verdict_pair == ("feasible", "infeasible")
    np.testing.assert_allclose(result.witness_controls.ravel(), [1.5, 0.0], atol=0)
    np.testing.assert_allclose(result.witness_states[:, 0], [0.1, 0.15, 0.95], atol=1e-12)
    np.testing.assert_allclose(result.witness_states[:, 1], [-0.7, 0.8, 0.8], atol=1e-12)
    assert result.transient_distance == pytest.approx(0.15, abs=1e-12)
    assert result.terminal_barrier == pytest.approx(0.75, abs=1e-12)
    assert result.dtcbf_required_first_push == pytest.approx(0.8, abs=1e-12)
    assert result.dtcbf_margin == pytest.approx(0.05, abs=1e-6)
    # the velocity box changes neither verdict (witness u0 = 1.45 still works)
    assert result.with_velocity_bound["mci_status"] == "feasible"
    assert result.with_velocity_bound["dtcbf_status"] == "infeasible"


def test_grid_monotone_in_horizon(small_grid):
    spec, res = small_grid
    v2, v6 = res.verdicts[2], res.verdicts[6]
    solved = (v2 >= 0) & (v6 >= 0)
    assert not np.any((v2 == 1) & solved & (v6 == 0))


def test_grid_obstacle_interior_infeasible(small_grid):
    spec, res = small_grid
    inside = res.states[:, 0] ** 2 + res.states[:, 1] ** 2 < 1.0
    for n in spec.horizons:
        assert np.all(res.verdicts[n][inside] == 0)


def test_nmpc_grid_invariant_and_dominated(small_grid, small_nmpc_grid):
    _, mci = small_grid
    spec, nmpc = small_nmpc_grid
    np.testing.assert_array_equal(nmpc.verdicts[2], nmpc.verdicts[6])
    # the safe-set membership test puts the NMPC region inside MCI at N=2
    assert not np.any((nmpc.verdicts[2] == 1) & (mci.verdicts[2] == 0))


def test_nmpc_grid_matches_safe_set(small_nmpc_grid, unicycle_cbf):
    spec, res = small_nmpc_grid
    expected = unicycle_cbf.barrier_sq_many(res.states) >= 0
    np.testing.assert_array_equal(res.verdicts[2] == 1, expected)


def test_grid_summary_and_csv(tmp_path, small_grid):
    spec, res = small_grid
    s = res.summary()
    assert s["points"] == 144
    for n in spec.horizons:
        assert (
            s["horizons"][str(n)]["feasible_count"] + s["horizons"][str(n)]["infeasible_count"]
            + s["horizons"][str(n)]["failure_count"]
            == 144
        )
    path = tmp_path / "grid.csv"
    res.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "case,variant,N,ix,iy,x,y,verdict,max_violation,solve_ms"
    assert len(lines) == 1 + 144 * len(spec.horizons)
    row = lines[1].split(",")
    assert row[0] == "case1" and row[1] == "MPC_MCI"


def test_grid_deterministic_modulo_timing(tmp_path, unicycle, unicycle_cbf):
    spec = GridSpec(nx=6, ny=6, horizons=(2,), variant="MPC_MCI", label="case1", **CASE_PRESETS[1])
    a = feasibility_grid(unicycle, unicycle_cbf, spec, SolverConfig())
    b = feasibility_grid(unicycle, unicycle_cbf, spec, SolverConfig())
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    a.to_csv(pa)
    b.to_csv(pb)

    def strip_ms(text):
        return ["," .join(line.split(",")[:-1]) for line in text.splitlines()]

    assert strip_ms(pa.read_text()) == strip_ms(pb.read_text())


def test_zero_duration_log_has_single_row(unicycle, unicycle_cbf):
    cfg = TrackingConfig(variant="MPC_MCI", horizon=5, duration=0.0)
    log = run_receding_horizon(unicycle, unicycle_cbf, cfg, SolverConfig())
    assert log.t.shape == (1,)
    assert log.states.shape == (1, 5)
    assert log.controls.shape == (0, 2)
    np.testing.assert_array_equal(log.states[0], cfg.x0)


def test_short_mci_run_safe_and_warm_feasible(unicycle, unicycle_cbf):
    cfg = TrackingConfig(variant="MPC_MCI", horizon=8, duration=0.6)
    log = run_receding_horizon(unicycle, unicycle_cbf, cfg, SolverConfig(tol_feas=1e-8))
    assert np.all(log.d >= -1e-6)
    warm = log.warm_violation[~np.isnan(log.warm_violation)]
    assert warm.size == log.n_steps - 1
    assert np.all(warm <= 1e-6)
    assert log.fallback.sum() == 0


def test_short_nmpc_run_stays_in_safe_set(unicycle, unicycle_cbf):
    cfg = TrackingConfig(variant="NMPC_DCBF", horizon=8, duration=0.6)
    log = run_receding_horizon(unicycle, unicycle_cbf, cfg, SolverConfig(tol_feas=1e-8))
    assert np.all(log.h >= -1e-6)


def test_tracking_csv_schema(tmp_path, unicycle, unicycle_cbf):
    cfg = TrackingConfig(variant="MPC_MCI", horizon=5, duration=0.2)
    log = run_receding_horizon(unicycle, unicycle_cbf, cfg, SolverConfig())
    path = tmp_path / "track.csv"
    log.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,x,y,theta,v,omega,a,alpha,status,h,d,ref_x,ref_y,err"
    assert len(lines) == 1 + log.t.size
    assert lines[-1].split(",")[8] == "end"


def test_reachability_far_state_all_members(unicycle, unicycle_cbf):
    report = reachability_probe(
        unicycle,
        unicycle_cbf,
        np.array([2.4, 2.4, 0.0, 0.0, 0.0]),
        horizons=(1,),
        u_grid=5,
        nmpc_pairs=((1, 1),),
        solver_cfg=SolverConfig(),
    )
    assert report.mci[1].all()
    assert report.nmpc[(1, 1)].all()
    assert report.mci1_equals_nmpc11()


def test_reachability_inclusion_and_equalities(unicycle, unicycle_cbf):
    report = reachability_probe(
        unicycle,
        unicycle_cbf,
        np.array([-1.5, 0.0, 0.0, 1.0, 0.0]),
        horizons=(1, 2),
        u_grid=5,
        nmpc_pairs=((1, 1), (2, 2)),
        solver_cfg=SolverConfig(),
    )
    assert report.missing_points(1, 2).size == 0
    assert report.nmpc_bitmaps_identical()
    assert report.mci1_equals_nmpc11()
    assert report.failures == 0
    # the boundary start has mixed membership
    assert 0 < report.mci[1].sum() < report.mci[1].size


def test_reachability_csv(tmp_path, unicycle, unicycle_cbf):
    report = reachability_probe(
        unicycle,
        unicycle_cbf,
        np.array([2.4, 2.4, 0.0, 0.0, 0.0]),
        horizons=(1,),
        u_grid=3,
        nmpc_pairs=((1, 1),),
        solver_cfg=SolverConfig(),
    )
    path = tmp_path / "reach.csv"
    report.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("variant,N,M,iu1,iu2,u1,u2,x1_0")
    assert len(lines) == 1 + 2 * 9


def test_reachability_requires_collision_free_start(unicycle, unicycle_cbf):
    with pytest.raises(ValueError):
        reachability_probe(unicycle, unicycle_cbf, np.array([0.1, 0.0, 0.0, 0.0, 0.0]))


def test_circle_reference_loop():
    ref = CircleReference(1.1, 10.0)
    np.testing.assert_allclose(ref(0.0), [1.1, 0.0], atol=1e-12)
    np.testing.assert_allclose(ref(2.5), [0.0, 1.1], atol=1e-12)
    np.testing.assert_allclose(ref(10.0), ref(0.0), atol=1e-12)


def test_tracking_config_validation():
    with pytest.raises(ValueError):
        TrackingConfig(r_r=0.0)
    with pytest.raises(ValueError):
        TrackingConfig(duration=-1.0)


def test_summary_json_and_hash(tmp_path):
    spec = GridSpec(nx=4, ny=4)
    assert config_hash(spec) == config_hash(GridSpec(nx=4, ny=4))
    assert config_hash(spec) != config_hash(GridSpec(nx=5, ny=4))
    path = tmp_path / "summary.json"
    write_summary(path, spec, ["a.csv"], {"answer": 42})
    doc = json.loads(path.read_text())
    assert doc["answer"] == 42
    assert doc["artifacts"] == ["a.csv"]
    assert doc["config_hash"] == config_hash(spec)
