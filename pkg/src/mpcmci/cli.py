"""Command-line entry point wiring configs to the experiment drivers.

Subcommands: ``feasibility``, ``track``, ``reach``, ``appendix``, ``check``.
Settings come from an optional YAML config file plus flag overrides (flags
win).  Every run writes its CSV artifacts next to a summary JSON that names
the config hash and artifact paths.  Exit codes: 0 success, 1 validation
error, 2 driver failure, 3 property-check violation.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import analysis, safety as safety_mod
from .analysis import (
    CASE_PRESETS,
    GridSpec,
    TrackingConfig,
    appendix_example,
    feasibility_grid,
    reachability_probe,
    run_receding_horizon,
    write_summary,
)
from .dynamics import PLANT_REGISTRY, make_plant
from .ocp import CostSpec, FormulationParams, build_problem, start_from_controls
from .safety import (
    check_cbf_descent,
    check_compatibility,
    default_unicycle_region,
    report_to_csv,
    sample_states,
    unicycle_safety,
)
from .solver import SolverConfig, check_derivatives

__all__ = ["main", "RunConfig", "ValidationError"]

COMMANDS = ("feasibility", "track", "reach", "appendix", "check")

VARIANT_ALIASES = {
    "mpc": "MPC",
    "nmpc-dcbf": "NMPC_DCBF",
    "dtcbf-mpc": "DTCBF_MPC",
    "mpc-mci": "MPC_MCI",
}

# allowed config keys per section, with defaults
_SCHEMA = {
    "": {
        "plant": "unicycle5d",
        "variant": "mpc-mci",
        "output_dir": "out",
        "seed": 0,
        "jobs": 1,
    },
    "solver": {
        "tol_feas": 1e-6,
        "tol_opt": 1e-4,
        "max_outer_iters": 50,
        "max_inner_iters": 200,
        "penalty_init": 10.0,
        "penalty_growth": 10.0,
        "fd_step": 1e-6,
    },
    "grid": {
        "case": None,
        "nx": 100,
        "ny": 100,
        "x_range": [-2.5, 2.5],
        "y_range": [-2.5, 2.5],
        "theta": 0.0,
        "v": 1.0,
        "omega": 0.0,
        "horizons": [2, 6, 11, 16, 21],
        "gamma": 0.2,
    },
    "tracking": {
        "horizon": 30,
        "duration": 20.0,
        "x0": [-2.0, -2.0, 0.0, 0.0, 0.0],
        "r_r": 1.1,
        "t_r": 10.0,
        "gamma": 0.2,
        "slack": True,
        "tol_feas": 1e-8,
        "pos_weight": 10.0,
        "ctrl_weight": 1.0,
        "terminal_weight": 10.0,
        "slack_weight": 100.0,
    },
    "reach": {
        "x0": [-1.5, 0.0, 0.0, 1.0, 0.0],
        "horizons": [1, 2, 3, 5, 6],
        "nu": 11,
        "nmpc_pairs": [[1, 1], [6, 6], [11, 11]],
        "gamma": 0.2,
    },
    "check": {
        "samples": 10000,
        "points": 20,
        "tol": 1e-9,
    },
}


class ValidationError(Exception):
    pass


@dataclass
class RunConfig:
    """Validated run configuration: command plus merged nested settings."""

    command: str
    settings: dict = field(default_factory=dict)

    @property
    def plant_name(self) -> str:
        return self.settings["plant"]

    @property
    def variant(self) -> str:
        name = self.settings["variant"]
        if name not in VARIANT_ALIASES:
            raise ValidationError(
                f"unknown variant {name!r}; known: {sorted(VARIANT_ALIASES)}"
            )
        return VARIANT_ALIASES[name]

    def solver_config(self, **overrides) -> SolverConfig:
        merged = dict(self.settings["solver"], **overrides)
        return SolverConfig(**merged)


def _validate_section(name: str, given: dict) -> dict:
    allowed = _SCHEMA[name]
    out = dict(allowed)
    for key, value in given.items():
        if name == "" and key in _SCHEMA and key != "":
            continue  # nested section, handled separately
        if key not in allowed:
            where = f"section {name!r}" if name else "top level"
            raise ValidationError(f"unknown config key {key!r} at {where}")
        out[key] = value
    return out


def load_config(path: str | None, overrides: dict) -> dict:
    """Merge the YAML file (if any), schema defaults, and flag overrides."""
    raw = {}
    if path:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ValidationError("config file must hold a mapping")
    settings = _validate_section("", raw)
    for section in ("solver", "grid", "tracking", "reach", "check"):
        sub = raw.get(section, {})
        if not isinstance(sub, dict):
            raise ValidationError(f"config section {section!r} must be a mapping")
        settings[section] = _validate_section(section, sub)
    for dotted, value in overrides.items():
        if value is None:
            continue
        if "." in dotted:
            section, key = dotted.split(".", 1)
            settings[section][key] = value
        else:
            settings[dotted] = value
    return settings


def _parse_floats(text: str) -> list:
    return [float(tok) for tok in text.replace(" ", "").split(",") if tok]


def _parse_ints(text: str) -> list:
    return [int(tok) for tok in text.replace(" ", "").split(",") if tok]


def _mk_plant_and_safety(cfg: RunConfig):
    name = cfg.plant_name
    if name not in PLANT_REGISTRY:
        raise ValidationError(f"unknown plant {name!r}; known: {sorted(PLANT_REGISTRY)}")
    plant = make_plant(name)
    if name == "unicycle5d":
        return plant, unicycle_safety(plant)
    return plant, safety_mod.double_integrator_safety(plant)


# ---------------------------------------------------------------------------
# command handlers


def _cmd_feasibility(cfg: RunConfig) -> int:
    g = cfg.settings["grid"]
    case = g["case"]
    fixed = dict(fixed_theta=g["theta"], fixed_v=g["v"], fixed_omega=g["omega"])
    label = "custom"
    if case is not None:
        if int(case) not in CASE_PRESETS:
            raise ValidationError(f"unknown case {case!r}; known: {sorted(CASE_PRESETS)}")
        fixed = dict(CASE_PRESETS[int(case)])
        label = f"case{int(case)}"
    spec = GridSpec(
        x_range=tuple(g["x_range"]),
        y_range=tuple(g["y_range"]),
        nx=int(g["nx"]),
        ny=int(g["ny"]),
        horizons=tuple(int(n) for n in g["horizons"]),
        variant=cfg.variant,
        gamma=float(g["gamma"]),
        label=label,
        **fixed,
    )
    plant, safety = _mk_plant_and_safety(cfg)
    result = feasibility_grid(plant, safety, spec, cfg.solver_config(), jobs=int(cfg.settings["jobs"]))
    out = Path(cfg.settings["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    tag = f"feasibility_{label}_{cfg.settings['variant'].replace('-', '_')}"
    csv_path = out / f"{tag}.csv"
    result.to_csv(csv_path)
    write_summary(out / f"{tag}_summary.json", spec, [csv_path], result.summary())
    for n in spec.horizons:
        print(
            f"N={n}: feasible_fraction={result.feasible_fraction(n):.4f} "
            f"infeasible={result.infeasible_count(n)} failures={result.failure_count(n)}"
        )
    print(f"wrote {csv_path}")
    return 0


def _cmd_track(cfg: RunConfig) -> int:
    t = cfg.settings["tracking"]
    cost = CostSpec(
        stage_pos_weight=float(t["pos_weight"]),
        stage_ctrl_weight=float(t["ctrl_weight"]),
        terminal_weight=float(t["terminal_weight"]),
        slack_weight=float(t["slack_weight"]),
        reference=analysis.CircleReference(float(t["r_r"]), float(t["t_r"])),
    )
    tracking = TrackingConfig(
        variant=cfg.variant,
        horizon=int(t["horizon"]),
        r_r=float(t["r_r"]),
        t_r=float(t["t_r"]),
        duration=float(t["duration"]),
        x0=tuple(float(v) for v in t["x0"]),
        cost=cost,
        gamma=float(t["gamma"]),
        slack_enabled=bool(t["slack"]),
    )
    plant, safety = _mk_plant_and_safety(cfg)
    log = run_receding_horizon(
        plant, safety, tracking, cfg.solver_config(tol_feas=float(t["tol_feas"]))
    )
    out = Path(cfg.settings["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    tag = f"tracking_{cfg.settings['variant'].replace('-', '_')}_N{tracking.horizon}"
    csv_path = out / f"{tag}.csv"
    log.to_csv(csv_path)
    write_summary(out / f"{tag}_summary.json", tracking, [csv_path], log.summary())
    s = log.summary()
    print(
        f"steps={s['steps']} min_d={s['min_d']:.4g} min_h={s['min_h']:.4g} "
        f"mean_err={s['mean_err']:.4g} fallback_steps={s['fallback_steps']}"
    )
    print(f"wrote {csv_path}")
    return 0


def _cmd_reach(cfg: RunConfig) -> int:
    r = cfg.settings["reach"]
    plant, safety = _mk_plant_and_safety(cfg)
    report = reachability_probe(
        plant,
        safety,
        np.asarray([float(v) for v in r["x0"]]),
        horizons=tuple(int(n) for n in r["horizons"]),
        u_grid=int(r["nu"]),
        solver_cfg=cfg.solver_config(),
        nmpc_pairs=tuple((int(a), int(b)) for a, b in r["nmpc_pairs"]),
        gamma=float(r["gamma"]),
    )
    out = Path(cfg.settings["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "reachability.csv"
    report.to_csv(csv_path)
    horizons = sorted(report.mci)
    inclusions = {
        f"{a}->{b}": int(report.missing_points(a, b).size)
        for a, b in zip(horizons[:-1], horizons[1:])
    }
    payload = {
        "mci_members": {str(n): int(m.sum()) for n, m in report.mci.items()},
        "nmpc_members": {f"{k[0]},{k[1]}": int(m.sum()) for k, m in report.nmpc.items()},
        "missing_in_larger": inclusions,
        "nmpc_bitmaps_identical": report.nmpc_bitmaps_identical(),
        "failures": report.failures,
    }
    write_summary(out / "reachability_summary.json", r, [csv_path], payload)
    print(f"inclusion misses: {inclusions}; nmpc identical: {report.nmpc_bitmaps_identical()}")
    print(f"wrote {csv_path}")
    return 0


def _cmd_appendix(cfg: RunConfig) -> int:
    result = appendix_example(cfg.solver_config())
    out = Path(cfg.settings["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "verdicts": list(result.verdict_pair),
        "witness_controls": result.witness_controls,
        "witness_states": result.witness_states,
        "transient_distance": result.transient_distance,
        "terminal_barrier": result.terminal_barrier,
        "dtcbf_required_first_push": result.dtcbf_required_first_push,
        "dtcbf_margin": result.dtcbf_margin,
        "with_velocity_bound": result.with_velocity_bound,
    }
    write_summary(out / "appendix_summary.json", {"command": "appendix"}, [], payload)
    print(f"verdicts: distance+terminal-CBF={result.mci_status}, two-step-CBF={result.dtcbf_status}")
    print(
        f"witness controls {result.witness_controls.ravel().tolist()} -> positions "
        f"{result.witness_states[:, 0].tolist()}; d(x1)={result.transient_distance:.6g}, "
        f"h(x2)={result.terminal_barrier:.6g}"
    )
    print(
        f"two-step CBF needs u0/2 >= {result.dtcbf_required_first_push:.6g}; "
        f"best shortfall {result.dtcbf_margin:.6g}"
    )
    return 0


def _cmd_check(cfg: RunConfig) -> int:
    c = cfg.settings["check"]
    plant, safety = _mk_plant_and_safety(cfg)
    seed = int(cfg.settings["seed"])
    n = int(c["samples"])
    tol = float(c["tol"])
    if plant.name == "unicycle5d":
        region = default_unicycle_region()
    else:
        region = np.array([[-1.0, 3.0], [-0.5 * plant.bounds.upper[0], 0.5 * plant.bounds.upper[0]]])
    states = sample_states(region, n, seed=seed)
    descent = check_cbf_descent(safety, plant, states, tol=tol)
    compat = check_compatibility(safety, states, tol=tol)

    scfg = cfg.solver_config()
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for i in range(int(c["points"])):
        variant = ["MPC_MCI", "NMPC_DCBF"][i % 2]
        while True:
            x0 = sample_states(region, 1, seed=int(rng.integers(2**31)))[0]
            if safety.distance(x0) >= 0:
                break
        params = FormulationParams(variant, 4, gamma=0.2, slack_enabled=(variant == "NMPC_DCBF"))
        ref = analysis.CircleReference()
        problem = build_problem(plant, safety, CostSpec(reference=ref if plant.n_pos == 2 else None), params, x0)
        controls = rng.uniform(plant.bounds.lower, plant.bounds.upper, (4, plant.control_dim))
        z = start_from_controls(problem, controls).values
        z = z + 0.01 * rng.standard_normal(z.size)
        report = check_derivatives(problem, z, scfg)
        worst = max(worst, report.max_discrepancy)

    out = Path(cfg.settings["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    report_to_csv(descent, out / "check_descent.csv")
    report_to_csv(compat, out / "check_compatibility.csv")
    payload = {
        "samples": n,
        "descent_violations": len(descent.violations),
        "descent_max": descent.max_descent_violation,
        "compatibility_violations": len(compat.violations),
        "compatibility_max": compat.max_descent_violation,
        "derivative_points": int(c["points"]),
        "derivative_max_discrepancy": worst,
    }
    write_summary(
        out / "check_summary.json",
        c,
        [out / "check_descent.csv", out / "check_compatibility.csv"],
        payload,
    )
    ok = not descent.violations and not compat.violations and worst <= 1e-5
    print(
        f"descent violations: {len(descent.violations)} (max {descent.max_descent_violation:.3g}); "
        f"compatibility violations: {len(compat.violations)} (max {compat.max_descent_violation:.3g}); "
        f"derivative max discrepancy: {worst:.3g}"
    )
    return 0 if ok else 3


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpcmci",
        description="Safety-critical MPC experiments: feasibility grids, tracking, reachability.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--output-dir", default=None)
        p.add_argument("--plant", default=None)
        p.add_argument("--variant", default=None, choices=sorted(VARIANT_ALIASES))
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tol-feas", type=float, default=None)
        p.add_argument("--gamma", type=float, default=None)
        if name == "feasibility":
            p.add_argument("--case", type=int, default=None, choices=sorted(CASE_PRESETS))
            p.add_argument("--horizons", default=None, help="comma separated ladder")
            p.add_argument("--nx", type=int, default=None)
            p.add_argument("--ny", type=int, default=None)
        if name == "track":
            p.add_argument("--horizon", type=int, default=None)
            p.add_argument("--duration", type=float, default=None)
            p.add_argument("--x0", default=None, help="comma separated state")
        if name == "reach":
            p.add_argument("--x0", default=None, help="comma separated state")
            p.add_argument("--horizons", default=None, help="comma separated ladder")
            p.add_argument("--nu", type=int, default=None, help="control grid size per dim")
        if name == "check":
            p.add_argument("--samples", type=int, default=None)
            p.add_argument("--points", type=int, default=None)
    return parser


def _overrides_from_args(args: argparse.Namespace) -> dict:
    over = {
        "output_dir": args.output_dir,
        "plant": args.plant,
        "variant": args.variant,
        "jobs": args.jobs,
        "seed": args.seed,
        "solver.tol_feas": args.tol_feas,
    }
    cmd = args.command
    if cmd == "feasibility":
        over.update(
            {
                "grid.case": args.case,
                "grid.gamma": args.gamma,
                "grid.nx": args.nx,
                "grid.ny": args.ny,
                "grid.horizons": _parse_ints(args.horizons) if args.horizons else None,
            }
        )
    elif cmd == "track":
        over.update(
            {
                "tracking.gamma": args.gamma,
                "tracking.horizon": args.horizon,
                "tracking.duration": args.duration,
                "tracking.x0": _parse_floats(args.x0) if args.x0 else None,
                "tracking.tol_feas": args.tol_feas,
            }
        )
    elif cmd == "reach":
        over.update(
            {
                "reach.gamma": args.gamma,
                "reach.x0": _parse_floats(args.x0) if args.x0 else None,
                "reach.horizons": _parse_ints(args.horizons) if args.horizons else None,
                "reach.nu": args.nu,
            }
        )
    elif cmd == "check":
        over.update({"check.samples": args.samples, "check.points": args.points})
    return over


_HANDLERS = {
    "feasibility": _cmd_feasibility,
    "track": _cmd_track,
    "reach": _cmd_reach,
    "appendix": _cmd_appendix,
    "check": _cmd_check,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        settings = load_config(args.config, _overrides_from_args(args))
        cfg = RunConfig(args.command, settings)
        cfg.variant  # validate the alias early
        cfg.solver_config()
        if cfg.plant_name not in PLANT_REGISTRY:
            raise ValidationError(
                f"unknown plant {cfg.plant_name!r}; known: {sorted(PLANT_REGISTRY)}"
            )
    except (ValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _HANDLERS[args.command](cfg)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # driver failure
        print(f"driver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
