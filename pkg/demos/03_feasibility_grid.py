"""
Feasible-region growth with the prediction horizon
==================================================

Sweeps a coarse position lattice around the obstacle for both formulations.
The CBF-chain baseline's feasible fraction is pinned to the safe set and does
not move with the horizon; the terminal-constraint formulation keeps adding
newly feasible states. Writes the grid CSVs consumed by the plotting scripts.
"""

from pathlib import Path

from mpcmci import SolverConfig, make_unicycle, unicycle_safety
from mpcmci.analysis import CASE_PRESETS, GridSpec, feasibility_grid, write_summary

out = Path("out")
out.mkdir(exist_ok=True)
plant = make_unicycle()
safety = unicycle_safety(plant)

# 30x30 keeps this demo under a minute; raise nx/ny for table-quality numbers
for variant in ("NMPC_DCBF", "MPC_MCI"):
    spec = GridSpec(
        nx=30, ny=30, horizons=(2, 6, 11), variant=variant, label="case1", **CASE_PRESETS[1]
    )
    result = feasibility_grid(plant, safety, spec, SolverConfig())
    row = "  ".join(
        f"N={n}: {result.feasible_fraction(n):.4f}" for n in spec.horizons
    )
    print(f"{variant:10s} feasible fractions  {row}")
    csv_path = out / f"grid_case1_{variant.lower()}.csv"
    result.to_csv(csv_path)
    write_summary(out / f"grid_case1_{variant.lower()}_summary.json", spec, [csv_path],
                  result.summary())
    print(f"  wrote {csv_path}")
