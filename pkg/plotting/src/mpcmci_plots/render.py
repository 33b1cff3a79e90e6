"""Render figures from mpcmci CSV artifacts.

Two figure kinds, selected with ``--kind``:

* ``feasibility_map``: a layered map of one grid CSV
  (``case,variant,N,ix,iy,x,y,verdict,max_violation,solve_ms``).  Each lattice
  point is colored by the smallest horizon at which it became feasible, so the
  regions gained by longer horizons stand out as bands; never-feasible points
  are dark, solver failures are hatched gray.  The obstacle disk is drawn on
  top.
* ``trajectory_overlay``: one or more tracking CSVs
  (``t,x,y,theta,v,omega,a,alpha,status,h,d,ref_x,ref_y,err``) drawn over the
  obstacle disk and the reference circle, with markers equally spaced in time
  (``--marker-dt`` seconds apart).

Defaults: viridis colors for the horizon layers, obstacle radius 1.0 (override
with ``--obstacle-radius``).  Rendering is read-only and deterministic: the
same inputs produce byte-identical PNGs.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib import colormaps
from matplotlib.patches import Circle, Patch

__all__ = ["FigureSpec", "render", "main"]

GRID_COLUMNS = ["case", "variant", "N", "ix", "iy", "x", "y", "verdict", "max_violation", "solve_ms"]
TRACK_COLUMNS = ["t", "x", "y", "theta", "v", "omega", "a", "alpha", "status", "h", "d", "ref_x", "ref_y", "err"]

KINDS = ("feasibility_map", "trajectory_overlay")


class SchemaError(Exception):
    pass


@dataclass(frozen=True)
class FigureSpec:
    input_csv: tuple
    figure_kind: str
    output: str
    marker_dt: float = 1.0
    cmap: str = "viridis"
    obstacle_radius: float = 1.0

    def __post_init__(self):
        paths = tuple(str(p) for p in (
            self.input_csv if isinstance(self.input_csv, (list, tuple)) else [self.input_csv]
        ))
        object.__setattr__(self, "input_csv", paths)
        if self.figure_kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.figure_kind!r}; known: {KINDS}")
        for p in paths:
            if not Path(p).exists():
                raise FileNotFoundError(p)


def _check_header(path, expected):
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise SchemaError(f"{path}: empty file, expected columns {expected}")
    missing = [c for c in expected if c not in header]
    extra = [c for c in header if c not in expected]
    if missing:
        raise SchemaError(
            f"{path}: missing columns {missing}" + (f", unexpected {extra}" if extra else "")
        )
    return header


def _read_rows(path, expected):
    _check_header(path, expected)
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# feasibility map


def _render_feasibility(spec: FigureSpec, ax):
    rows = _read_rows(spec.input_csv[0], GRID_COLUMNS)
    if not rows:
        ax.set_title("feasibility map (no data)")
        return
    horizons = sorted({int(r["N"]) for r in rows})
    nx = max(int(r["ix"]) for r in rows) + 1
    ny = max(int(r["iy"]) for r in rows) + 1
    xs = np.full(nx, np.nan)
    ys = np.full(ny, np.nan)
    # category per point: index of the first horizon at which it is feasible,
    # len(horizons) if never feasible, -1 for solver failures
    first_feasible = np.full((nx, ny), len(horizons))
    failed = np.zeros((nx, ny), dtype=bool)
    for r in rows:
        ix, iy = int(r["ix"]), int(r["iy"])
        xs[ix] = float(r["x"])
        ys[iy] = float(r["y"])
        k = horizons.index(int(r["N"]))
        if r["verdict"] == "feasible":
            first_feasible[ix, iy] = min(first_feasible[ix, iy], k)
        elif r["verdict"] == "failure":
            failed[ix, iy] = True

    cmap = colormaps[spec.cmap].resampled(len(horizons))
    colors = [cmap(i) for i in range(len(horizons))]
    img = np.zeros((nx, ny, 4))
    img[...] = (0.15, 0.15, 0.18, 1.0)  # never feasible
    for k in range(len(horizons) - 1, -1, -1):
        img[first_feasible <= k] = colors[k]
    for k in range(len(horizons)):
        img[first_feasible == k] = colors[k]
    img[failed] = (0.6, 0.6, 0.6, 1.0)
    extent = (xs[0], xs[-1], ys[0], ys[-1])
    ax.imshow(np.transpose(img, (1, 0, 2)), origin="lower", extent=extent, interpolation="nearest")
    ax.add_patch(Circle((0, 0), spec.obstacle_radius, fill=False, color="white", lw=1.5))
    handles = [
        Patch(color=colors[k], label=f"feasible from N={horizons[k]}") for k in range(len(horizons))
    ]
    handles.append(Patch(color=(0.15, 0.15, 0.18), label="infeasible"))
    ax.legend(handles=handles, loc="upper right", fontsize=7, framealpha=0.9)
    ax.set_title(f"{rows[0]['case']} {rows[0]['variant']}: feasible region by horizon")


# ---------------------------------------------------------------------------
# trajectory overlay


def _render_trajectories(spec: FigureSpec, ax):
    ax.add_patch(Circle((0, 0), spec.obstacle_radius, color="0.82", zorder=0))
    ax.add_patch(Circle((0, 0), spec.obstacle_radius, fill=False, color="0.3", lw=1.2, zorder=3))
    reach = 1.4 * spec.obstacle_radius
    drew_reference = False
    cmap = colormaps[spec.cmap].resampled(max(len(spec.input_csv), 2))
    for i, path in enumerate(spec.input_csv):
        rows = _read_rows(path, TRACK_COLUMNS)
        if not rows:
            continue
        t = np.array([float(r["t"]) for r in rows])
        x = np.array([float(r["x"]) for r in rows])
        y = np.array([float(r["y"]) for r in rows])
        reach = max(reach, float(np.abs(x).max()), float(np.abs(y).max()))
        if not drew_reference:
            rx = np.array([float(r["ref_x"]) for r in rows])
            ry = np.array([float(r["ref_y"]) for r in rows])
            r_ref = float(np.median(np.hypot(rx, ry)))
            ref_circle = Circle((0, 0), r_ref, fill=False, color="k", ls="--", lw=1.0, zorder=2)
            ax.add_patch(ref_circle)
            drew_reference = True
        dt = float(np.median(np.diff(t))) if t.size > 1 else 1.0
        every = max(int(round(spec.marker_dt / dt)), 1) if dt > 0 else 1
        ax.plot(
            x,
            y,
            color=cmap(i),
            lw=1.4,
            marker="o",
            markersize=3.5,
            markevery=every,
            label=Path(path).stem,
            zorder=4,
        )
    if drew_reference:
        ax.legend(loc="lower right", fontsize=7, framealpha=0.9)
    lim = 1.1 * reach
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_title("closed-loop trajectories (markers equally spaced in time)")


def render(spec: FigureSpec) -> str:
    """Render the figure and write the image; returns the output path."""
    fig, ax = plt.subplots(figsize=(5.2, 5.0), dpi=130)
    try:
        if spec.figure_kind == "feasibility_map":
            _render_feasibility(spec, ax)
        else:
            _render_trajectories(spec, ax)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal")
        fig.tight_layout()
        fig.savefig(spec.output, metadata={"Software": "mpcmci-plots"})
    finally:
        plt.close(fig)
    return spec.output


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mpcmci-plot", description="Render figures from mpcmci CSV artifacts."
    )
    parser.add_argument("--input", nargs="+", required=True, help="input CSV path(s)")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--output", required=True, help="image path (.png)")
    parser.add_argument("--marker-dt", type=float, default=1.0, help="marker spacing, seconds")
    parser.add_argument("--cmap", default="viridis")
    parser.add_argument("--obstacle-radius", type=float, default=1.0)
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(
            input_csv=tuple(args.input),
            figure_kind=args.kind,
            output=args.output,
            marker_dt=args.marker_dt,
            cmap=args.cmap,
            obstacle_radius=args.obstacle_radius,
        )
        render(spec)
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
