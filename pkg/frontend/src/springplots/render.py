"""Figure rendering for trajectory and error-map CSV files.

A thin consumer of the simulation outputs: trajectory files hold one complex
three-component state per time sample, error maps hold one relative L2 error
per (p, T) grid cell and component.  Nothing is recomputed here; every number
in a figure comes from the CSV.  Rendering is deterministic so repeated runs
produce byte-identical image files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import LogNorm, Normalize

TRAJECTORY_COLUMNS = ("t", "re_x", "im_x", "re_y", "im_y", "re_z", "im_z")
ERROR_MAP_COLUMNS = (
    "p",
    "T",
    "err_x",
    "err_y",
    "err_z",
    "status",
    "accepted_steps",
    "rejected_steps",
)
COMPONENTS = ("x", "y", "z")
FIGURE_KINDS = ("xy-projection", "timeseries", "heatmap")

FAILED_CELL_COLOR = "0.55"  # neutral grey sentinel for blown-up sweep cells


class SchemaError(ValueError):
    """Input file does not match the expected column schema."""

    def __init__(self, path, expected, found):
        missing = [c for c in expected if c not in found]
        unexpected = [c for c in found if c not in expected]
        parts = [f"{path}: columns do not match the expected schema"]
        if missing:
            parts.append(f"missing: {', '.join(missing)}")
        if unexpected:
            parts.append(f"unexpected: {', '.join(unexpected)}")
        super().__init__("; ".join(parts))
        self.missing = missing
        self.unexpected = unexpected


class EmptyInputError(ValueError):
    """Input file has a header but no data rows."""


@dataclass
class FigureSpec:
    """One figure: what to draw, from which files, to which image path."""

    kind: str
    inputs: Sequence[str]
    output: str
    component: str = "x"
    log_color: bool = True
    labels: Optional[Sequence[str]] = None

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; valid: {FIGURE_KINDS}")
        if self.component not in COMPONENTS:
            raise ValueError(f"unknown component {self.component!r}; valid: {COMPONENTS}")
        if not self.inputs:
            raise ValueError("at least one input file is required")


def _read_rows(path, expected):
    with open(path, "r", encoding="utf-8") as fh:
        header = tuple(fh.readline().strip().split(","))
        if header != tuple(expected):
            raise SchemaError(path, expected, header)
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    return rows


def load_trajectory(path):
    """Times and the six real trajectory columns, keyed by column name."""
    rows = _read_rows(path, TRAJECTORY_COLUMNS)
    data = np.array([[float(v) for v in row] for row in rows])
    return data[:, 0], {name: data[:, i] for i, name in enumerate(TRAJECTORY_COLUMNS) if i}


def load_error_map(path):
    """Error map as dense (p, T) grids: errors per component plus an ok-mask."""
    rows = _read_rows(path, ERROR_MAP_COLUMNS)
    p_values = sorted({int(r[0]) for r in rows})
    T_values = sorted({float(r[1]) for r in rows})
    errors = np.full((3, len(p_values), len(T_values)), np.nan)
    ok = np.zeros((len(p_values), len(T_values)), dtype=bool)
    for r in rows:
        i = p_values.index(int(r[0]))
        j = T_values.index(float(r[1]))
        for c in range(3):
            errors[c, i, j] = float(r[2 + c])
        ok[i, j] = r[5] == "ok"
    return np.array(p_values), np.array(T_values), errors, ok


def _stem_labels(spec):
    if spec.labels:
        return list(spec.labels)
    return [Path(p).stem for p in spec.inputs]


def build_figure(spec: FigureSpec):
    """Create the matplotlib figure (separated from file writing for tests)."""
    labels = _stem_labels(spec)
    fig, ax = plt.subplots(figsize=(6.0, 4.5), dpi=120)
    if spec.kind == "xy-projection":
        for path, label in zip(spec.inputs, labels):
            _, cols = load_trajectory(path)
            ax.plot(cols["re_x"], cols["re_y"], lw=0.7, label=label)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal", adjustable="datalim")
        ax.legend(loc="upper right", fontsize=8)
    elif spec.kind == "timeseries":
        col = f"re_{spec.component}"
        for path, label in zip(spec.inputs, labels):
            t, cols = load_trajectory(path)
            ax.plot(t, cols[col], lw=0.8, label=label)
        ax.set_xlabel("t [s]")
        ax.set_ylabel(f"{spec.component} component")
        ax.legend(loc="upper right", fontsize=8)
    else:  # heatmap
        p_values, T_values, errors, ok = load_error_map(spec.inputs[0])
        comp = COMPONENTS.index(spec.component)
        grid = np.ma.masked_invalid(np.ma.masked_where(~ok, errors[comp]))
        if spec.log_color:
            positive = grid.compressed()
            positive = positive[positive > 0]
            if positive.size == 0:
                raise EmptyInputError(f"{spec.inputs[0]}: no positive error values to map")
            norm = LogNorm(vmin=positive.min(), vmax=positive.max())
        else:
            norm = Normalize(vmin=float(grid.min()), vmax=float(grid.max()))
        cmap = plt.get_cmap("viridis").copy()
        cmap.set_bad(FAILED_CELL_COLOR)
        mesh = ax.pcolormesh(
            np.arange(T_values.size + 1) - 0.5,
            np.arange(p_values.size + 1) - 0.5,
            grid,
            norm=norm,
            cmap=cmap,
            shading="flat",
        )
        ax.set_xticks(np.arange(T_values.size), [f"{T:g}" for T in T_values], fontsize=7)
        ax.set_yticks(np.arange(p_values.size), [str(p) for p in p_values], fontsize=8)
        ax.set_xlabel("averaging window T [s]")
        ax.set_ylabel("polynomial degree p")
        fig.colorbar(mesh, ax=ax, label=f"relative L2 error ({spec.component})")
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> str:
    """Render the figure to ``spec.output`` and return the path."""
    fig = build_figure(spec)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_kwargs = {}
    if out.suffix.lower() == ".png":
        save_kwargs["metadata"] = {"Software": None}
    try:
        fig.savefig(out, **save_kwargs)
    finally:
        plt.close(fig)
    return str(out)
