"""Figure rendering for sweep outputs.

Reads the median rows the sweep writes and renders the two summary
figures next to the CSVs. Kept separate from the cli module so the
library import path stays free of matplotlib.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

PC_FIGURE = "pc_ratio_vs_surfaces.png"
DENSITY_FIGURE = "peak_density_vs_surfaces.png"


def read_median_rows(path: str | Path) -> list[dict]:
    """Load sweep median rows, converting the numeric fields."""
    rows = []
    with Path(path).open(newline="") as fh:
        for raw in csv.DictReader(fh):
            rows.append({
                "surfaces": int(raw["surfaces"]),
                "aperture_m2": float(raw["aperture_m2"]),
                "power_A2": float(raw["power_A2"]),
                "n_seeds": int(raw["n_seeds"]),
                "pc_ratio_median": float(raw["pc_ratio_median"]),
                "peak_density_median": float(raw["peak_density_median"]),
                "density_ratio_median": float(raw["density_ratio_median"]),
            })
    return rows


def _series(rows: list[dict], ykey: str):
    # One line per (aperture, power) pair, points ordered by surface count.
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["aperture_m2"], row["power_A2"]), []).append(row)
    out = []
    for key in sorted(groups):
        pts = sorted(groups[key], key=lambda r: r["surfaces"])
        out.append((key, [p["surfaces"] for p in pts], [p[ykey] for p in pts]))
    return out


def _render(rows: list[dict], ykey: str, ylabel: str, title: str,
            path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for (aperture, power), xs, ys in _series(rows, ykey):
        ax.plot(xs, ys, marker="o",
                label=f"$A_T$={aperture:g} m$^2$, $P_t$={power:g} A$^2$")
    ax.set_xlabel("number of surfaces")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep_figures(rows: list[dict], out_dir: str | Path) -> list[Path]:
    """Render both sweep figures; returns the written paths."""
    out = Path(out_dir)
    pc_path = out / PC_FIGURE
    density_path = out / DENSITY_FIGURE
    _render(rows, "pc_ratio_median", "median consumed power / budget",
            "Consumed power ratio vs surface count", pc_path)
    _render(rows, "density_ratio_median",
            "median peak density / uniform-allocation mean",
            "Peak radiated density vs surface count", density_path)
    return [pc_path, density_path]
