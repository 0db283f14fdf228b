"""Deterministic SVG plot emission for experiment tables.

SVGs carry no timestamps and use a fixed hash salt, so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigurationError

PLOT_KINDS = ("front_trajectory", "loglog_scaling", "profile_snapshot")

_REQUIRED_COLUMNS = {
    "front_trajectory": ("time", "front_abs"),
    "loglog_scaling": ("epsilon", "V"),
    "profile_snapshot": ("x", "u"),
}


def _read_table(table_path, required) -> dict:
    with open(table_path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise ConfigurationError(f"table is missing required column {col!r}")
        cols = {name: [] for name in header}
        for row in reader:
            for name in header:
                cols[name].append(float(row[name]))
    return {name: np.asarray(vals) for name, vals in cols.items()}


def _new_figure():
    plt.rcParams["svg.hashsalt"] = "wavefront-lab"
    return plt.subplots(figsize=(6, 4))


def emit_plot(table_path, kind: str, out_path, p: float = 0.5) -> None:
    """Render one of the known plot kinds from a CSV table to SVG."""
    if kind not in PLOT_KINDS:
        raise ConfigurationError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    data = _read_table(table_path, _REQUIRED_COLUMNS[kind])
    fig, ax = _new_figure()
    try:
        if kind == "front_trajectory":
            if data["time"].size:
                ax.plot(data["time"], data["front_abs"], lw=1.0)
            ax.set_xlabel("t")
            ax.set_ylabel("R(t)")
        elif kind == "profile_snapshot":
            if data["x"].size:
                ax.plot(data["x"], data["u"], lw=1.0)
            ax.set_xlabel("x")
            ax.set_ylabel("u")
            ax.set_ylim(-0.05, 1.05)
        else:
            eps = data["epsilon"]
            V = data["V"]
            if eps.size:
                ax.loglog(eps, V, "o", label="measured")
                if "ci_low" in data and "ci_high" in data:
                    ax.vlines(eps, data["ci_low"], data["ci_high"], lw=1.0)
                le, lv = np.log(eps), np.log(V)
                if eps.size >= 2:
                    slope, intercept = np.polyfit(le, lv, 1)
                    ax.loglog(eps, np.exp(intercept + slope * le), "-", label=f"fit {slope:.3f}")
                ref = -2.0 * (1.0 - p) / (1.0 + p)
                anchor = lv.mean() - ref * le.mean()
                ax.loglog(eps, np.exp(anchor + ref * le), "--", label=f"reference {ref:.3f}")
                ax.legend()
            ax.set_xlabel("noise strength")
            ax.set_ylabel("front speed")
        fig.savefig(out_path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
