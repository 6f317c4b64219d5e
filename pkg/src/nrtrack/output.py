"""CSV/SVG emission for simulation traces."""
from __future__ import annotations

import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .planner import lateral_offset, road_arc_length  # noqa: E402
from .simulate import Metrics, SimTrace  # noqa: E402


def _per_vehicle(trace: SimTrace):
    for vid in trace.vehicle_ids():
        sel = trace.rows_for(vid)
        yield vid, sel


def _figure(title, xlabel, ylabel):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, ax, path, legend):
    if legend and ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit_plots(trace: SimTrace, out_dir, geometry=None) -> list:
    """Write the standard figure set as standalone SVG files.

    Returns the list of written paths.  An empty trace yields empty axes.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    is_lead = trace.has_flag("lead") if len(trace) else np.zeros(0, bool)
    err = trace.tracking_error() if len(trace) else np.zeros(0)
    if geometry is not None and len(trace):
        s = np.array([road_arc_length(a, b, geometry) for a, b in
                      zip(trace.column("z1"), trace.column("z2"))])
        lat = np.array([lateral_offset(a, b, geometry) for a, b in
                        zip(trace.column("z1"), trace.column("z2"))])
    else:
        s = trace.column("z1") if len(trace) else np.zeros(0)
        lat = trace.column("z2") if len(trace) else np.zeros(0)

    series = [
        ("distance_traveled", "Distance traveled", "t (s)", "s (m)",
         lambda sel: s[sel], False),
        ("tracking_error", "Tracking error", "t (s)", "error (m)",
         lambda sel: err[sel], True),
        ("longitudinal_accel", "Longitudinal acceleration", "t (s)",
         "a_l (m/s^2)", lambda sel: trace.column("a_l")[sel], False),
        ("speeds", "Longitudinal speed", "t (s)", "v_l (m/s)",
         lambda sel: trace.column("v_l")[sel], False),
        ("lateral_deviation", "Lateral deviation from lane center", "t (s)",
         "y (m)", lambda sel: lat[sel], True),
        ("steering_angle", "Steering angle", "t (s)", "delta_f (rad)",
         lambda sel: trace.column("delta_f")[sel], True),
    ]
    for name, title, xl, yl, getter, skip_lead in series:
        fig, ax = _figure(title, xl, yl)
        for vid, sel in _per_vehicle(trace):
            if skip_lead and is_lead[sel].any():
                continue
            ax.plot(trace.t[sel], getter(sel), label=f"car {vid}", lw=1.0)
        path = out_dir / f"{name}.svg"
        _save(fig, ax, path, legend=True)
        written.append(path)

    # inter-vehicle distance: consecutive pairs on the common time grid
    fig, ax = _figure("Inter-vehicle distance", "t (s)", "distance (m)")
    vids = trace.vehicle_ids()
    for va, vb in zip(vids, vids[1:]):
        sa = trace.rows_for(va)
        sb = trace.rows_for(vb)
        common, ia, ib = np.intersect1d(trace.t[sa], trace.t[sb],
                                        return_indices=True)
        if len(common) == 0:
            continue
        d = np.hypot(trace.column("z1")[sa][ia] - trace.column("z1")[sb][ib],
                     trace.column("z2")[sa][ia] - trace.column("z2")[sb][ib])
        ax.plot(common, d, label=f"cars {va}-{vb}", lw=1.0)
    path = out_dir / "separation.svg"
    _save(fig, ax, path, legend=True)
    written.append(path)
    return written


def emit_outputs(trace: SimTrace, metrics: Metrics | None, out_dir,
                 geometry=None) -> dict:
    """Write trace.csv, metrics.json (when available) and the SVG figures.

    Returns a dict of the written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"trace": out_dir / "trace.csv"}
    trace.write_csv(paths["trace"])
    if metrics is not None:
        paths["metrics"] = out_dir / "metrics.json"
        paths["metrics"].write_text(json.dumps(metrics.to_dict(), indent=2)
                                    + "\n")
    paths["plots"] = emit_plots(trace, out_dir, geometry)
    return paths
