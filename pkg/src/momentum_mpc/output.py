"""Run artifacts: the per-tick CSV, a JSON summary and SVG figures.

CSV floats are written with ``repr`` precision so that two runs with the
same configuration produce identical bytes. Wall-clock solve times would
break that, so ``solve_ms`` is written as ``nan`` unless timing is asked for.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .contact_constraints import FootParams, foot_corners
from .sim_harness import RunLog

CSV_SCHEMA = "momentum-mpc-run/1"

_STATE_COLUMNS = ["com_x", "com_y", "com_z", "vx", "vy", "vz", "hx", "hy", "hz"]
_WRENCH_AXES = ["fx", "fy", "fz", "tx", "ty", "tz"]


def csv_columns() -> list[str]:
    cols = ["t", *_STATE_COLUMNS]
    for kind in ("cmd", "real"):
        cols += [f"{kind}_{foot}_{ax}" for foot in ("fl", "fr") for ax in _WRENCH_AXES]
    return cols + ["k_impact", "trigger", "solve_ms", "solve_iters"]


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(log: RunLog, path, log_timing: bool = False) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_columns())
        for i in range(len(log)):
            ms = log.solve_ms[i] if log_timing else math.nan
            w.writerow(
                [_fmt(log.time[i])]
                + [_fmt(v) for v in log.gamma[i]]
                + [_fmt(v) for v in log.commanded[i]]
                + [_fmt(v) for v in log.realized[i]]
                + [int(log.k_impact[i]), int(bool(log.trigger[i])), _fmt(ms), int(log.solve_iters[i])]
            )
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns of a run CSV as float arrays keyed by name."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: data[:, j] for j, name in enumerate(header)}


def write_summary(log: RunLog, path, scenario: str = "", extra: dict | None = None) -> Path:
    summary = {"scenario": scenario, "csv_schema": CSV_SCHEMA, **log.summary(), **(extra or {})}
    path = Path(path)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return path


# -- figures -------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed id salt keeps the SVG text stable between runs
    matplotlib.rcParams["svg.hashsalt"] = "momentum-mpc"
    return plt


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def _foot_patch(ax, position, params: FootParams, **style):
    corners = foot_corners(position, params)
    closed = np.vstack([corners, corners[:1]])
    ax.plot(closed[:, 0], closed[:, 1], **style)


def plot_com_xy(log: RunLog, path) -> Path:
    plt = _pyplot()
    params = FootParams(foot_half_length=log.foot_half_length, foot_half_width=log.foot_half_width)
    fig, ax = plt.subplots(figsize=(5, 5))
    _foot_patch(ax, log.left_foot[0], params, color="0.3", lw=1.0, label="left foot")
    landed = np.flatnonzero(log.right_contact)
    if landed.size:
        _foot_patch(ax, log.right_foot[landed[-1]], params, color="tab:orange", lw=1.0, label="right foot")
    ax.plot(log.gamma[:, 0], log.gamma[:, 1], "-", color="tab:blue", marker="." if len(log) == 1 else None,
            label="CoM")
    trig = np.flatnonzero(log.trigger)
    if trig.size:
        ax.plot(log.gamma[trig, 0], log.gamma[trig, 1], "x", color="tab:red", label="step trigger")
    c = log.final_centroid()
    ax.plot([c[0]], [c[1]], "+", color="k", label="final support centroid")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    out = _save(fig, Path(path))
    plt.close(fig)
    return out


def plot_com_z(log: RunLog, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(log.time, log.gamma[:, 2], marker="." if len(log) == 1 else None)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("CoM height [m]")
    fig.tight_layout()
    out = _save(fig, Path(path))
    plt.close(fig)
    return out


def plot_forces_z(log: RunLog, path) -> Path:
    """Vertical forces per foot; solid commanded, dashed realized."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3))
    marker = "." if len(log) == 1 else None
    for idx, name, color in ((2, "left", "tab:blue"), (8, "right", "tab:orange")):
        ax.plot(log.time, log.commanded[:, idx], "-", color=color, marker=marker, label=f"{name} commanded")
        ax.plot(log.time, log.realized[:, idx], "--", color=color, marker=marker, label=f"{name} realized")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("normal force [N]")
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    out = _save(fig, Path(path))
    plt.close(fig)
    return out


def plot_trigger_timeline(log: RunLog, path) -> Path:
    plt = _pyplot()
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 4), sharex=True)
    marker = "." if len(log) == 1 else None
    ax1.step(log.time, log.trigger.astype(int), where="post", marker=marker, label="trigger")
    ax1.step(log.time, log.right_contact.astype(int), where="post", marker=marker, label="right contact")
    ax1.set_yticks([0, 1])
    ax1.legend(loc="best", fontsize="small")
    k = np.where(log.k_impact >= 0, log.k_impact.astype(float), np.nan)
    ax2.step(log.time, k, where="post", marker=marker)
    ax2.set_ylabel("k_impact")
    ax2.set_xlabel("t [s]")
    fig.tight_layout()
    out = _save(fig, Path(path))
    plt.close(fig)
    return out


PLOTS = {
    "com_xy": plot_com_xy,
    "com_z": plot_com_z,
    "forces_z": plot_forces_z,
    "trigger_timeline": plot_trigger_timeline,
}


def emit_plots(log: RunLog, out_dir, toggles=None) -> list[Path]:
    """Write the enabled figures as ``<name>.svg``; returns the written paths.

    ``toggles`` maps figure names to booleans (a ``PlotConfig`` works too);
    missing names default to on.
    """
    if len(log) == 0:
        raise ValueError("cannot plot an empty run log")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, fn in PLOTS.items():
        on = getattr(toggles, name, True) if not isinstance(toggles, dict) else toggles.get(name, True)
        if on:
            written.append(fn(log, out_dir / f"{name}.svg"))
    return written
