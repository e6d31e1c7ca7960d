"""
Static plots from trial logs.

Artists carry SVG group ids (``waypoints``, ``reference-path``,
``estimated-track``, ``truth-track``, ``estimated-axes``) so a saved figure can
be checked structurally.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .log import Trajectory, read_log  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "residock"

_SAVE = {"metadata": {"Date": None}}


def _records(log):
    return read_log(log) if isinstance(log, (str, Path)) else log


def _paths(records):
    """Distinct logged paths in order of first use."""
    seen = {}
    for r in records:
        if r.get("kind") == "path" and r["path"] not in seen:
            seen[r["path"]] = np.asarray(r["waypoints"], dtype=float)
    return seen


def trajectory_figure(log, axes_every=20.0):
    """Top view in tag*: reference paths, waypoints, truth and estimated tracks."""
    records = _records(log)
    traj = Trajectory.from_records(records)
    star = np.array([f == "TAG_STAR" for f in traj.frame], dtype=bool)
    fig, ax = plt.subplots(figsize=(7, 6))
    for name, wps in _paths(records).items():
        (line,) = ax.plot(wps[:, 1], wps[:, 0], "--", color="0.5", lw=1.0, label=f"{name} reference")
        line.set_gid("reference-path")
        pts = ax.scatter(wps[:, 1], wps[:, 0], marker="o", s=30, facecolor="none", edgecolor="C3")
        pts.set_gid("waypoints")
    if star.any():
        (truth,) = ax.plot(traj.truth_star[star, 1], traj.truth_star[star, 0], color="C0", lw=1.2, label="truth")
        truth.set_gid("truth-track")
        (est,) = ax.plot(traj.est[star, 1], traj.est[star, 0], color="C1", lw=1.0, label="estimate")
        est.set_gid("estimated-track")
        # heading ticks along the estimate
        t_star = traj.t[star]
        e = traj.est[star]
        if len(t_star):
            picks = np.unique(np.searchsorted(t_star, np.arange(t_star[0], t_star[-1] + 1e-9, axes_every)))
            picks = picks[picks < len(e)]
            u = np.cos(e[picks, 3]) * 0.3
            v = np.sin(e[picks, 3]) * 0.3
            q = ax.quiver(e[picks, 1], e[picks, 0], v, u, angles="xy", scale_units="xy", scale=1.0,
                          color="C1", width=0.004)
            q.set_gid("estimated-axes")
    ax.set_xlabel("y tag* (m, East)")
    ax.set_ylabel("x tag* (m, North)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(True, lw=0.3)
    ax.legend(loc="best", fontsize=8)
    return fig


def markers_figure(log):
    """Detected-marker count against time, with phase changes marked."""
    records = _records(log)
    traj = Trajectory.from_records(records)
    fig, ax = plt.subplots(figsize=(8, 3))
    (line,) = ax.step(traj.t, traj.markers, where="post", color="C2")
    line.set_gid("marker-count")
    for r in records:
        if r.get("kind") == "phase":
            ax.axvline(r["t"], color="0.7", lw=0.8)
            ax.text(r["t"], ax.get_ylim()[1], r["to"], rotation=90, fontsize=6, va="top")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("markers detected")
    return fig


def coverage_figure(counts, labels):
    """Detections along a survey path, coloured by segment."""
    fig, ax = plt.subplots(figsize=(8, 3))
    counts = np.asarray(counts)
    idx = np.arange(len(counts))
    for k, lab in enumerate(dict.fromkeys(labels)):
        sel = np.array([l == lab for l in labels])
        pts = ax.scatter(idx[sel], counts[sel], s=6, color=f"C{k}", label=lab)
        pts.set_gid(f"coverage-{lab}")
    ax.set_xlabel("survey sample")
    ax.set_ylabel("simultaneous detections")
    ax.legend(fontsize=8)
    return fig


def save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **(_SAVE if path.suffix == ".svg" else {}))
    plt.close(fig)
    return path


def emit_plots(log, out_dir, fmt="svg"):
    """Write the trajectory and marker-count figures for ``log``; return their paths."""
    out = Path(out_dir)
    stem = Path(log).stem if isinstance(log, (str, Path)) else "trial"
    records = _records(log)
    return [
        save(trajectory_figure(records), out / f"{stem}_trajectory.{fmt}"),
        save(markers_figure(records), out / f"{stem}_markers.{fmt}"),
    ]
