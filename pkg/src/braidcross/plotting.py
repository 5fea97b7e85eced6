"""SVG figures: per-scenario collision/time bar charts and progress-vs-time lines."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import ConditionSummary, ExperimentResult  # noqa: E402
from .topology import ProjectionFrame  # noqa: E402

# fixed ids and no timestamp, so the same data always gives the same bytes
_RC = {"svg.hashsalt": "braidcross", "svg.fonttype": "path", "font.size": 9,
       "axes.spines.top": False, "axes.spines.right": False}
_COLORS = {"C1": "#d62728", "C2": "#1f77b4", "C3": "#2ca02c", "C4": "#ff7f0e", "C5": "#9467bd"}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _nan0(v: float) -> float:
    return 0.0 if v is None or math.isnan(v) else v


def collision_chart(summary: Sequence[ConditionSummary], path: str | Path, title: str = "") -> Path:
    """Collision frequency per condition with Bernoulli standard-deviation bars."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(3.6, 2.8))
        labels = [s.label for s in summary]
        freq = [_nan0(s.collision_frequency) for s in summary]
        err = [_nan0(s.collision_sd) for s in summary]
        x = np.arange(len(summary))
        ax.bar(x, freq, yerr=err, capsize=3, color=[_COLORS.get(s.condition, "0.5") for s in summary])
        ax.set_xticks(x, labels)
        ax.set_ylim(0, 1)
        ax.set_ylabel("Frequency of collisions")
        ax.set_title(title)
        fig.tight_layout()
        return _save(fig, Path(path))


def time_chart(summary: Sequence[ConditionSummary], path: str | Path, title: str = "") -> Path:
    """Median maximum time to destination per condition, whiskers at the 25/75 percentiles."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(3.6, 2.8))
        labels = [s.label for s in summary]
        med = np.array([_nan0(s.time_q50) for s in summary])
        lo = np.array([_nan0(s.time_q25) for s in summary])
        hi = np.array([_nan0(s.time_q75) for s in summary])
        x = np.arange(len(summary))
        ax.bar(x, med, color=[_COLORS.get(s.condition, "0.5") for s in summary])
        for xi, m, a, b in zip(x, med, lo, hi):
            ax.errorbar([xi], [m], yerr=[[m - a], [b - m]], color="k", capsize=3, lw=1.0)
        ax.set_xticks(x, labels)
        ax.set_ylabel("Maximum time to destination (s)")
        ax.set_title(title)
        fig.tight_layout()
        return _save(fig, Path(path))


def progress_chart(result: ExperimentResult, path: str | Path, entry_mark: float,
                   window: float | None = None) -> Path:
    """Distance covered per agent against time, with the intersection-arrival line.

    ``window`` limits the x-axis to that many seconds after the first arrival.
    """
    if result.progress is None or result.trajectory is None:
        raise ValueError("result was run without recording")
    t = result.trajectory.times
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        for i, prog in enumerate(result.progress):
            ax.plot(t, prog, lw=1.2, label=f"agent {i + 1}")
        ax.axhline(entry_mark, color="k", lw=1.0)
        if window is not None:
            first = np.nanmin(np.array(result.entry_times, dtype=float))
            if math.isfinite(first):
                lo, hi = max(0.0, first - window), first + window
                ax.set_xlim(lo, hi)
                seen = result.progress[:, (t >= lo) & (t <= hi)]
                if seen.size:
                    pad = 0.05 * (seen.max() - seen.min() + 1.0)
                    ax.set_ylim(seen.min() - pad, seen.max() + pad)
        ax.set_xlabel("Time (s)")
        ax.set_ylabel("Distance covered (m)")
        ax.set_title(f"{result.scenario} {result.label} cell {result.cell}")
        ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        return _save(fig, Path(path))


def emit_plots(summary: Sequence[ConditionSummary], out_dir: str | Path) -> list[Path]:
    """One collision and one time chart per (scenario, setting) group."""
    out_dir = Path(out_dir)
    groups: dict[tuple[str, bool], list[ConditionSummary]] = {}
    for s in summary:
        groups.setdefault((s.scenario, s.heterogeneous), []).append(s)
    paths = []
    for (sc, het), rows in sorted(groups.items()):
        rows = sorted(rows, key=lambda s: s.condition)
        tag = sc.lower() + ("_het" if het else "")
        name = sc + (" (inattentive agent 1)" if het else "")
        paths.append(collision_chart(rows, out_dir / f"{tag}_collisions.svg", name))
        paths.append(time_chart(rows, out_dir / f"{tag}_time.svg", name))
    return paths


def trajectory_chart(traj, path: str | Path, frame=None, title: str = "") -> Path:
    """Top view of the paths next to their x-t projection in ``frame``."""
    frame = frame or ProjectionFrame.from_angle(0.0)
    with plt.rc_context(_RC):
        fig, (top, side) = plt.subplots(1, 2, figsize=(7.0, 3.2))
        for i in range(traj.n_agents):
            x, y = traj.states[i, :, 0], traj.states[i, :, 1]
            top.plot(x, y, lw=1.2, label=f"agent {i + 1}")
            px, _ = frame.project(x, y)
            side.plot(px, traj.times, lw=1.2)
        top.set_aspect("equal")
        top.set_xlabel("x (m)")
        top.set_ylabel("y (m)")
        top.legend(frameon=False, fontsize=7)
        side.set_xlabel("projected x (m)")
        side.set_ylabel("Time (s)")
        fig.suptitle(title)
        fig.tight_layout()
        return _save(fig, Path(path))
