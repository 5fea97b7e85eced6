"""Trajectory -> braid word extraction.

Strands are the agents' trajectories projected on a spacetime plane spanned
by a spatial axis ``eta`` and time.  Crossings of the projected x-order are
labelled over/under by the perpendicular (y) order at the crossing instant
and arranged in temporal order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .braid import BraidWord

# frame coordinates are rounded to a nanometre before ranking
SNAP_DECIMALS = 9


class TopologyError(ValueError):
    pass


class DegenerateExtentError(TopologyError):
    pass


class DegenerateCrossingError(TopologyError):
    pass


@dataclass(frozen=True)
class ProjectionFrame:
    eta: tuple[float, float]

    def __post_init__(self):
        ex, ey = (float(v) for v in self.eta)
        if abs(np.hypot(ex, ey) - 1.0) > 1e-9:
            raise ValueError(f"eta must be a unit vector, got {self.eta}")
        object.__setattr__(self, "eta", (ex, ey))

    @classmethod
    def from_angle(cls, angle: float) -> "ProjectionFrame":
        return cls((float(np.cos(angle)), float(np.sin(angle))))

    @property
    def perp(self) -> tuple[float, float]:
        ex, ey = self.eta
        return (-ey, ex)

    def project(self, x, y):
        """World (x, y) -> frame (x, y); works on scalars and arrays."""
        ex, ey = self.eta
        return x * ex + y * ey, -x * ey + y * ex

    def snapped(self, x, y):
        """``project`` rounded to ``SNAP_DECIMALS``: positions equal up to rounding
        (two agents on one lane line) become exact ties."""
        px, py = self.project(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.round(px, SNAP_DECIMALS), np.round(py, SNAP_DECIMALS)


@dataclass(frozen=True, eq=False)
class SystemTrajectory:
    """``states`` has shape (n_agents, n_samples, 3) holding (x, y, theta)."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise TopologyError("need at least 2 time samples")
        if not np.all(np.diff(times) > 0):
            raise TopologyError("times must be strictly increasing")
        if states.ndim != 3 or states.shape[1] != times.size or states.shape[2] != 3:
            raise TopologyError(f"states shape {states.shape} does not match {times.size} samples")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def n_agents(self) -> int:
        return self.states.shape[0]

    def __len__(self) -> int:
        return self.times.size

    def pad_until(self, t_end: float, dt: float) -> "SystemTrajectory":
        """Append stationary samples every ``dt`` up to ``t_end``."""
        extra = np.arange(self.times[-1] + dt, t_end + 1e-12, dt)
        if extra.size == 0:
            return self
        last = np.repeat(self.states[:, -1:, :], extra.size, axis=1)
        return SystemTrajectory(np.concatenate([self.times, extra]),
                                np.concatenate([self.states, last], axis=1))


@dataclass(frozen=True)
class CrossingEvent:
    time: float
    rank: int
    sign: int
    boundary: bool = False


@dataclass(frozen=True, eq=False)
class Strands:
    """Normalized strands: param ``a`` in [0, 1], x in [1, n], y in [-1, 1].

    ``x``/``y`` hold the interior formula at every sample (endpoints included),
    which is what crossings are detected on; ``start``/``final`` are the snapped
    endpoint ranks (agent -> rank, 1-based).
    """

    a: np.ndarray
    x: np.ndarray
    y: np.ndarray
    start: tuple[int, ...]
    final: tuple[int, ...]
    times: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def endpoint(self, agent: int, end: int) -> tuple[float, float, float]:
        if end == 0:
            return (float(self.start[agent]), 0.0, 0.0)
        return (float(self.final[agent]), 0.0, 1.0)


def ranking(x: np.ndarray, y: np.ndarray) -> list[int]:
    """Agents sorted by x, ties broken by y then agent index."""
    return sorted(range(len(x)), key=lambda i: (x[i], y[i], i))


def _ranks(order: Sequence[int]) -> tuple[int, ...]:
    out = [0] * len(order)
    for r, agent in enumerate(order, start=1):
        out[agent] = r
    return tuple(out)


def normalize_strands(traj: SystemTrajectory, frame: ProjectionFrame) -> Strands:
    xs, ys = frame.snapped(traj.states[:, :, 0], traj.states[:, :, 1])
    n = traj.n_agents
    x_min, x_max = xs.min(), xs.max()
    y_min, y_max = ys.min(), ys.max()
    if x_max == x_min or y_max == y_min:
        raise DegenerateExtentError("trajectory has zero extent along a frame axis")
    rx = (xs - x_min) / (x_max - x_min)
    ry = (ys - y_min) / (y_max - y_min)
    a = (traj.times - traj.times[0]) / (traj.times[-1] - traj.times[0])
    x = 1.0 + rx * (n - 1) if n > 1 else np.ones_like(rx)
    y = -1.0 + 2.0 * ry
    start = _ranks(ranking(xs[:, 0], ys[:, 0]))
    final = _ranks(ranking(xs[:, -1], ys[:, -1]))
    return Strands(a=a, x=x, y=y, start=start, final=final, times=traj.times)


def interval_events(order: list[int], x0, x1, y0, y1, t0: float, t1: float) -> list[CrossingEvent]:
    """Swap ``order`` (in place) into its order at the end of one sample interval.

    Positions are linearly interpolated.  Adjacent pairs that must swap are
    resolved earliest-first, simultaneous ones by ascending rank.  Three or
    more strands meeting in x at one instant at distinct y do not touch in
    space-time, so every resolution order gives the same braid; only two
    strands level in y at their crossing are degenerate.
    """
    n = len(order)
    events: list[CrossingEvent] = []
    while True:
        best = None
        for k in range(n - 1):
            p, q = order[k], order[k + 1]
            d1 = x1[q] - x1[p]
            if d1 < 0:
                d0 = x0[q] - x0[p]
                s = d0 / (d0 - d1) if d0 > 0 else 0.0
                if best is None or s < best[0]:
                    best = (s, k)
        if best is None:
            return events
        s, k = best
        p, q = order[k], order[k + 1]
        yp = y0[p] + s * (y1[p] - y0[p])
        yq = y0[q] + s * (y1[q] - y0[q])
        if yp == yq:
            raise DegenerateCrossingError(f"strands {p} and {q} coincide at a crossing")
        order[k], order[k + 1] = q, p
        events.append(CrossingEvent(time=t0 + s * (t1 - t0), rank=k + 1, sign=1 if yp > yq else -1,
                                    boundary=(s == 0.0)))


def active_intervals(x: np.ndarray, y0: np.ndarray) -> np.ndarray:
    """Indices k of intervals [k, k+1] in which some pair changes x-order."""
    n, m = x.shape
    if n < 2 or m < 2:
        return np.zeros(0, dtype=int)
    iu, ju = np.triu_indices(n, 1)
    d = x[ju] - x[iu]
    s = np.sign(d)
    # initial ties resolved like ``ranking``: by y, then index (iu < ju)
    init = np.where(y0[ju] > y0[iu], 1.0, np.where(y0[ju] < y0[iu], -1.0, 1.0))
    s[:, 0] = np.where(s[:, 0] == 0, init, s[:, 0])
    # zeros keep the previous relation
    idx = np.where(s != 0, np.arange(m), 0)
    np.maximum.accumulate(idx, axis=1, out=idx)
    s = np.take_along_axis(s, idx, axis=1)
    changed = np.any(s[:, 1:] != s[:, :-1], axis=0)
    return np.nonzero(changed)[0]


def detect_crossings(strands: Strands) -> list[CrossingEvent]:
    x, y = strands.x, strands.y
    t = strands.a
    order = ranking(x[:, 0], y[:, 0])
    events: list[CrossingEvent] = []
    for k in active_intervals(x, y[:, 0]):
        events.extend(interval_events(order, x[:, k], x[:, k + 1], y[:, k], y[:, k + 1],
                                      float(t[k]), float(t[k + 1])))
    final_order = sorted(range(len(order)), key=lambda i: strands.final[i])
    events.extend(settle_final(order, final_order, y[:, -1], float(t[-1])))
    return events


def settle_final(order: list[int], final_order: Sequence[int], y_end, t_end: float) -> list[CrossingEvent]:
    """Boundary crossings that carry ``order`` (in place) onto the snapped final ranking.

    They only occur when strands end tied in frame-x, in which case the
    endpoint tie-break by y decides the final ranks.
    """
    target = {agent: r for r, agent in enumerate(final_order)}
    events: list[CrossingEvent] = []
    while order != list(final_order):
        k = next(k for k in range(len(order) - 1) if target[order[k]] > target[order[k + 1]])
        p, q = order[k], order[k + 1]
        if y_end[p] == y_end[q]:
            raise DegenerateCrossingError(f"strands {p} and {q} coincide at the final instant")
        order[k], order[k + 1] = q, p
        events.append(CrossingEvent(t_end, k + 1, 1 if y_end[p] > y_end[q] else -1, boundary=True))
    return events


def extract_braid(traj: SystemTrajectory, frame: ProjectionFrame) -> BraidWord:
    strands = normalize_strands(traj, frame)
    events = detect_crossings(strands)
    return BraidWord(max(traj.n_agents, 2), tuple(e.sign * e.rank for e in events))


def final_permutation(traj: SystemTrajectory, frame: ProjectionFrame) -> tuple[int, ...]:
    """Permutation taking start ranks to final ranks, as ``mapping[start-1] = final``."""
    xs, ys = frame.snapped(traj.states[:, :, 0], traj.states[:, :, 1])
    start = _ranks(ranking(xs[:, 0], ys[:, 0]))
    final = _ranks(ranking(xs[:, -1], ys[:, -1]))
    mapping = [0] * traj.n_agents
    for agent in range(traj.n_agents):
        mapping[start[agent] - 1] = final[agent]
    return tuple(mapping)


# -- trajectory log format ---------------------------------------------------
# One JSON object per line: {"t": float, "agents": [[x, y, theta], ...]}

def write_trajectory_log(path: str | Path, traj: SystemTrajectory, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if meta:
            fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for k, t in enumerate(traj.times):
            rec = {"t": round(float(t), 9),
                   "agents": [[round(float(v), 9) for v in traj.states[i, k]]
                              for i in range(traj.n_agents)]}
            fh.write(json.dumps(rec) + "\n")


def iter_log_records(lines: Iterable[str]):
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TopologyError(f"line {lineno}: invalid JSON") from exc
        yield lineno, rec


def read_trajectory_log(path: str | Path) -> tuple[SystemTrajectory, dict]:
    times: list[float] = []
    rows: list[list[list[float]]] = []
    meta: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, rec in iter_log_records(fh):
            if "meta" in rec:
                meta = rec["meta"]
                continue
            t = float(rec["t"])
            if times and t <= times[-1]:
                raise TopologyError(f"line {lineno}: time {t} not increasing")
            if rows and len(rec["agents"]) != len(rows[0]):
                raise TopologyError(f"line {lineno}: agent count changed")
            times.append(t)
            rows.append(rec["agents"])
    if len(times) < 2:
        raise TopologyError("log holds fewer than 2 samples")
    states = np.transpose(np.asarray(rows, dtype=float), (1, 0, 2))
    return SystemTrajectory(np.asarray(times), states), meta
