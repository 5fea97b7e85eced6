"""Four-way intersection: lane geometry, legal paths, simple-car kinematics,
path tracking and constant-speed rollouts."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .geometry import min_rect_distance, rect_distance
from .topology import SystemTrajectory

SIDES = ("bottom", "right", "top", "left")
# heading of a car entering the box from each side
ENTRY_HEADING = {"bottom": math.pi / 2, "right": math.pi, "top": -math.pi / 2, "left": 0.0}
# outward direction towards each side
EXIT_HEADING = {"bottom": -math.pi / 2, "right": 0.0, "top": math.pi / 2, "left": math.pi}
PATH_CHOICES = ("left", "straight", "right")

NEGOTIATION, EXECUTION, DONE = 0, 1, 2
REGION_NAMES = ("negotiation", "execution", "done")


class WorldError(ValueError):
    pass


class TrackingError(WorldError):
    pass


@dataclass(frozen=True)
class IntersectionGeometry:
    lane_length: float = 50.0
    lane_width: float = 3.6
    car_length: float = 4.7
    car_width: float = 1.7

    @property
    def half_box(self) -> float:
        # two lanes per road, so the box is 2 * lane_width across
        return self.lane_width

    @property
    def box_size(self) -> float:
        return 2 * self.lane_width


def destination(from_side: str, choice: str) -> str:
    """Side reached from ``from_side`` by turning left/right or going straight."""
    k = SIDES.index(from_side)
    # SIDES run counter-clockwise; heading north from the bottom, left is west
    offset = {"straight": 2, "left": 3, "right": 1}[choice]
    return SIDES[(k + offset) % 4]


def turn_choice(from_side: str, to_side: str) -> str:
    for c in PATH_CHOICES:
        if destination(from_side, c) == to_side:
            return c
    raise WorldError(f"no legal path from {from_side} to {to_side}")


def _unit(h: float) -> np.ndarray:
    # snap cos(pi/2)-style residue so the lanes sit exactly on +-w/2
    return np.round(np.array([math.cos(h), math.sin(h)]), 15) + 0.0


@dataclass(frozen=True)
class _Line:
    start: tuple[float, float]
    heading: float
    length: float


@dataclass(frozen=True)
class _Arc:
    center: tuple[float, float]
    radius: float
    start_angle: float  # polar angle of the start point about the center
    turn: int           # +1 counter-clockwise (left), -1 clockwise (right)
    sweep: float        # radians, positive

    @property
    def length(self) -> float:
        return self.radius * self.sweep


@dataclass(frozen=True, eq=False)
class PathGeometry:
    from_side: str
    to_side: str
    segments: tuple
    entry_mark: float
    exit_mark: float

    def __post_init__(self):
        lengths = [s.length for s in self.segments]
        object.__setattr__(self, "_offsets", np.concatenate([[0.0], np.cumsum(lengths)]))

    @property
    def length(self) -> float:
        return float(self._offsets[-1])

    @property
    def choice(self) -> str:
        return turn_choice(self.from_side, self.to_side)

    def pose_at(self, s, extend: bool = False):
        """Pose (x, y, theta) at arc length ``s``.

        ``s`` is clamped to the path unless ``extend``, in which case the
        final straight continues past the goal.
        """
        s = np.asarray(s, dtype=float)
        s = np.maximum(s, 0.0) if extend else np.clip(s, 0.0, self.length)
        x = np.empty_like(s)
        y = np.empty_like(s)
        th = np.empty_like(s)
        last = len(self.segments) - 1
        for k, seg in enumerate(self.segments):
            lo = self._offsets[k]
            hi = self._offsets[k + 1]
            m = (s >= lo) & ((s < hi) if k < last else (s <= hi) | extend)
            if not np.any(m):
                continue
            u = s[m] - lo
            if isinstance(seg, _Line):
                c, sn = math.cos(seg.heading), math.sin(seg.heading)
                x[m] = seg.start[0] + c * u
                y[m] = seg.start[1] + sn * u
                th[m] = seg.heading
            else:
                ang = seg.start_angle + seg.turn * u / seg.radius
                x[m] = seg.center[0] + seg.radius * np.cos(ang)
                y[m] = seg.center[1] + seg.radius * np.sin(ang)
                th[m] = ang + seg.turn * math.pi / 2
        return x, y, th

    def curvature_at(self, s: float) -> float:
        """Signed curvature (+ left) at arc length ``s``."""
        k = int(np.searchsorted(self._offsets, s, side="right")) - 1
        seg = self.segments[min(max(k, 0), len(self.segments) - 1)]
        return seg.turn / seg.radius if isinstance(seg, _Arc) else 0.0

    def project(self, x: float, y: float) -> tuple[float, float, float, float]:
        """Closest point: (arc length, signed lateral error (+ left), heading, curvature).

        The last segment is extended so arc length can exceed ``length``.
        """
        best = None
        last = len(self.segments) - 1
        for k, seg in enumerate(self.segments):
            lo = float(self._offsets[k])
            if isinstance(seg, _Line):
                c, sn = math.cos(seg.heading), math.sin(seg.heading)
                dx, dy = x - seg.start[0], y - seg.start[1]
                u = dx * c + dy * sn
                u = max(u, 0.0) if k == last else min(max(u, 0.0), seg.length)
                px, py = seg.start[0] + c * u, seg.start[1] + sn * u
                lat = -sn * (x - px) + c * (y - py)
                dist = math.hypot(x - px, y - py)
                cand = (dist, lo + u, lat, seg.heading, 0.0)
            else:
                dx, dy = x - seg.center[0], y - seg.center[1]
                ang = math.atan2(dy, dx)
                rel = (ang - seg.start_angle) * seg.turn
                rel = (rel + math.pi) % (2 * math.pi) - math.pi
                u = min(max(rel, 0.0), seg.sweep) * seg.radius
                a = seg.start_angle + seg.turn * u / seg.radius
                px = seg.center[0] + seg.radius * math.cos(a)
                py = seg.center[1] + seg.radius * math.sin(a)
                r = math.hypot(dx, dy)
                # left of travel is towards the centre for a left turn
                lat = seg.turn * (seg.radius - r)
                dist = math.hypot(x - px, y - py)
                cand = (dist, lo + u, lat, a + seg.turn * math.pi / 2, seg.turn / seg.radius)
            if best is None or cand[0] < best[0] - 1e-12:
                best = cand
        _, s, lat, heading, kappa = best
        return s, lat, heading, kappa


def build_path(geom: IntersectionGeometry, from_side: str, to_side: str) -> PathGeometry:
    if from_side not in SIDES or to_side not in SIDES:
        raise WorldError(f"unknown side {from_side!r} or {to_side!r}")
    if from_side == to_side:
        raise WorldError("U-turns are not legal paths")
    h_in = ENTRY_HEADING[from_side]
    h_out = EXIT_HEADING[to_side]
    d_in, d_out = _unit(h_in), _unit(h_out)
    # right-hand traffic: lane centre sits half a lane to the right of travel
    r_in = np.array([d_in[1], -d_in[0]])
    r_out = np.array([d_out[1], -d_out[0]])
    w2 = geom.lane_width / 2
    hb = geom.half_box
    start = -(hb + geom.lane_length) * d_in + w2 * r_in
    box_in = -hb * d_in + w2 * r_in
    box_out = hb * d_out + w2 * r_out
    segs: list = [_Line(tuple(start), h_in, geom.lane_length)]
    cross = d_in[0] * d_out[1] - d_in[1] * d_out[0]
    if abs(cross) < 1e-12:
        segs.append(_Line(tuple(box_in), h_in, float(np.linalg.norm(box_out - box_in))))
    else:
        turn = 1 if cross > 0 else -1
        # the fillet is tangent to both centerlines; for a 90 degree turn the
        # tangency points are equidistant from the centerlines' intersection
        normal = np.array([-d_in[1], d_in[0]]) * turn
        radius = abs(float(np.dot(box_out - box_in, d_in)))
        center = box_in + radius * normal
        rel = box_in - center
        sweep = abs(math.atan2(cross, float(np.dot(d_in, d_out))))
        segs.append(_Arc(tuple(center), radius, math.atan2(rel[1], rel[0]), turn, sweep))
    segs.append(_Line(tuple(box_out), h_out, geom.lane_length))
    total = sum(seg.length for seg in segs)
    return PathGeometry(from_side, to_side, tuple(segs), entry_mark=geom.lane_length,
                        exit_mark=total - geom.lane_length)


def path_set(geom: IntersectionGeometry, from_side: str) -> dict[str, PathGeometry]:
    return {c: build_path(geom, from_side, destination(from_side, c)) for c in PATH_CHOICES}


# -- controller --------------------------------------------------------------

@dataclass(frozen=True)
class ControllerConfig:
    wheelbase: float = 2.7
    max_steer: float = 1.0  # the 1.8 m right-turn fillet needs 0.98 rad
    # error dynamics e'' + k_d e' + k_p e = 0 in travelled distance (1/m^2, 1/m)
    k_p: float = 0.04
    k_d: float = 0.4
    capture_lateral: float = 5.0
    capture_heading: float = 1.2
    # curvature feedforward is read this far ahead (s), one Euler step
    preview: float = 0.05


def tracking_controller(pose: Sequence[float], path: PathGeometry, desired_speed: float,
                        cfg: ControllerConfig = ControllerConfig()) -> tuple[float, float]:
    """Feedback-linearizing path follower; returns (speed, steering)."""
    x, y, th = pose
    s, e, path_heading, kappa = path.project(x, y)
    psi = (th - path_heading + math.pi) % (2 * math.pi) - math.pi
    if abs(e) > cfg.capture_lateral or abs(psi) > cfg.capture_heading:
        raise TrackingError(f"pose {pose} outside capture region (e={e:.2f}, psi={psi:.2f})")
    if cfg.preview > 0:
        kappa = path.curvature_at(s + desired_speed * cfg.preview)
    cos_psi = math.cos(psi)
    # with sigma the travelled distance: e' = sin psi,
    # e'' = cos psi * (tan(delta)/L - kappa cos psi / (1 - kappa e))
    curv_ff = kappa * cos_psi / (1.0 - kappa * e)
    tan_delta = cfg.wheelbase * ((-cfg.k_d * math.sin(psi) - cfg.k_p * e) / cos_psi + curv_ff)
    steer = math.atan(tan_delta)
    steer = min(max(steer, -cfg.max_steer), cfg.max_steer)
    return float(desired_speed), steer


# -- world state -------------------------------------------------------------

@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    theta: float
    speed: float
    progress: float
    region: int = NEGOTIATION

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)


@dataclass(frozen=True, eq=False)
class WorldState:
    geometry: IntersectionGeometry
    paths: tuple[PathGeometry, ...]
    agents: tuple[AgentState, ...]
    time: float = 0.0

    @property
    def n(self) -> int:
        return len(self.agents)

    @classmethod
    def initial(cls, geometry: IntersectionGeometry, paths: Sequence[PathGeometry],
                speeds: Sequence[float]) -> "WorldState":
        agents = []
        for path, v in zip(paths, speeds):
            x, y, th = path.pose_at(0.0)
            agents.append(AgentState(float(x), float(y), float(th), float(v), 0.0, NEGOTIATION))
        return cls(geometry, tuple(paths), tuple(agents), 0.0)

    def region_of(self, i: int) -> int:
        return self.agents[i].region

    def poses(self) -> np.ndarray:
        return np.array([a.pose for a in self.agents], dtype=float)


def _region(progress: float, path: PathGeometry) -> int:
    if progress >= path.length:
        return DONE
    if progress >= path.entry_mark:
        return EXECUTION
    return NEGOTIATION


def step(world: WorldState, controls: Sequence[tuple[float, float]], dt: float,
         wheelbase: float = ControllerConfig.wheelbase) -> WorldState:
    """Euler step of the simple-car model for every agent."""
    if dt <= 0:
        raise WorldError("dt must be positive")
    new = []
    for agent, path, (v, steer) in zip(world.agents, world.paths, controls):
        if agent.region == DONE:
            new.append(replace(agent, speed=0.0))
            continue
        x = agent.x + v * math.cos(agent.theta) * dt
        y = agent.y + v * math.sin(agent.theta) * dt
        th = agent.theta + v / wheelbase * math.tan(steer) * dt
        th = (th + math.pi) % (2 * math.pi) - math.pi
        s, _, _, _ = path.project(x, y)
        s = float(max(s, agent.progress))
        region = max(agent.region, _region(s, path))
        new.append(AgentState(x, y, th, 0.0 if region == DONE else float(v), s, region))
    return WorldState(world.geometry, world.paths, tuple(new), world.time + dt)


def min_distance(world: WorldState) -> float:
    if world.n < 2:
        raise WorldError("min_distance needs at least 2 agents")
    poses = world.poses()
    g = world.geometry
    iu, ju = np.triu_indices(world.n, 1)
    return float(rect_distance(poses[iu], poses[ju], g.car_length, g.car_width).min())


# -- rollouts ----------------------------------------------------------------

def goal_steps(path: PathGeometry, s0: float, speed: float, dt: float) -> int:
    """Number of ``dt`` steps at ``speed`` to get from ``s0`` to the goal."""
    remaining = max(path.length - s0, 0.0)
    return int(math.ceil(remaining / speed / dt - 1e-9))


def projected_track(path: PathGeometry, s0: float, speed: float, dt: float,
                    steps: int) -> np.ndarray:
    """Poses (steps + 1, 3) at ``s0 + speed * k * dt``, continuing past the goal."""
    s = s0 + speed * dt * np.arange(steps + 1)
    x, y, th = path.pose_at(s, extend=True)
    return np.stack([x, y, th], axis=-1)


def _pair_dmin(a: np.ndarray, b: np.ndarray, stop: int, g: IntersectionGeometry) -> float:
    return min_rect_distance(a[: stop + 1], b[: stop + 1], g.car_length, g.car_width)


def rollout(world: WorldState, paths: Sequence[PathGeometry], speeds: Sequence[float],
            dt: float, *, mode: str = "closed_loop", horizon: float = 60.0,
            controller: ControllerConfig = ControllerConfig()) -> tuple[SystemTrajectory, float]:
    """Constant-speed future of every agent along a hypothesized path tuple.

    ``mode="closed_loop"`` integrates the tracking controller; ``"projected"``
    places each agent on its path at ``s0 + v t`` (zero tracking error).
    The rollout lasts until the last agent reaches its goal (at most
    ``horizon``); agents that arrive earlier carry on down their exit lane
    and leave the scene, so distances only count while both agents of a
    pair are still on their paths.  Agents already done are not included.
    Returns the trajectory of the remaining agents and the minimum boundary
    distance (``inf`` with fewer than two agents).
    """
    if any(v <= 0 for v in speeds):
        raise WorldError("rollout speeds must be positive")
    g = world.geometry
    live = [i for i, a in enumerate(world.agents) if a.region != DONE]
    if not live:
        raise WorldError("no agent left to roll out")
    cap = int(math.ceil(horizon / dt - 1e-9))
    s0 = {i: paths[i].project(world.agents[i].x, world.agents[i].y)[0] for i in live}
    goals = [min(max(goal_steps(paths[i], s0[i], speeds[i], dt), 1), cap) for i in live]
    steps = max(goals)
    if mode == "projected":
        states = np.array([projected_track(paths[i], s0[i], speeds[i], dt, steps) for i in live])
    elif mode == "closed_loop":
        poses = [world.agents[i].pose for i in live]
        frames = [poses]
        goals = [cap] * len(live)
        k = 0
        while k < cap and any(gk == cap for gk in goals):
            new = []
            for m, i in enumerate(live):
                x, y, th = poses[m]
                v, steer = tracking_controller(poses[m], paths[i], speeds[i], controller)
                x, y = x + v * math.cos(th) * dt, y + v * math.sin(th) * dt
                th = th + v / controller.wheelbase * math.tan(steer) * dt
                new.append((x, y, (th + math.pi) % (2 * math.pi) - math.pi))
            poses = new
            frames.append(poses)
            k += 1
            for m, i in enumerate(live):
                if goals[m] == cap and paths[i].project(*poses[m][:2])[0] >= paths[i].length:
                    goals[m] = k
        goals = [max(gk, 1) for gk in goals]
        states = np.transpose(np.array(frames), (1, 0, 2))[:, : max(goals) + 1]
    else:
        raise ValueError(f"unknown rollout mode {mode!r}")
    if states.shape[1] < 2:
        states = np.concatenate([states, states], axis=1)
    times = world.time + dt * np.arange(states.shape[1])
    traj = SystemTrajectory(times, states)
    if len(live) < 2:
        return traj, math.inf
    d = min(_pair_dmin(states[a], states[b], min(goals[a], goals[b]), g)
            for a in range(len(live)) for b in range(a + 1, len(live)))
    return traj, d


# -- agents ------------------------------------------------------------------

@dataclass(frozen=True)
class AgentSpec:
    id: int
    side: str
    choice: str
    v_low: float
    v_high: float
    pref_high: float = 0.7
    w: float = 0.5
    condition: str = "C2"

    def __post_init__(self):
        if self.side not in SIDES:
            raise WorldError(f"unknown side {self.side!r}")
        if self.choice not in PATH_CHOICES:
            raise WorldError(f"unknown path choice {self.choice!r}")
        if not 0 < self.v_low < self.v_high:
            raise WorldError("need 0 < v_low < v_high")
        if not 0.6 <= self.pref_high <= 0.8:
            raise WorldError("pref_high must lie in [0.6, 0.8]")
        if not 0 < self.w <= 1:
            raise WorldError("w must lie in (0, 1]")

    @property
    def speeds(self) -> tuple[float, float]:
        return (self.v_low, self.v_high)

    @property
    def inattentive(self) -> bool:
        return self.w == 1.0


@dataclass(frozen=True, eq=False)
class Scene:
    """Observable snapshot handed to planners: state plus public agent data."""

    state: WorldState
    specs: tuple[AgentSpec, ...]
    path_sets: tuple[dict, ...]
    speed_idx: tuple[int, ...]  # 0 low, 1 high: speed each agent currently holds

    @classmethod
    def start(cls, geometry: IntersectionGeometry, specs: Sequence[AgentSpec]) -> "Scene":
        path_sets = tuple(path_set(geometry, s.side) for s in specs)
        paths = [ps[s.choice] for ps, s in zip(path_sets, specs)]
        state = WorldState.initial(geometry, paths, [s.v_high for s in specs])
        return cls(state, tuple(specs), path_sets, (1,) * len(specs))

    @property
    def n(self) -> int:
        return self.state.n
