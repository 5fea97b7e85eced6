"""Belief over collision-free topological outcomes by exhaustive enumeration.

For an ego agent the engine enumerates every hypothesis (path tuple T with
the ego's own path fixed, speed profile U), projects all agents forward at
constant speed, classifies each rollout by its braid in the ego's frame and
weights it by the sigmoid no-collision probability.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterator, Sequence

import numpy as np

from .braid import BraidWord, canonical_key
from .geometry import rect_distance
from .topology import DegenerateCrossingError, ProjectionFrame, interval_events, ranking, settle_final
from .world import (DONE, ENTRY_HEADING, EXECUTION, NEGOTIATION, PATH_CHOICES, Scene, goal_steps,
                    projected_track)

log = logging.getLogger(__name__)

LOW, HIGH = 0, 1
COLLISION_FREE, COLLISION = True, False


@dataclass(frozen=True)
class BeliefConfig:
    sigmoid_a: float = 4.0        # 1/m, picked by a seed-1 tuning sweep
    sigmoid_delta: float = 1.0    # m, boundary distance
    rollout_dt: float = 0.05
    horizon: float = 60.0
    assumed_pref: float | None = None  # None: the ego's own pref_high
    execution_speed_known: bool = True
    entropy_mode: str = "joint"


@dataclass(frozen=True)
class Outcome:
    key: Hashable
    collision_free: bool


@dataclass
class Belief:
    entries: dict[Outcome, float] = field(default_factory=dict)
    hypotheses: int = 0
    skipped: int = 0

    def add(self, outcome: Outcome, p: float) -> None:
        self.entries[outcome] = self.entries.get(outcome, 0.0) + p

    def total(self) -> float:
        return math.fsum(self.entries.values())

    def free_mass(self) -> float:
        return math.fsum(p for o, p in self.entries.items() if o.collision_free)

    def free(self) -> dict[Hashable, float]:
        return {o.key: p for o, p in self.entries.items() if o.collision_free}

    def __len__(self) -> int:
        return len(self.entries)


def ego_frame(side: str) -> ProjectionFrame:
    """Frame axis: the entry heading rotated -90 degrees (pointing to the agent's right)."""
    return ProjectionFrame.from_angle(ENTRY_HEADING[side] - math.pi / 2)


def path_prior(scene: Scene, j: int, known: bool = False) -> dict[str, float]:
    """P(path of j | its state): uniform while negotiating, certain afterwards."""
    true = scene.specs[j].choice
    if known or scene.state.agents[j].region != NEGOTIATION:
        return {c: (1.0 if c == true else 0.0) for c in PATH_CHOICES}
    m = len(PATH_CHOICES)
    return {c: 1.0 / m for c in PATH_CHOICES}


def control_prior(assumed_pref: float) -> tuple[float, float]:
    """(P(low), P(high)) under the assumed speed preference."""
    return (1.0 - assumed_pref, assumed_pref)


def collision_prob(d_min: float, a: float, delta: float) -> float:
    if a <= 0 or delta < 0:
        raise ValueError("need a > 0 and delta >= 0")
    if math.isinf(d_min):
        return 0.0
    z = a * (d_min - delta)
    if z > 700:
        return 0.0
    return 1.0 / (1.0 + math.exp(z))


def entropy(bel: Belief | dict, mode: str = "free") -> float:
    """Shannon entropy in nats (0 log 0 = 0).

    ``free``: over the collision-free entries as they stand; ``joint``: over
    every entry; ``conditional``: over collision-free entries renormalized.
    A plain mapping of probabilities is treated as all collision-free.
    """
    if isinstance(bel, Belief):
        if mode == "joint":
            ps = list(bel.entries.values())
        else:
            ps = [p for o, p in bel.entries.items() if o.collision_free]
    else:
        ps = list(bel.values())
    if mode == "conditional":
        z = math.fsum(ps)
        ps = [p / z for p in ps] if z > 0 else []
    elif mode not in ("free", "joint"):
        raise ValueError(f"unknown entropy mode {mode!r}")
    return -math.fsum(p * math.log(p) for p in ps if p > 0)


# -- rollout cache -----------------------------------------------------------

class RolloutCache:
    """Per-snapshot memo of single-agent tracks and pairwise products.

    Agents do not interact inside rollouts, so a hypothesis is a choice of one
    track per agent; distances and x-order changes are computed per pair once
    and shared by every hypothesis and every ego in the same planning cycle.
    Tracks run for the whole horizon, continuing down the exit lane after the
    goal, and carry the step index at which the goal is reached.
    """

    def __init__(self, scene: Scene, config: BeliefConfig = BeliefConfig()):
        self.scene = scene
        self.config = config
        g = scene.state.geometry
        self._dims = (g.car_length, g.car_width)
        self.steps = int(math.ceil(config.horizon / config.rollout_dt - 1e-9))
        self._tracks: dict = {}
        self._frame_xy: dict = {}
        self._dmin: dict = {}
        self._changes: dict = {}
        self._keys: dict = {}

    def track(self, j: int, opt: tuple[str, int]) -> tuple[np.ndarray, int]:
        """(poses, goal step) of agent j following ``opt = (path choice, speed index)``."""
        t = self._tracks.get((j, opt))
        if t is None:
            agent = self.scene.state.agents[j]
            path = self.scene.path_sets[j][opt[0]]
            v = self.scene.specs[j].speeds[opt[1]]
            s0 = path.project(agent.x, agent.y)[0]
            dt = self.config.rollout_dt
            goal = min(max(goal_steps(path, s0, v, dt), 1), self.steps)
            t = (projected_track(path, s0, v, dt, self.steps), goal)
            self._tracks[(j, opt)] = t
        return t

    def frame_xy(self, frame: ProjectionFrame, j: int, opt) -> tuple[np.ndarray, np.ndarray, list, list]:
        k = (frame.eta, j, opt)
        v = self._frame_xy.get(k)
        if v is None:
            t = self.track(j, opt)[0]
            x, y = frame.snapped(t[:, 0], t[:, 1])
            v = (x, y, x.tolist(), y.tolist())
            self._frame_xy[k] = v
        return v

    def prefetch_dmin(self, keys) -> None:
        """Fill pairwise distances for ``keys`` (j, oj, k, ok) in one vectorized pass."""
        todo = [key for key in dict.fromkeys(keys) if key not in self._dmin]
        if not todo:
            return
        diag = math.hypot(*self._dims)
        pairs, centres = [], []
        for j, oj, k, ok in todo:
            (a, ga), (b, gb) = self.track(j, oj), self.track(k, ok)
            stop = min(ga, gb) + 1
            a, b = a[:stop], b[:stop]
            pairs.append((a, b))
            centres.append(np.hypot(a[:, 0] - b[:, 0], a[:, 1] - b[:, 1]))
        # the boundary distance lies in [centre - diag, centre]; the exact value
        # at the closest centres is an upper bound on the minimum
        i0 = [int(np.argmin(c)) for c in centres]
        ub = rect_distance(np.array([p[0][i] for p, i in zip(pairs, i0)]),
                           np.array([p[1][i] for p, i in zip(pairs, i0)]), *self._dims)
        pa, pb, bounds = [], [], [0]
        for (a, b), c, u in zip(pairs, centres, ub.tolist()):
            cand = np.nonzero(c - diag <= u)[0]
            pa.append(a[cand])
            pb.append(b[cand])
            bounds.append(bounds[-1] + len(cand))
        d = rect_distance(np.concatenate(pa), np.concatenate(pb), *self._dims)
        mins = np.minimum.reduceat(d, bounds[:-1])
        for key, v in zip(todo, mins.tolist()):
            self._dmin[key] = v

    def pair_dmin(self, j: int, oj, k: int, ok) -> float:
        """Minimum boundary distance while both agents are still on their paths."""
        key = (j, oj, k, ok)
        d = self._dmin.get(key)
        if d is None:
            self.prefetch_dmin([key])
            d = self._dmin[key]
        return d

    def pair_changes(self, frame: ProjectionFrame, j: int, oj, k: int, ok) -> tuple[int, ...]:
        """Sample intervals in which agents j < k swap frame-x order."""
        key = (frame.eta, j, oj, k, ok)
        c = self._changes.get(key)
        if c is None:
            xj, yj = self.frame_xy(frame, j, oj)[:2]
            xk, yk = self.frame_xy(frame, k, ok)[:2]
            s = np.sign(xk - xj)
            if s[0] == 0:
                s[0] = -1.0 if yk[0] < yj[0] else 1.0
            idx = np.where(s != 0, np.arange(len(s)), 0)
            np.maximum.accumulate(idx, out=idx)
            s = s[idx]
            c = tuple(np.nonzero(s[1:] != s[:-1])[0].tolist())
            self._changes[key] = c
        return c

    def braid_key(self, letters: tuple[int, ...], n: int) -> Hashable:
        k = self._keys.get((n, letters))
        if k is None:
            k = canonical_key(BraidWord(max(n, 2), letters))
            self._keys[(n, letters)] = k
        return k

    def braid_letters(self, frame: ProjectionFrame, agents: Sequence[int], opts) -> tuple[int, ...]:
        """Braid word (as signed ints) of ``agents[i]`` following ``opts[i]``, up to
        the step at which the last of them reaches its goal."""
        n = len(agents)
        end = max(self.track(j, o)[1] for j, o in zip(agents, opts))
        active: set[int] = set()
        for a in range(n):
            for b in range(a + 1, n):
                active.update(self.pair_changes(frame, agents[a], opts[a], agents[b], opts[b]))
        xy = [self.frame_xy(frame, j, o) for j, o in zip(agents, opts)]
        xs = [p[2] for p in xy]
        ys = [p[3] for p in xy]
        order = ranking([x[0] for x in xs], [y[0] for y in ys])
        dt = self.config.rollout_dt
        letters: list[int] = []
        for k in sorted(active):
            if k >= end:
                break
            evs = interval_events(order, [x[k] for x in xs], [x[k + 1] for x in xs],
                                  [y[k] for y in ys], [y[k + 1] for y in ys], k * dt, (k + 1) * dt)
            letters.extend(e.sign * e.rank for e in evs)
        y_end = [y[end] for y in ys]
        final = ranking([x[end] for x in xs], y_end)
        if order != final:
            letters.extend(e.sign * e.rank for e in settle_final(order, final, y_end, end * dt))
        return tuple(letters)


# -- hypothesis enumeration --------------------------------------------------

@dataclass(frozen=True)
class Hypothesis:
    """Path and speed choice for each agent in ``agents`` (those not yet done)."""

    agents: tuple[int, ...]
    paths: tuple[str, ...]
    speeds: tuple[int, ...]
    prior: float

    @property
    def options(self) -> tuple[tuple[str, int], ...]:
        return tuple(zip(self.paths, self.speeds))


def speed_prior(scene: Scene, j: int, pref: float, config: BeliefConfig,
                fixed: int | None = None) -> dict[int, float]:
    agent = scene.state.agents[j]
    if fixed is not None:
        return {fixed: 1.0}
    if agent.region == EXECUTION and config.execution_speed_known:
        return {scene.speed_idx[j]: 1.0}
    low, high = control_prior(pref)
    return {LOW: low, HIGH: high}


def live_agents(scene: Scene) -> tuple[int, ...]:
    """Agents still on their way; those at their goal have left the scene."""
    return tuple(j for j, a in enumerate(scene.state.agents) if a.region != DONE)


def hypotheses(scene: Scene, ego: int, ego_action: int | None = None, *,
               known_paths: bool = False, config: BeliefConfig = BeliefConfig()) -> Iterator[Hypothesis]:
    """Every (T, U) with nonzero prior over the live agents, ego's path fixed to its own."""
    agents = live_agents(scene)
    pref = config.assumed_pref if config.assumed_pref is not None else scene.specs[ego].pref_high
    path_opts = []
    speed_opts = []
    for j in agents:
        if j == ego:
            path_opts.append([(scene.specs[j].choice, 1.0)])
        else:
            pp = path_prior(scene, j, known_paths)
            path_opts.append([(c, p) for c, p in pp.items() if p > 0])
        sp = speed_prior(scene, j, pref, config, ego_action if j == ego else None)
        speed_opts.append([(u, p) for u, p in sorted(sp.items()) if p > 0])
    for T in itertools.product(*path_opts):
        pt = math.prod(p for _, p in T)
        for U in itertools.product(*speed_opts):
            yield Hypothesis(agents, tuple(c for c, _ in T), tuple(u for u, _ in U),
                             pt * math.prod(p for _, p in U))


def compute_belief(scene: Scene, ego: int, ego_action: int | None = None, *,
                   known_paths: bool = False, outcome: str = "braid",
                   config: BeliefConfig = BeliefConfig(), cache: RolloutCache | None = None,
                   records: list | None = None) -> Belief:
    """Belief over (outcome, collision-free) pairs for agent ``ego``.

    ``outcome="braid"`` clusters rollouts by braid in the ego frame;
    ``outcome="trajectory"`` keeps every hypothesis as its own outcome.
    """
    if outcome not in ("braid", "trajectory"):
        raise ValueError(f"unknown outcome type {outcome!r}")
    agents = live_agents(scene)
    bel = Belief()
    if len(agents) < 2 or ego not in agents:
        bel.add(Outcome(("identity",), COLLISION_FREE), 1.0)
        bel.hypotheses = 1
        return bel
    if cache is None:
        cache = RolloutCache(scene, config)
    n = len(agents)
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    frame = ego_frame(scene.specs[ego].side)
    sig_a, delta = config.sigmoid_a, config.sigmoid_delta
    skipped = 0.0
    hyps = list(hypotheses(scene, ego, ego_action, known_paths=known_paths, config=config))
    cache.prefetch_dmin((agents[a], o[a], agents[b], o[b])
                        for o in (h.options for h in hyps) for a, b in pairs)
    for h in hyps:
        opts = h.options
        d = min(cache.pair_dmin(agents[a], opts[a], agents[b], opts[b]) for a, b in pairs)
        pc = collision_prob(d, sig_a, delta)
        bel.hypotheses += 1
        letters = None
        degenerate = False
        if outcome == "braid":
            try:
                letters = cache.braid_letters(frame, agents, opts)
            except DegenerateCrossingError as exc:
                log.info("skipping hypothesis %s: %s", opts, exc)
                degenerate = True
        if records is not None:
            records.append({"t": round(scene.state.time, 9), "ego": ego, "agents": list(agents),
                            "paths": list(h.paths), "speeds": ["high" if u else "low" for u in h.speeds],
                            "prior": h.prior, "braid": None if letters is None else list(letters),
                            "d_min": d, "p_collision": pc, "degenerate": degenerate})
        if degenerate:
            # dropped; the remaining mass is renormalized below
            skipped += h.prior
            bel.skipped += 1
            continue
        key = cache.braid_key(letters, n) if outcome == "braid" else opts
        bel.add(Outcome(key, COLLISION_FREE), h.prior * (1.0 - pc))
        bel.add(Outcome(key, COLLISION), h.prior * pc)
    if skipped > 0:
        if skipped >= 1.0 - 1e-12:
            raise DegenerateCrossingError("every hypothesis was degenerate")
        scale = 1.0 / (1.0 - skipped)
        bel.entries = {o: p * scale for o, p in bel.entries.items()}
    return bel


def classify_rollout(letters_key: Hashable, d_min: float, config: BeliefConfig = BeliefConfig()
                     ) -> dict[Outcome, float]:
    """Split one rollout's unit mass between its collision-free and colliding outcome."""
    pc = collision_prob(d_min, config.sigmoid_a, config.sigmoid_delta)
    return {Outcome(letters_key, COLLISION_FREE): 1.0 - pc, Outcome(letters_key, COLLISION): pc}
