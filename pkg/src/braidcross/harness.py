"""Closed-loop experiments, scenario sweeps and their persistence."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .belief import BeliefConfig, RolloutCache
from .geometry import rect_distance
from .planner import PolicyCondition, decide
from .topology import SystemTrajectory
from .world import (DONE, EXECUTION, NEGOTIATION, AgentSpec, ControllerConfig,
                    IntersectionGeometry, Scene, step, tracking_controller, turn_choice)

log = logging.getLogger(__name__)

CONDITION_TAGS = ("C1", "C2", "C3", "C4", "C5")
THREADS_ENV = "BRAIDCROSS_THREADS"


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    routes: tuple[tuple[str, str], ...]  # (from_side, to_side) per agent
    grid_points: int
    speed_range: tuple[float, float] = (5.0, 10.0)

    @property
    def n(self) -> int:
        return len(self.routes)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(*self.speed_range, self.grid_points)

    @property
    def n_cells(self) -> int:
        return self.grid_points ** self.n

    def cell_speeds(self, cell: int) -> tuple[float, ...]:
        """High speeds of cell ``cell`` in lexicographic order of the grid product."""
        if not 0 <= cell < self.n_cells:
            raise IndexError(f"cell {cell} out of range for {self.id}")
        idx = np.unravel_index(cell, (self.grid_points,) * self.n)
        g = self.grid
        return tuple(float(g[k]) for k in idx)

    def cells(self) -> Iterable[int]:
        return range(self.n_cells)


SCENARIOS = {
    "S1": ScenarioSpec("S1", (("bottom", "top"), ("right", "left")), 12),
    "S2": ScenarioSpec("S2", (("bottom", "top"), ("right", "left"), ("top", "bottom")), 5),
    "S3": ScenarioSpec("S3", (("bottom", "top"), ("right", "left"), ("top", "bottom"),
                              ("left", "right")), 3),
}


def scenario(name: str) -> ScenarioSpec:
    try:
        return SCENARIOS[name.upper()]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}") from None


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.05
    cycle: float = 0.25
    timeout: float = 120.0
    v_low_fraction: float = 0.5
    pref_range: tuple[float, float] = (0.6, 0.8)
    geometry: IntersectionGeometry = IntersectionGeometry()
    controller: ControllerConfig = ControllerConfig()
    belief: BeliefConfig = BeliefConfig()

    @property
    def steps_per_cycle(self) -> int:
        k = round(self.cycle / self.dt)
        if k < 1 or abs(k * self.dt - self.cycle) > 1e-9:
            raise ValueError("planning cycle must be a whole number of steps")
        return k


def sample_prefs(seed: int, scenario_id: str, cell: int, n: int,
                 pref_range: tuple[float, float] = (0.6, 0.8)) -> tuple[float, ...]:
    """Per-agent high-speed preference; identical across conditions for a cell."""
    ss = np.random.SeedSequence([seed, int(scenario_id[1:]), cell])
    rng = np.random.default_rng(ss)
    return tuple(float(p) for p in rng.uniform(*pref_range, size=n))


def make_agents(spec: ScenarioSpec, cell: int, condition: str, seed: int, *,
                heterogeneous: bool = False, config: SimConfig = SimConfig()) -> list[AgentSpec]:
    speeds = spec.cell_speeds(cell)
    prefs = sample_prefs(seed, spec.id, cell, spec.n, config.pref_range)
    agents = []
    for i, ((a, b), v, p) in enumerate(zip(spec.routes, speeds, prefs)):
        inattentive = heterogeneous and i == 0
        agents.append(AgentSpec(i, a, turn_choice(a, b), config.v_low_fraction * v, v, p,
                                w=1.0 if inattentive else 0.5,
                                condition="C1" if inattentive else condition))
    return agents


@dataclass
class ExperimentResult:
    scenario: str
    condition: str
    heterogeneous: bool
    cell: int
    seed: int
    speeds: tuple[float, ...]
    prefs: tuple[float, ...]
    status: str = "ok"                 # ok | timeout | error
    collided: bool = False
    max_time: float = math.nan         # latest arrival at destination
    finish_times: tuple[float, ...] = ()
    entry_times: tuple[float, ...] = ()  # arrival at the intersection box
    min_distance: float = math.inf     # over pairs with an agent in execution
    mass_error: float = 0.0            # worst belief normalization error over all cycles
    error: str = ""
    trajectory: SystemTrajectory | None = field(default=None, repr=False)
    progress: np.ndarray | None = field(default=None, repr=False)  # (n, T) arc length
    decisions: list = field(default_factory=list, repr=False)
    hypotheses: list = field(default_factory=list, repr=False)  # diagnostic tables

    def log_meta(self) -> dict:
        """Header for the trajectory log: enough to rebuild frames and labels."""
        spec = scenario(self.scenario)
        return {"scenario": self.scenario, "condition": self.condition,
                "heterogeneous": self.heterogeneous, "cell": self.cell, "seed": self.seed,
                "sides": [a for a, _ in spec.routes], "destinations": [b for _, b in spec.routes],
                "speeds": list(self.speeds), "prefs": list(self.prefs)}

    @property
    def label(self) -> str:
        return self.condition + ("'" if self.heterogeneous else "")


RESULT_COLUMNS = ("scenario", "condition", "heterogeneous", "cell", "seed", "speeds", "prefs",
                  "status", "collided", "max_time", "finish_times", "entry_times",
                  "min_distance", "mass_error", "error")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(round(v, 9))
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def result_row(r: ExperimentResult) -> dict[str, str]:
    row = {c: _fmt(getattr(r, c)) for c in RESULT_COLUMNS}
    row["mass_error"] = f"{r.mass_error:.3e}"
    return row


def _pair_overlaps(poses: np.ndarray, regions: Sequence[int], g: IntersectionGeometry) -> float:
    """Smallest boundary distance over pairs where some agent is executing."""
    n = len(regions)
    best = math.inf
    diag = math.hypot(g.car_length, g.car_width)
    for i in range(n):
        for j in range(i + 1, n):
            if regions[i] != EXECUTION and regions[j] != EXECUTION:
                continue
            if regions[i] == DONE or regions[j] == DONE:
                continue
            dc = math.hypot(poses[i, 0] - poses[j, 0], poses[i, 1] - poses[j, 1])
            if dc - diag > min(best, 5.0):
                continue
            d = float(rect_distance(poses[i], poses[j], g.car_length, g.car_width))
            best = min(best, d)
    return best


def simulate(specs: Sequence[AgentSpec], config: SimConfig = SimConfig(), *,
             record: bool = True, trace: bool = False, diagnostics: bool = False) -> dict:
    """Run the closed loop until every agent is done or the timeout.

    ``diagnostics`` keeps the hypothesis tables behind every decision.
    """
    g = config.geometry
    scene = Scene.start(g, specs)
    n = scene.n
    state = scene.state
    speed_idx = list(scene.speed_idx)
    k_cycle = config.steps_per_cycle
    times = [0.0]
    frames = [state.poses()]
    prog = [[a.progress for a in state.agents]]
    entry = [math.nan] * n
    finish = [math.nan] * n
    d_min = math.inf
    decisions = []
    hyp_table: list[dict] = []
    mass_error = 0.0
    k = 0
    max_steps = int(round(config.timeout / config.dt))
    while k < max_steps and any(a.region != DONE for a in state.agents):
        if k % k_cycle == 0:
            snap = Scene(state, scene.specs, scene.path_sets, tuple(speed_idx))
            cache = RolloutCache(snap, config.belief)
            # simultaneous moves: every agent decides from the same snapshot
            made = [decide(snap, i, specs[i].condition, config.belief, cache,
                           hyp_table if diagnostics else None) for i in range(n)]
            for dcs in made:
                mass_error = max(mass_error, dcs.mass_error)
                if state.agents[dcs.agent].region == NEGOTIATION:
                    speed_idx[dcs.agent] = dcs.choice
                    if trace:
                        decisions.append(dcs.record())
        controls = []
        for i, a in enumerate(state.agents):
            if a.region == DONE:
                controls.append((0.0, 0.0))
            else:
                v = specs[i].speeds[speed_idx[i]]
                controls.append(tracking_controller(a.pose, state.paths[i], v, config.controller))
        state = step(state, controls, config.dt, config.controller.wheelbase)
        k += 1
        t = k * config.dt
        for i, a in enumerate(state.agents):
            if a.region >= EXECUTION and math.isnan(entry[i]):
                entry[i] = t
            if a.region == DONE and math.isnan(finish[i]):
                finish[i] = t
        if n > 1:
            d_min = min(d_min, _pair_overlaps(state.poses(), [a.region for a in state.agents], g))
        if record:
            times.append(t)
            frames.append(state.poses())
            prog.append([min(a.progress, p.length) for a, p in zip(state.agents, state.paths)])
    out = {"entry": tuple(entry), "finish": tuple(finish), "d_min": d_min,
           "timeout": any(a.region != DONE for a in state.agents), "decisions": decisions,
           "mass_error": mass_error, "hypotheses": hyp_table}
    if record:
        out["trajectory"] = SystemTrajectory(np.array(times), np.transpose(np.array(frames), (1, 0, 2)))
        out["progress"] = np.array(prog).T
    return out


def run_experiment(scenario_id: str, cell: int, condition: str, seed: int = 0, *,
                   heterogeneous: bool = False, config: SimConfig = SimConfig(),
                   record: bool = False, trace: bool = False,
                   diagnostics: bool = False) -> ExperimentResult:
    spec = scenario(scenario_id)
    cond = PolicyCondition.of(condition).tag
    specs = make_agents(spec, cell, cond, seed, heterogeneous=heterogeneous, config=config)
    res = ExperimentResult(spec.id, cond, heterogeneous, cell, seed,
                           tuple(s.v_high for s in specs), tuple(round(s.pref_high, 12) for s in specs))
    try:
        out = simulate(specs, config, record=record, trace=trace, diagnostics=diagnostics)
    except Exception as exc:  # recorded, the sweep carries on
        log.exception("experiment %s/%s cell %d failed", spec.id, cond, cell)
        res.status = "error"
        res.error = f"{type(exc).__name__}: {exc}"
        return res
    res.entry_times = tuple(round(t, 9) for t in out["entry"])
    res.finish_times = tuple(round(t, 9) for t in out["finish"])
    res.min_distance = out["d_min"]
    res.mass_error = out["mass_error"]
    res.collided = out["d_min"] <= 0.0
    if out["timeout"]:
        res.status = "timeout"
    else:
        res.max_time = max(res.finish_times)
    res.trajectory = out.get("trajectory")
    res.progress = out.get("progress")
    res.decisions = out["decisions"]
    res.hypotheses = out["hypotheses"]
    return res


# -- sweeps -------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionSummary:
    scenario: str
    condition: str
    heterogeneous: bool
    n: int
    collisions: int
    timeouts: int
    errors: int
    collision_frequency: float
    collision_sd: float
    time_q25: float
    time_q50: float
    time_q75: float

    @property
    def label(self) -> str:
        return self.condition + ("'" if self.heterogeneous else "")


def bernoulli_sd(p: float, n: int) -> float:
    """Standard deviation of the mean of ``n`` Bernoulli(p) trials."""
    return math.sqrt(p * (1.0 - p) / n) if n > 0 else math.nan


def summarize(results: Sequence[ExperimentResult]) -> list[ConditionSummary]:
    groups: dict[tuple, list[ExperimentResult]] = {}
    for r in results:
        groups.setdefault((r.scenario, r.condition, r.heterogeneous), []).append(r)
    out = []
    for (sc, cond, het), rs in sorted(groups.items()):
        valid = [r for r in rs if r.status != "error"]
        hits = sum(r.collided for r in valid)
        p = hits / len(valid) if valid else math.nan
        times = np.array([r.max_time for r in valid if r.status == "ok"])
        q = np.percentile(times, [25, 50, 75]) if times.size else [math.nan] * 3
        out.append(ConditionSummary(sc, cond, het, len(valid), hits,
                                    sum(r.status == "timeout" for r in rs),
                                    sum(r.status == "error" for r in rs),
                                    p, bernoulli_sd(p, len(valid)), *(float(x) for x in q)))
    return out


def _job(args):
    scenario_id, cell, condition, seed, het, config = args
    return run_experiment(scenario_id, cell, condition, seed, heterogeneous=het, config=config)


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def run_sweep(scenarios: Sequence[str] = ("S1", "S2", "S3"), conditions: Sequence[str] = CONDITION_TAGS,
              seed: int = 0, *, heterogeneous: bool = False, config: SimConfig = SimConfig(),
              cells: Sequence[int] | None = None, workers: int | None = None
              ) -> tuple[list[ConditionSummary], list[ExperimentResult]]:
    jobs = []
    for sc in scenarios:
        spec = scenario(sc)
        for cond in conditions:
            for cell in (cells if cells is not None else spec.cells()):
                jobs.append((spec.id, cell, PolicyCondition.of(cond).tag, seed, heterogeneous, config))
    workers = workers or worker_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_job, jobs, chunksize=4))
    else:
        results = [_job(j) for j in jobs]
    return summarize(results), results


# -- persistence --------------------------------------------------------------

def results_csv(results: Sequence[ExperimentResult]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in results:
        w.writerow(result_row(r))
    return buf.getvalue()


def write_results(path: str | Path, results: Sequence[ExperimentResult]) -> None:
    Path(path).write_text(results_csv(results), encoding="utf-8")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split())


def read_results(path: str | Path) -> list[ExperimentResult]:
    """Inverse of ``write_results`` for the tabulated fields."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ExperimentResult(
                row["scenario"], row["condition"], row["heterogeneous"] == "1", int(row["cell"]),
                int(row["seed"]), _floats(row["speeds"]), _floats(row["prefs"]),
                status=row["status"], collided=row["collided"] == "1",
                max_time=float(row["max_time"]), finish_times=_floats(row["finish_times"]),
                entry_times=_floats(row["entry_times"]), min_distance=float(row["min_distance"]),
                mass_error=float(row["mass_error"]), error=row["error"]))
    return out


def summary_records(summary: Sequence[ConditionSummary]) -> list[dict]:
    recs = []
    for s in summary:
        d = asdict(s)
        d["label"] = s.label
        recs.append({k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()})
    return recs


def write_summary(path: str | Path, summary: Sequence[ConditionSummary]) -> None:
    Path(path).write_text(json.dumps(summary_records(summary), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def write_summary_csv(path: str | Path, summary: Sequence[ConditionSummary]) -> None:
    recs = summary_records(summary)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if not recs:
            return
        w = csv.DictWriter(fh, fieldnames=list(recs[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(recs)


def _finite(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_decisions(path: str | Path, decisions: Sequence[dict]) -> None:
    """Line-delimited JSON; infinite distances are written as null."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in decisions:
            fh.write(json.dumps({k: _finite(v) for k, v in rec.items()}, sort_keys=True) + "\n")
