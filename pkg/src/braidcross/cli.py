"""Command line entry point: ``braidcross {run,sweep,replay,braid}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .belief import ego_frame
from .braid import format_word
from .config import dump_config, load_config
from .geometry import rect_distance
from .harness import (CONDITION_TAGS, SCENARIOS, ExperimentResult, run_experiment, run_sweep,
                      scenario, summarize, write_decisions, write_results, write_summary,
                      write_summary_csv)
from .plotting import emit_plots, progress_chart, trajectory_chart
from .topology import (ProjectionFrame, TopologyError, extract_braid, read_trajectory_log,
                       write_trajectory_log)

log = logging.getLogger("braidcross")


def _scenario_ids(values) -> list[str]:
    return [scenario(v).id for v in values]


def _condition_tags(values) -> list[str]:
    out = []
    for v in values:
        tag = v.upper().rstrip("'")
        if tag not in CONDITION_TAGS:
            raise SystemExit(f"unknown condition {v!r}")
        out.append(tag)
    return out


def _write_outputs(out: Path, results: list[ExperimentResult], config, *, logs: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(results)
    write_results(out / "results.csv", results)
    write_summary(out / "summary.json", summary)
    write_summary_csv(out / "summary.csv", summary)
    dump_config(config, out / "config.yaml")
    emit_plots(summary, out / "plots")
    if logs:
        (out / "logs").mkdir(exist_ok=True)
        for r in results:
            stem = f"{r.scenario.lower()}_{r.condition.lower()}{'_het' if r.heterogeneous else ''}_cell{r.cell:03d}"
            if r.trajectory is not None:
                write_trajectory_log(out / "logs" / f"{stem}.jsonl", r.trajectory, r.log_meta())
                progress_chart(r, out / "plots" / f"{stem}_progress.svg",
                               config.geometry.lane_length, window=3.0)
            if r.decisions:
                write_decisions(out / "logs" / f"{stem}_decisions.jsonl", r.decisions)
            if r.hypotheses:
                write_decisions(out / "logs" / f"{stem}_hypotheses.jsonl", r.hypotheses)
    for s in summary:
        print(f"{s.scenario} {s.label:4s} n={s.n:3d} collisions={s.collision_frequency:.3f}"
              f" (sd {s.collision_sd:.3f}) time q25/50/75={s.time_q25:.2f}/{s.time_q50:.2f}/"
              f"{s.time_q75:.2f} timeouts={s.timeouts} errors={s.errors}")


def cmd_run(args) -> int:
    config = load_config(args.config)
    sc = scenario(args.scenario)
    cond = _condition_tags([args.condition])[0]
    cells = args.cell if args.cell else list(sc.cells())
    results = [run_experiment(sc.id, c, cond, args.seed, heterogeneous=args.heterogeneous,
                              config=config, record=True, trace=True,
                              diagnostics=args.diagnostics) for c in cells]
    _write_outputs(Path(args.out), results, config, logs=True)
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    scenarios = list(SCENARIOS) if args.all or not args.scenario else _scenario_ids(args.scenario)
    conditions = list(CONDITION_TAGS) if args.all or not args.condition else _condition_tags(args.condition)
    settings = [False, True] if args.all else [args.heterogeneous]
    results = []
    for het in settings:
        _, rs = run_sweep(scenarios, conditions, args.seed, heterogeneous=het, config=config,
                          workers=args.workers)
        results.extend(rs)
    _write_outputs(Path(args.out), results, config, logs=False)
    return 0


def _frame_for(meta: dict, agent: int | None, angle: float | None) -> ProjectionFrame:
    if angle is not None:
        return ProjectionFrame.from_angle(angle)
    sides = meta.get("sides")
    if agent is None or not sides:
        return ProjectionFrame.from_angle(0.0)
    if not 0 <= agent < len(sides):
        raise SystemExit(f"agent {agent} out of range (log holds {len(sides)} agents)")
    return ego_frame(sides[agent])


def cmd_braid(args) -> int:
    try:
        traj, meta = read_trajectory_log(args.log)
    except (OSError, TopologyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    frame = _frame_for(meta, args.agent, args.angle)
    print(format_word(extract_braid(traj, frame)))
    return 0


def cmd_replay(args) -> int:
    try:
        traj, meta = read_trajectory_log(args.log)
    except (OSError, TopologyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    n = traj.n_agents
    label = " ".join(f"{k}={meta[k]}" for k in ("scenario", "condition", "cell", "seed") if k in meta)
    print(f"{label} agents={n} samples={len(traj.times)} t_end={traj.times[-1]:.2f}")
    for i in range(n):
        frame = _frame_for(meta, i, None)
        print(f"agent {i}: braid {format_word(extract_braid(traj, frame))}")
    length = args.car_length
    width = args.car_width
    for i in range(n):
        for j in range(i + 1, n):
            d = rect_distance(traj.states[i], traj.states[j], length, width)
            k = int(np.argmin(d))
            print(f"pair {i}-{j}: min distance {float(d[k]):.3f} m at t={traj.times[k]:.2f}")
    if args.out:
        path = trajectory_chart(traj, Path(args.out), title=label)
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="braidcross", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario under one condition")
    r.add_argument("--scenario", required=True, choices=[s.lower() for s in SCENARIOS] + list(SCENARIOS))
    r.add_argument("--condition", required=True)
    r.add_argument("--heterogeneous", action="store_true", help="agent 1 is inattentive")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--cell", type=int, nargs="*", help="cell indices (default: all)")
    r.add_argument("--out", required=True)
    r.add_argument("--config", help="YAML config overrides")
    r.add_argument("--diagnostics", action="store_true", help="dump hypothesis tables")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run every cell of several scenarios and conditions")
    s.add_argument("--all", action="store_true",
                   help="S1-S3 x C1-C5, homogeneous and heterogeneous")
    s.add_argument("--scenario", nargs="*")
    s.add_argument("--condition", nargs="*")
    s.add_argument("--heterogeneous", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, help="process count (default: BRAIDCROSS_THREADS or all cores)")
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="YAML config overrides")
    s.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("replay", help="summarize a trajectory log")
    rp.add_argument("--log", required=True)
    rp.add_argument("--out", help="write an SVG of the paths and x-t projection")
    rp.add_argument("--car-length", type=float, default=4.7)
    rp.add_argument("--car-width", type=float, default=1.7)
    rp.set_defaults(func=cmd_replay)

    b = sub.add_parser("braid", help="print the braid word of a trajectory log")
    b.add_argument("--log", required=True)
    b.add_argument("--agent", type=int, help="use this agent's frame (needs sides in the log header)")
    b.add_argument("--angle", type=float, help="projection axis angle in radians instead")
    b.set_defaults(func=cmd_braid)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
