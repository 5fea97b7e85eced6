import math

import pytest

from braidcross.belief import (HIGH, LOW, BeliefConfig, RolloutCache, compute_belief, entropy,
                               hypotheses)
from braidcross.harness import run_experiment
from braidcross.planner import (CONDITIONS, Decision, PolicyCondition, candidate_entropies, decide,
                                tie_break)
from braidcross.world import EXECUTION, Scene
from scenes import ROUTES, make_scene

CFG = BeliefConfig()


def test_tie_break_examples():
    assert tie_break({LOW: 0.0, HIGH: 0.0}) == HIGH
    assert tie_break({LOW: 0.5, HIGH: 0.5 - 1e-12}) == HIGH
    assert tie_break({LOW: 0.5 - 1e-12, HIGH: 0.5}) == HIGH
    assert tie_break({LOW: 0.3, HIGH: 0.7}) == LOW
    assert tie_break({LOW: 0.7, HIGH: 0.3}) == HIGH


def test_condition_flags():
    assert [c.knows_paths for c in CONDITIONS.values()] == [False, False, True, False, True]
    assert [c.topological for c in CONDITIONS.values()] == [False, True, True, False, False]
    assert PolicyCondition.of("c3'") is CONDITIONS["C3"]
    with pytest.raises(ValueError):
        PolicyCondition.of("C9")


@pytest.mark.parametrize("advance", [0.0, 4.0, 7.4])
def test_c1_always_high(advance):
    scene = make_scene(4, advance=advance)
    for ego in range(4):
        d = decide(scene, ego, "C1")
        assert d.choice == HIGH and d.entropies is None


def test_inattentive_agent_ignores_others():
    scene = make_scene(3, w=1.0)
    for ego in range(3):
        assert decide(scene, ego, "C2").choice == HIGH


def test_single_agent_ties_to_high():
    scene = make_scene(1)
    d = decide(scene, 0, "C2")
    assert d.entropies == {LOW: 0.0, HIGH: 0.0}
    assert d.choice == HIGH


def test_execution_region_holds_speed():
    scene = make_scene(2, advance=8.5)
    assert scene.state.agents[1].region == EXECUTION
    held = Scene(scene.state, scene.specs, scene.path_sets, (scene.speed_idx[0], LOW))
    d = decide(held, 1, "C2")
    assert d.choice == LOW and d.entropies is None


@pytest.mark.parametrize("tag", ["C2", "C3", "C4", "C5"])
def test_argmin_against_exhaustive_evaluation(tag):
    scene = make_scene(3, advance=2.0)
    cond = PolicyCondition.of(tag)
    for ego in range(3):
        d = decide(scene, ego, cond)
        ent = {}
        for u in (LOW, HIGH):
            bel = compute_belief(scene, ego, u, known_paths=cond.knows_paths,
                                 outcome="braid" if cond.topological else "trajectory")
            ent[u] = entropy(bel, CFG.entropy_mode)
        assert d.entropies == pytest.approx(ent, abs=1e-12)
        other = LOW if d.choice == HIGH else HIGH
        assert ent[d.choice] <= ent[other] + 1e-9


def test_mass_error_reported():
    d = decide(make_scene(4), 3, "C2")
    assert 0.0 <= d.mass_error <= 1e-9


@pytest.mark.parametrize("tag", ["C2", "C3", "C4", "C5"])
def test_relabeling_other_agents(tag):
    speeds = (7.0, 6.0, 8.0, 9.0)
    prefs = (0.7, 0.65, 0.8, 0.6)
    base = make_scene(4, speeds, prefs, advance=1.0)
    ref = candidate_entropies(base, 3, PolicyCondition.of(tag))
    for perm in [(2, 0, 1, 3), (1, 2, 0, 3)]:
        scene = make_scene(4, [speeds[k] for k in perm], [prefs[k] for k in perm], advance=1.0,
                           routes=[ROUTES[k] for k in perm])
        got = candidate_entropies(scene, 3, PolicyCondition.of(tag))
        assert got == pytest.approx(ref, abs=1e-12)


def test_trajectory_outcomes_outnumber_braids():
    scene = make_scene(4, advance=1.0)
    cache = RolloutCache(scene, CFG)
    for ego in range(4):
        for u in (LOW, HIGH):
            traj = compute_belief(scene, ego, u, outcome="trajectory", cache=cache)
            braid = compute_belief(scene, ego, u, outcome="braid", cache=cache)
            n_hyp = len(list(hypotheses(scene, ego, u)))
            traj_keys = {o.key for o in traj.entries}
            braid_keys = {o.key for o in braid.entries}
            assert len(traj_keys) == n_hyp
            assert len(braid_keys) <= len(traj_keys)


def test_decision_record():
    rec = Decision(0.25, 1, LOW, {LOW: 0.1, HIGH: 0.2}, 1e-16).record()
    assert rec == {"t": 0.25, "agent": 1, "choice": "low", "entropy_low": 0.1,
                   "entropy_high": 0.2, "mass_error": 1e-16}
    assert Decision(0.0, 0, HIGH).record() == {"t": 0.0, "agent": 0, "choice": "high"}


def first_divergence(decisions):
    by_t = {}
    for d in decisions:
        by_t.setdefault(d["t"], {})[d["agent"]] = d["choice"]
    for t in sorted(by_t):
        if len(set(by_t[t].values())) > 1:
            return t
    return math.inf


@pytest.mark.parametrize("cell", [0, 13, 143])
def test_equal_speed_arrivals_desynchronize(cell):
    # diagonal cells of S1: both agents share the same high speed
    r = run_experiment("S1", cell, "C2", 0, trace=True)
    assert r.speeds[0] == r.speeds[1]
    assert first_divergence(r.decisions) <= 1.0
    assert r.entry_times[0] != r.entry_times[1]


def test_decisions_reproducible():
    a = run_experiment("S2", 31, "C2", 3, trace=True)
    b = run_experiment("S2", 31, "C2", 3, trace=True)
    assert a.decisions == b.decisions
    assert a.entry_times == b.entry_times and a.finish_times == b.finish_times


def test_negotiation_decisions_only_in_trace():
    r = run_experiment("S1", 40, "C4", 0, trace=True, record=True)
    # every traced choice was made while the agent was still negotiating
    entry = r.entry_times
    for d in r.decisions:
        assert d["t"] < entry[d["agent"]] + 1e-9
