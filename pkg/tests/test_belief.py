import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from braidcross.belief import (HIGH, LOW, Belief, BeliefConfig, Outcome,
                               RolloutCache, classify_rollout, collision_prob, compute_belief,
                               control_prior, entropy, hypotheses, path_prior)
from braidcross.braid import canonical_key, word
from braidcross.topology import DegenerateCrossingError
from braidcross.world import EXECUTION, NEGOTIATION, PATH_CHOICES
from oracles import belief_by_summation as oracle
from scenes import make_scene

CFG = BeliefConfig()


def as_dict(bel):
    return {(o.key, o.collision_free): p for o, p in bel.entries.items()}


def assert_same(bel, ref, tol=1e-12):
    got = as_dict(bel)
    assert set(got) == set(ref)
    for k in ref:
        assert got[k] == pytest.approx(ref[k], abs=tol)


def test_path_prior():
    scene = make_scene(2)
    pp = path_prior(scene, 1)
    assert pp == {c: pytest.approx(1 / 3) for c in PATH_CHOICES}
    late = make_scene(2, advance=9.0)
    assert late.state.agents[1].region == EXECUTION
    assert path_prior(late, 1) == {"left": 0.0, "straight": 1.0, "right": 0.0}
    assert math.fsum(path_prior(scene, 1, known=True).values()) == 1.0


def test_control_prior():
    low, high = control_prior(0.7)
    assert (low, high) == (pytest.approx(0.3), 0.7)


def test_collision_prob_examples():
    a, d = 10.0, 0.5
    assert collision_prob(d, a, d) == 0.5
    assert collision_prob(math.inf, a, d) == 0.0
    assert collision_prob(d - math.log(3) / a, a, d) == pytest.approx(0.75, abs=1e-15)
    with pytest.raises(ValueError):
        collision_prob(1.0, 0.0, 0.5)


@given(st.floats(0, 5), st.floats(0, 5))
def test_collision_prob_decreasing(x, y):
    if x < y:
        assert collision_prob(x, 10, 0.5) >= collision_prob(y, 10, 0.5)
    # strict once the gap is resolvable in double precision
    if y - x > 1e-6 and collision_prob(y, 10, 0.5) > 0:
        assert collision_prob(x, 10, 0.5) > collision_prob(y, 10, 0.5)


def test_classify_rollout_examples():
    k = canonical_key(word(2, [1]))
    assert classify_rollout(k, math.inf) == {Outcome(k, True): 1.0, Outcome(k, False): 0.0}
    split = classify_rollout(k, CFG.sigmoid_delta)
    assert split[Outcome(k, True)] == split[Outcome(k, False)] == 0.5
    # equal braids merge into one outcome weighted by the priors
    bel = Belief()
    for prior, letters in ((0.25, [1, 2, 1]), (0.5, [2, 1, 2])):
        for o, p in classify_rollout(canonical_key(word(3, letters)), math.inf).items():
            bel.add(o, prior * p)
    assert bel.free() == {canonical_key(word(3, [1, 2, 1])): 0.75}


def test_entropy_examples():
    assert entropy({"a": 1.0}) == 0.0
    assert entropy({"a": 0.5, "b": 0.5}) == pytest.approx(math.log(2), abs=1e-12)
    assert entropy({"a": 0.25, "b": 0.25, "c": 0.5}) == pytest.approx(1.5 * math.log(2), abs=1e-12)
    for k in range(1, 9):
        assert entropy({i: 1 / k for i in range(k)}) == pytest.approx(math.log(k), abs=1e-12)
    assert entropy({"a": 0.0, "b": 1.0}) == 0.0
    with pytest.raises(ValueError):
        entropy(Belief(), "bogus")


def test_entropy_modes():
    bel = Belief({Outcome("x", True): 0.25, Outcome("y", True): 0.25, Outcome("x", False): 0.5})
    assert entropy(bel, "free") == pytest.approx(0.5 * math.log(4))
    assert entropy(bel, "joint") == pytest.approx(1.5 * math.log(2))
    assert entropy(bel, "conditional") == pytest.approx(math.log(2))


def test_single_agent():
    scene = make_scene(1)
    bel = compute_belief(scene, 0, HIGH)
    assert len(bel) == 1 and bel.total() == 1.0 and entropy(bel) == 0.0


def test_hypothesis_counts():
    s2 = make_scene(2)
    assert len(list(hypotheses(s2, 0, HIGH, known_paths=True))) == 2
    assert len(list(hypotheses(s2, 0, None, known_paths=True))) == 4
    s4 = make_scene(4)
    hs = list(hypotheses(s4, 0))
    assert len(hs) == 27 * 16
    assert math.fsum(h.prior for h in hs) == pytest.approx(1.0, abs=1e-12)
    assert len(list(hypotheses(s4, 2, LOW))) == 27 * 8


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("ego_action", [None, LOW, HIGH])
def test_matches_direct_summation(n, ego_action):
    scene = make_scene(n)
    ego = n - 1
    bel = compute_belief(scene, ego, ego_action)
    assert_same(bel, oracle(scene, ego, ego_action))
    assert bel.total() == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("outcome", ["braid", "trajectory"])
@pytest.mark.parametrize("known", [False, True])
def test_matches_direct_summation_mid_run(outcome, known):
    scene = make_scene(4, advance=7.4)
    regions = [a.region for a in scene.state.agents]
    assert EXECUTION in regions and NEGOTIATION in regions
    for ego in range(4):
        bel = compute_belief(scene, ego, HIGH, known_paths=known, outcome=outcome)
        assert_same(bel, oracle(scene, ego, HIGH, known, outcome))


def test_shared_cache_gives_same_beliefs():
    scene = make_scene(3, advance=3.0)
    cache = RolloutCache(scene, CFG)
    for ego in range(3):
        for u in (LOW, HIGH):
            a = compute_belief(scene, ego, u, cache=cache)
            b = compute_belief(scene, ego, u)
            assert as_dict(a) == as_dict(b)


def test_conditioning_consistency():
    scene = make_scene(3)
    ego = 1
    pref = scene.specs[ego].pref_high
    full = as_dict(compute_belief(scene, ego, None))
    mix = {}
    for u, w in ((LOW, 1 - pref), (HIGH, pref)):
        for k, p in as_dict(compute_belief(scene, ego, u)).items():
            mix[k] = mix.get(k, 0.0) + w * p
    assert set(mix) == set(full)
    for k in full:
        assert mix[k] == pytest.approx(full[k], abs=1e-12)


def test_trajectory_outcomes_never_merge():
    scene = make_scene(3)
    braid = compute_belief(scene, 0, HIGH)
    traj = compute_belief(scene, 0, HIGH, outcome="trajectory")
    n_h = 9 * 4
    assert len(traj.free()) == n_h
    assert len(braid.free()) <= n_h


def test_records_dump():
    scene = make_scene(2)
    recs = []
    compute_belief(scene, 0, HIGH, records=recs)
    assert len(recs) == 3 * 2
    assert {"paths", "speeds", "prior", "braid", "d_min", "p_collision"} <= set(recs[0])
    assert math.fsum(r["prior"] for r in recs) == pytest.approx(1.0)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.sampled_from(np.linspace(5, 10, 6).tolist()), min_size=3, max_size=3),
       st.floats(0, 6), st.sampled_from(["free", "joint", "conditional"]))
def test_normalized_and_entropy_bounds(speeds, advance, mode):
    scene = make_scene(3, speeds=tuple(speeds), advance=advance)
    for ego in range(3):
        bel = compute_belief(scene, ego, HIGH)
        assert all(p >= 0 for p in bel.entries.values())
        assert bel.total() == pytest.approx(1.0, abs=1e-9)
        nonzero = sum(p > 0 for p in bel.entries.values())
        h = entropy(bel, mode)
        assert -1e-12 <= h <= math.log(max(nonzero, 1)) + 1e-9


def test_records_keep_degenerate_hypotheses(monkeypatch):
    scene = make_scene(3)
    plain = RolloutCache.braid_letters

    def flaky(self, frame, agents, opts):
        if opts[1][0] == "left":
            raise DegenerateCrossingError("strands 0 and 1 coincide at a crossing")
        return plain(self, frame, agents, opts)

    monkeypatch.setattr(RolloutCache, "braid_letters", flaky)
    recs = []
    bel = compute_belief(scene, 0, HIGH, records=recs)
    assert bel.skipped == sum(r["degenerate"] for r in recs) > 0
    assert len(recs) == bel.hypotheses
    assert all(r["braid"] is None for r in recs if r["degenerate"])
    assert math.fsum(r["prior"] for r in recs) == pytest.approx(1.0)
    # the rest is renormalized
    assert bel.total() == pytest.approx(1.0, abs=1e-12)
