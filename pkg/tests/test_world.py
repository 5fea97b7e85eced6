import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from braidcross.geometry import min_rect_distance, rect_distance
from braidcross.world import (DONE, EXECUTION, NEGOTIATION, AgentSpec, ControllerConfig,
                              IntersectionGeometry, TrackingError, WorldError, WorldState,
                              build_path, destination, min_distance, path_set, rollout, step,
                              tracking_controller, turn_choice)
from oracles import sampled_rect_distance

G = IntersectionGeometry()
L, W = G.car_length, G.car_width


def test_destinations():
    assert destination("bottom", "straight") == "top"
    assert destination("bottom", "left") == "left"
    assert destination("bottom", "right") == "right"
    assert turn_choice("right", "left") == "straight"
    assert turn_choice("top", "left") == "right"


def test_straight_path():
    p = build_path(G, "bottom", "top")
    assert p.length == pytest.approx(100 + 7.2)
    assert p.entry_mark == 50.0
    x, y, th = p.pose_at(np.array([0.0, p.length]))
    assert x.tolist() == pytest.approx([1.8, 1.8])
    assert y.tolist() == pytest.approx([-53.6, 53.6])
    assert th[0] == pytest.approx(math.pi / 2)


def test_turn_paths_tangent_and_ordered():
    ps = path_set(G, "bottom")
    assert ps["right"].length < ps["straight"].length < ps["left"].length
    # the fillet radius is fixed by tangency to both centrelines
    assert ps["right"].segments[1].radius == pytest.approx(1.8)
    assert ps["left"].segments[1].radius == pytest.approx(5.4)
    for c, p in ps.items():
        s = np.linspace(0, p.length, 4001)
        x, y, th = p.pose_at(s)
        # C1: positions and headings are continuous
        assert np.max(np.hypot(np.diff(x), np.diff(y))) <= (s[1] - s[0]) * 1.0001
        assert np.max(np.abs(np.diff(np.unwrap(th)))) < 0.02
    xl, yl, _ = ps["left"].pose_at(ps["left"].length)
    assert (float(xl), float(yl)) == pytest.approx((-53.6, 1.8))


def test_path_errors():
    with pytest.raises(WorldError):
        build_path(G, "top", "top")
    with pytest.raises(WorldError):
        build_path(G, "middle", "top")


def test_projection_round_trip():
    p = build_path(G, "right", "bottom")
    for s in np.linspace(0, p.length, 37):
        x, y, _ = p.pose_at(s)
        s2, e, _, _ = p.project(float(x), float(y))
        assert s2 == pytest.approx(s, abs=1e-9) and abs(e) < 1e-9


def test_controller_examples():
    p = build_path(G, "bottom", "top")
    v, steer = tracking_controller((1.8, -20.0, math.pi / 2), p, 7.0)
    assert v == 7.0 and steer == pytest.approx(0.0, abs=1e-12)
    # left of the path (smaller x when heading north) -> steer right (negative)
    _, steer = tracking_controller((1.3, -20.0, math.pi / 2), p, 7.0)
    assert steer < 0
    with pytest.raises(TrackingError):
        tracking_controller((10.0, -20.0, math.pi / 2), p, 7.0)
    _, steer = tracking_controller((-40.0, -20.0, math.pi / 2), p, 7.0,
                                   ControllerConfig(capture_lateral=50.0))
    assert steer == pytest.approx(-1.0)


def _closed_loop(path, pose, v, dist):
    w = WorldState.initial(G, [path], [v])
    w = WorldState(G, w.paths, (w.agents[0].__class__(*pose, v, 0.0),), 0.0)
    travelled = 0.0
    errs = []
    while travelled < dist:
        w = step(w, [tracking_controller(w.agents[0].pose, path, v)], 0.05)
        travelled += v * 0.05
        errs.append(path.project(w.agents[0].x, w.agents[0].y)[1])
    return np.array(errs)


def test_offset_converges_within_30m():
    p = build_path(G, "bottom", "top")
    errs = _closed_loop(p, (2.3, -50.0, math.pi / 2), 5.0, 30.0)
    assert abs(errs[-1]) < 0.05


@pytest.mark.parametrize("choice", ["left", "right", "straight"])
def test_tracking_error_small_on_turns(choice):
    p = path_set(G, "bottom")[choice]
    x, y, th = p.pose_at(0.0)
    errs = _closed_loop(p, (float(x), float(y), float(th)), 10.0, p.length - 5)
    assert np.max(np.abs(errs)) < 0.2


def test_step_examples():
    p = build_path(G, "bottom", "top")
    w = WorldState.initial(G, [p], [10.0])
    w1 = step(w, [(0.0, 0.0)], 0.1)
    assert w1.agents[0].pose == w.agents[0].pose
    w2 = step(w, [(10.0, 0.0)], 0.1)
    assert w2.agents[0].y - w.agents[0].y == pytest.approx(1.0)
    assert w2.time == pytest.approx(0.1)
    with pytest.raises(WorldError):
        step(w, [(1.0, 0.0)], 0.0)


def test_s1_crossing_time():
    a, b = build_path(G, "bottom", "top"), build_path(G, "right", "left")
    w = WorldState.initial(G, [a, b], [5.0, 5.0])
    regions = [[NEGOTIATION, NEGOTIATION]]
    while any(ag.region != DONE for ag in w.agents):
        w = step(w, [tracking_controller(ag.pose, pth, 5.0) if ag.region != DONE else (0, 0)
                     for ag, pth in zip(w.agents, w.paths)], 0.05)
        regions.append([ag.region for ag in w.agents])
    assert w.time == pytest.approx(107.2 / 5, abs=0.05)
    for k in range(2):
        seq = [r[k] for r in regions]
        assert seq == sorted(seq)  # regions never go back
        assert EXECUTION in seq
    assert all(ag.speed == 0.0 for ag in w.agents)


def test_step_is_deterministic():
    p = build_path(G, "left", "bottom")
    w = WorldState.initial(G, [p], [8.0])
    a = b = w
    for _ in range(200):
        a = step(a, [tracking_controller(a.agents[0].pose, p, 8.0)], 0.05)
        b = step(b, [tracking_controller(b.agents[0].pose, p, 8.0)], 0.05)
    assert a.agents == b.agents


def test_rect_distance_examples():
    assert float(rect_distance((0, 0, 0), (0, 0, 0), L, W)) == 0.0
    assert float(rect_distance((0, 0, 0), (L + 1.0, 0, 0), L, W)) == pytest.approx(1.0)
    assert float(rect_distance((0, 0, 0), (0, W + 0.5, 0), L, W)) == pytest.approx(0.5)


@settings(max_examples=25, deadline=None)
@given(st.floats(-8, 8), st.floats(-8, 8), st.floats(-3.2, 3.2), st.floats(-3.2, 3.2))
def test_rect_distance_matches_sampling(x, y, ta, tb):
    d = float(rect_distance((0, 0, ta), (x, y, tb), L, W))
    ref = sampled_rect_distance((0, 0, ta), (x, y, tb), L, W)
    assert d == pytest.approx(ref, abs=1e-3)


@settings(max_examples=50, deadline=None)
@given(st.floats(-8, 8), st.floats(-8, 8), st.floats(-3.2, 3.2), st.floats(-3.2, 3.2),
       st.floats(-3.2, 3.2), st.floats(-20, 20), st.floats(-20, 20))
def test_rect_distance_symmetric_and_rigid(x, y, ta, tb, rot, dx, dy):
    a, b = np.array([0.0, 0.0, ta]), np.array([x, y, tb])
    d = float(rect_distance(a, b, L, W))
    assert d == pytest.approx(float(rect_distance(b, a, L, W)), abs=1e-9)
    c, s = math.cos(rot), math.sin(rot)

    def move(p):
        return np.array([c * p[0] - s * p[1] + dx, s * p[0] + c * p[1] + dy, p[2] + rot])
    assert d == pytest.approx(float(rect_distance(move(a), move(b), L, W)), abs=1e-7)


def test_min_rect_distance_matches_full_scan():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a = np.column_stack([rng.uniform(-20, 20, 50), rng.uniform(-20, 20, 50), rng.uniform(-3, 3, 50)])
        b = np.column_stack([rng.uniform(-20, 20, 50), rng.uniform(-20, 20, 50), rng.uniform(-3, 3, 50)])
        assert min_rect_distance(a, b, L, W) == float(rect_distance(a, b, L, W).min())


def test_min_distance_world():
    a, b = build_path(G, "bottom", "top"), build_path(G, "top", "bottom")
    w = WorldState.initial(G, [a, b], [5, 5])
    assert min_distance(w) > 0
    with pytest.raises(WorldError):
        min_distance(WorldState.initial(G, [a], [5]))


@pytest.mark.parametrize("mode", ["closed_loop", "projected"])
def test_rollout_examples(mode):
    a, b = build_path(G, "bottom", "top"), build_path(G, "top", "bottom")
    w = WorldState.initial(G, [a, b], [5, 5])
    _, d = rollout(w, [a, b], [5.0, 5.0], 0.05, mode=mode)
    assert d == pytest.approx(3.6 - 1.7, abs=1e-6)
    _, d1 = rollout(WorldState.initial(G, [a], [5]), [a], [5.0], 0.05, mode=mode)
    assert d1 == math.inf
    c = build_path(G, "right", "left")
    _, d2 = rollout(WorldState.initial(G, [a, c], [5, 5]), [a, c], [5.0, 5.0], 0.05, mode=mode)
    assert d2 == 0.0
    with pytest.raises(WorldError):
        rollout(w, [a, b], [0.0, 5.0], 0.05, mode=mode)


def test_projected_rollout_agrees_with_closed_loop():
    ps = [path_set(G, "bottom")["left"], path_set(G, "right")["right"]]
    w = WorldState.initial(G, ps, [6, 8])
    ta, _ = rollout(w, ps, [6.0, 8.0], 0.05, mode="projected")
    tb, _ = rollout(w, ps, [6.0, 8.0], 0.05, mode="closed_loop")
    for i, (p, v) in enumerate(zip(ps, (6.0, 8.0))):
        m = int(p.length / v / 0.05) - 1  # before either copy stops at the goal
        gap = np.hypot(*(ta.states[i, :m, :2] - tb.states[i, :m, :2]).T)
        assert gap.max() < 1.0  # mostly along-track lag through the turn


def test_agent_spec_validation():
    AgentSpec(0, "bottom", "straight", 2.5, 5.0, 0.7)
    for bad in [dict(v_low=6.0), dict(pref_high=0.9), dict(w=0.0), dict(side="north"),
                dict(choice="uturn")]:
        kw = dict(id=0, side="bottom", choice="straight", v_low=2.5, v_high=5.0, pref_high=0.7)
        kw.update(bad)
        with pytest.raises(WorldError):
            AgentSpec(**kw)
