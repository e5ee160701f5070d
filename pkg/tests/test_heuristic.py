import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from shepherd.heuristic import HeuristicController, HeuristicParams, heuristic_drive, heuristic_select
from shepherd.sim import SimParams, WorldState

UNIT = HeuristicParams(standoff=1.0, gain=10.0)
HOLD = HeuristicParams(standoff=1.0, idle="hold")
pts = st.tuples(st.floats(-25, 25), st.floats(-25, 25))


def brute_select(herders, targets, i, radius, contain):
    herders, targets = np.asarray(herders, float), np.asarray(targets, float)
    owned = []
    for a, t in enumerate(targets):
        d = np.linalg.norm(herders - t, axis=1)
        if int(np.argmin(d)) == i:
            owned.append(a)
    outside = [a for a in owned if np.linalg.norm(targets[a]) > radius]
    pool = outside or (owned if contain else [])
    if not pool:
        return None
    return max(pool, key=lambda a: (np.linalg.norm(targets[a]), -a))


@pytest.mark.parametrize("t, h, expected", [
    ((10, 0), (11, 0), (0, 0)),
    ((10, 0), (11, 5), (0, -8)),
    ((0, 3), (0, 4), (0, 0)),
])
def test_drive_examples(t, h, expected):
    np.testing.assert_allclose(heuristic_drive(h, t, SimParams(), UNIT), expected, atol=1e-12)


def test_default_standoff_tracks_repulsion_range():
    assert HeuristicParams().standoff_for(SimParams()) == 1.25
    assert HeuristicParams().standoff_for(SimParams(repulsion_range=2.0)) == 1.0
    assert UNIT.standoff_for(SimParams()) == 1.0


@given(pts, pts)
def test_drive_norm_bounded(h, t):
    u = heuristic_drive(h, t, SimParams(), HeuristicParams())
    assert np.hypot(*u) <= 8.0 + 1e-12


def test_drive_target_at_origin_goes_to_target():
    u = heuristic_drive((1, 0), (0, 0), SimParams(), HeuristicParams(gain=1.0))
    np.testing.assert_allclose(u, (-1, 0))


def test_select_partition_example():
    p = SimParams(num_herders=2, num_targets=3)
    s = WorldState(np.array([[0.0, 10], [0, -10]]), np.array([[0.0, 8], [0, -6], [10, 1]]))
    assert heuristic_select(s, 0, p) == 2
    assert heuristic_select(s, 1, p) == 1


def test_select_single_herder_takes_furthest():
    p = SimParams(num_targets=3)
    s = WorldState(np.array([[20.0, 20]]), np.array([[6.0, 0], [0, 9], [-6.5, 0]]))
    assert heuristic_select(s, 0, p) == 1


def test_select_all_contained():
    p = SimParams(num_targets=3)
    s = WorldState(np.array([[20.0, 20]]), np.array([[1.0, 0], [0, 2], [-3, 0]]))
    assert heuristic_select(s, 0, p, HOLD) is None
    u = HeuristicController(HOLD)(s, p)
    np.testing.assert_array_equal(u, np.zeros((1, 2)))
    # default mode keeps pressing the furthest contained target instead of idling
    assert heuristic_select(s, 0, p) == 2


def test_select_ties_prefer_lower_indices():
    p = SimParams(num_herders=2, num_targets=2)
    # target 0 is equidistant from both herders; targets equally far from the goal
    s = WorldState(np.array([[0.0, 10], [0, -10]]), np.array([[8.0, 0], [0, 8]]))
    assert heuristic_select(s, 0, p) == 0
    assert heuristic_select(s, 1, p, HOLD) is None


@given(st.lists(pts, min_size=1, max_size=3), st.lists(pts, min_size=1, max_size=6), st.booleans())
def test_select_matches_brute_force(herders, targets, contain):
    p = SimParams(num_herders=len(herders), num_targets=len(targets))
    s = WorldState(np.array(herders, float), np.array(targets, float))
    hp = HeuristicParams(idle="contain" if contain else "hold")
    for i in range(len(herders)):
        assert heuristic_select(s, i, p, hp) == brute_select(herders, targets, i, p.buffered_radius, contain)


@given(st.lists(pts, min_size=2, max_size=3, unique=True), st.lists(pts, min_size=1, max_size=6),
       st.floats(1.01, 3.0))
def test_select_scale_covariant(herders, targets, c):
    p = SimParams(num_herders=len(herders), num_targets=len(targets))
    h, t = np.array(herders), np.array(targets)
    r = np.hypot(t[:, 0], t[:, 1])
    assume(np.all((r > p.buffered_radius) == (c * r > p.buffered_radius)))
    d = np.linalg.norm(t[:, None] - h[None], axis=2)
    assume(np.all(np.sort(d, axis=1)[:, 1] - np.sort(d, axis=1)[:, 0] > 1e-6))
    a = [heuristic_select(WorldState(h, t), i, p, HOLD) for i in range(len(h))]
    b = [heuristic_select(WorldState(c * h, c * t), i, p, HOLD) for i in range(len(h))]
    assert a == b
    chosen = [x for x in a if x is not None]
    assert len(chosen) == len(set(chosen))


def test_params_validation():
    with pytest.raises(ValueError):
        HeuristicParams(standoff=0.0)
    with pytest.raises(ValueError):
        HeuristicParams(gain=-1.0)
    with pytest.raises(ValueError):
        HeuristicParams(idle="wander")
