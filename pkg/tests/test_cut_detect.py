import math

import numpy as np
import pytest

from src.cut_detect.cut_balls import first_last_in_closed_ball, is_cut_ball_discrete, traces_disjoint
from src.cut_detect.cut_points import VisitIndex, cut_points_fast, cut_points_naive, is_cut_point, site_keys
from src.cut_detect.pair_events import nonintersection_occurred, separation_quality
from src.walk_core.lattice_walk import path_from_directions, sample_exit_path, sample_srw_fixed_steps
from src.walk_core.rng_streams import RngStream


def straight(length, code=0, d=2):
    return path_from_directions([0] * d, [code] * length)


# --- 1. Cut points ---

def test_straight_line_cuts_every_interior_site():
    cuts = cut_points_fast(straight(6))
    assert cuts.times.tolist() == [1, 2, 3, 4, 5]
    assert cuts.sites[:, 0].tolist() == [1, 2, 3, 4, 5]


def test_closed_loop_has_no_cut_points():
    square = path_from_directions([0, 0], [0, 2, 1, 3])
    assert len(cut_points_fast(square)) == 0
    assert len(cut_points_naive(square)) == 0


def test_loop_in_the_middle_blocks_its_sites():
    # out along x, a unit square loop at (2, 0), then further along x
    path = path_from_directions([0, 0], [0, 0, 2, 0, 3, 1, 0, 0, 0])
    fast = cut_points_fast(path)
    assert fast == cut_points_naive(path)
    assert fast.times.tolist() == [1, 8]


@pytest.mark.parametrize("d, codes", [(2, [0, 2] * 5), (3, [0, 2, 4] * 4)])
def test_monotone_staircase_cuts_every_interior_time(d, codes):
    path = path_from_directions([0] * d, codes)
    cuts = cut_points_fast(path)
    assert cuts.times.tolist() == list(range(1, len(codes)))
    assert cuts == cut_points_naive(path)


@pytest.mark.parametrize("k", [2, 3])
def test_refined_walk_keeps_its_cut_times(k):
    gen = RngStream(73, k).generator()
    for _ in range(40):
        path = sample_srw_fixed_steps([0, 0], int(gen.integers(5, 200)), gen)
        refined = path_from_directions([0, 0], np.repeat(path.directions(), k))
        times = cut_points_fast(refined).times
        assert (times[times % k == 0] // k).tolist() == cut_points_fast(path).times.tolist()


@pytest.mark.parametrize("d", [2, 3])
def test_fast_matches_naive_on_random_walks(d):
    gen = RngStream(99, d).generator()
    for _ in range(200):
        steps = int(gen.integers(1, 400))
        path = sample_srw_fixed_steps([0] * d, steps, gen)
        assert cut_points_fast(path) == cut_points_naive(path)


def test_single_site_predicate_agrees_with_the_set():
    path = sample_exit_path(2, 3, RngStream(5))
    cut_sites = {tuple(site) for site in cut_points_fast(path).sites.tolist()}
    for site in path.sites[:: max(1, path.n_steps // 60)].tolist():
        assert is_cut_point(path, site) == (tuple(site) in cut_sites)
    assert not is_cut_point(path, path.start)
    assert not is_cut_point(path, [10 ** 5, 0])


def test_visit_index_lists_visit_times():
    path = path_from_directions([0, 0], [0, 1, 0, 1])
    index = VisitIndex.build(path)
    assert index.visits([0, 0]) == [0, 2, 4]
    assert index.visits([1, 0]) == [1, 3]
    assert index.visits([5, 5]) == []
    assert len(index) == 2


def test_site_keys_refuse_huge_coordinates():
    with pytest.raises(ValueError):
        site_keys(np.array([[1 << 21, 0]]))


def test_site_keys_accept_coordinates_just_below_the_limit():
    limit = 1 << 20
    keys = site_keys(np.array([[limit - 1, -(limit - 1)], [-(limit - 1), limit - 1]]))
    assert keys[0] != keys[1]
    with pytest.raises(ValueError):
        site_keys(np.array([[0, -limit]]))


def test_cut_set_csv(tmp_path):
    target = cut_points_fast(straight(4, d=3)).to_csv(tmp_path / "cuts.csv")
    lines = target.read_text().splitlines()
    assert lines[0] == "t_index,x,y,z"
    assert len(lines) == 4


# --- 2. Cut balls ---
# At n = 4, z = (0.5, 0): centre (27, 0), inner radius e^3 ~ 20.09,
# envelope e^(10/3) ~ 28.03, domain radius e^4 ~ 54.6.

def test_straight_walk_through_the_ball_is_a_cut_ball():
    event = is_cut_ball_discrete(straight(55), (0.5, 0.0), 4)
    assert event.occurred
    assert (event.a1, event.a2) == (7, 47)


def test_walk_missing_the_ball():
    event = is_cut_ball_discrete(straight(55, code=1), (0.5, 0.0), 4)
    assert not event.occurred
    assert event.a1 is None


def test_outer_legs_meeting_spoil_the_cut_ball():
    directions = [0] * 50 + [2] + [1] * 50 + [3] + [1] * 55
    event = is_cut_ball_discrete(path_from_directions([0, 0], directions), (0.5, 0.0), 4)
    assert event.a1 == 7
    assert not event.occurred


def test_middle_leg_leaving_the_envelope_spoils_the_cut_ball():
    directions = [0] * 27 + [2] * 30 + [3] * 30 + [0] * 28
    event = is_cut_ball_discrete(path_from_directions([0, 0], directions), (0.5, 0.0), 4)
    assert event.a1 is not None
    assert not event.occurred


def test_inner_ball_must_avoid_the_origin():
    with pytest.raises(ValueError, match="origin"):
        is_cut_ball_discrete(straight(55), (0.1, 0.0), 4)


def test_ball_helpers():
    points = np.array([[0, 0], [3, 0], [1, 0], [5, 0]])
    assert first_last_in_closed_ball(points, np.array([0.0, 0.0]), 1) == (0, 2)
    assert first_last_in_closed_ball(points, np.array([9.0, 9.0]), 1) is None
    assert traces_disjoint(points[:2], np.array([[7, 7]]))
    assert not traces_disjoint(points, np.array([[5, 0]]))


def test_shrinking_the_envelope_only_removes_cut_balls():
    stream = RngStream(61)
    n = 4.0
    envelopes = [5 * n / 6, 3.2, 3.05]
    for i in range(300):
        path = sample_exit_path(2, n, stream.substream(i))
        events = [is_cut_ball_discrete(path, (0.5, 0.0), n, envelope_log_radius=e) for e in envelopes]
        assert len({(event.a1, event.a2) for event in events}) == 1
        occurred = [event.occurred for event in events]
        assert occurred == sorted(occurred, reverse=True)


# --- 3. Pairs ---

def test_opposite_rays_do_not_intersect():
    assert nonintersection_occurred(straight(5, code=0), straight(5, code=1))
    assert not nonintersection_occurred(straight(5, code=0), straight(5, code=0))


def test_returning_to_the_start_is_an_intersection():
    back = path_from_directions([0, 0], [1, 0, 2])
    assert not nonintersection_occurred(straight(3, code=2), back)


def test_pairs_must_share_a_start():
    with pytest.raises(ValueError):
        nonintersection_occurred(straight(2), path_from_directions([1, 0], [0]))


def test_opposite_rays_are_well_separated():
    quality = separation_quality(straight(5, code=0), straight(5, code=1), math.log(5))
    assert quality.delta == pytest.approx(1.0)
    assert quality.well_separated
    with pytest.raises(ValueError):
        separation_quality(straight(5), straight(5), math.log(5))


def test_nonintersection_is_symmetric():
    gen = RngStream(47).generator()
    outcomes = set()
    for _ in range(300):
        p1 = sample_srw_fixed_steps([0, 0], 10, gen)
        p2 = sample_srw_fixed_steps([0, 0], 10, gen)
        outcome = nonintersection_occurred(p1, p2)
        assert outcome == nonintersection_occurred(p2, p1)
        outcomes.add(outcome)
    assert outcomes == {True, False}
    back = path_from_directions([0, 0], [1, 0, 2])
    assert nonintersection_occurred(back, straight(3, code=2)) == nonintersection_occurred(straight(3, code=2), back)


@pytest.mark.parametrize("k", [2, 3, 5])
def test_separation_quality_is_scale_free(k):
    # ends (3, 2) and (-4, 0) lie sqrt(13) and 4 from the other trace
    first, second = [0, 0, 0, 2, 2], [1, 1, 1, 1]
    base = separation_quality(path_from_directions([0, 0], first), path_from_directions([0, 0], second), 1.0)
    assert base.delta == pytest.approx(math.sqrt(13) * math.exp(-1.0))
    refined = separation_quality(
        path_from_directions([0, 0], np.repeat(first, k)),
        path_from_directions([0, 0], np.repeat(second, k)),
        1.0 + math.log(k),
    )
    assert refined.delta == pytest.approx(base.delta)
