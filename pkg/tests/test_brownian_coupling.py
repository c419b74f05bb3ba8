import math

import numpy as np
import pytest

from src.brownian_coupling.brownian_paths import BrownianPath, first_exit_index, sample_bm_until_exit
from src.brownian_coupling.continuous_cut_balls import is_cut_ball_continuous
from src.brownian_coupling.errors import SimulationAbort, UnderResolvedError
from src.brownian_coupling.skorokhod import (
    coupled_cutball_agreement,
    resolved_keep_every,
    skorokhod_embed,
)
from src.brownian_coupling.spatial_hash import SpatialHash, polylines_separated, segment_distances
from src.walk_core.rng_streams import RngStream


def segment_path(dt=1e-4, points=1001):
    """Samples along the segment from 0 to (1, 0), a stand-in for a path that runs straight through."""
    x = np.linspace(0.0, 1.0, points)
    return BrownianPath(dt, np.column_stack([x, np.zeros_like(x)]), points - 1)


# --- 1. Brownian paths ---

def test_bm_stops_at_first_sample_outside():
    path = sample_bm_until_exit([0.0, 0.0], 0.0, 1e-3, RngStream(8))
    norms = np.linalg.norm(path.samples, axis=1)
    assert norms[-1] >= 1 and np.all(norms[:-1] < 1)
    assert path.exit_index == path.samples.shape[0] - 1
    assert first_exit_index(path.samples, 1.0) == path.exit_index


def test_bm_preconditions():
    with pytest.raises(ValueError):
        sample_bm_until_exit([2.0, 0.0], 0.0, 1e-3, RngStream(0))
    with pytest.raises(ValueError):
        sample_bm_until_exit([0.0, 0.0], 0.0, 0.0, RngStream(0))


def test_brownian_scaling():
    path = segment_path()
    big = path.rescaled(math.log(3))
    assert big.dt == pytest.approx(9e-4)
    assert np.allclose(big.samples, 3 * path.samples)
    assert path.prefix(10).duration == pytest.approx(1e-3)


def test_bm_variance_per_unit_time():
    gen = RngStream(21).generator()
    ends = np.array([sample_bm_until_exit([0.0, 0.0, 0.0], 3.0, 0.05, gen).samples[20] for _ in range(2000)])
    # 20 steps of 0.05: each coordinate has variance 1
    assert np.var(ends, axis=0) == pytest.approx(np.ones(3), rel=0.12)


@pytest.mark.parametrize("d", [2, 3])
def test_bm_exit_points_are_isotropic(d):
    stream = RngStream(909)
    exits = np.array([sample_bm_until_exit(np.zeros(d), 0.0, 0.01, stream.substream(i)).samples[-1] for i in range(2000)])
    for axis in range(d):
        positive = int((exits[:, axis] > 0).sum())
        assert abs(positive - exits.shape[0] / 2) < 4 * np.sqrt(exits.shape[0]) / 2


# --- 2. Spatial hash and polylines ---

def test_hash_candidates_include_every_close_pair():
    gen = RngStream(5).generator()
    stored, queries = gen.random((300, 2)), gen.random((200, 2))
    index = SpatialHash(0.05)
    index.insert(stored)
    qi, si = index.query_candidates(queries)
    candidates = set(zip(qi.tolist(), si.tolist()))
    dist = np.linalg.norm(queries[:, None, :] - stored[None, :, :], axis=2)
    close = set(zip(*np.nonzero(dist <= 0.05)))
    assert {(int(a), int(b)) for a, b in close} <= candidates


def test_empty_hash_has_no_candidates():
    qi, si = SpatialHash(1.0).query_candidates(np.zeros((3, 2)))
    assert qi.size == 0 and si.size == 0
    with pytest.raises(ValueError):
        SpatialHash(0)


def test_segment_distances():
    p1, q1 = np.array([[0.0, 0.0], [-1.0, 0.0], [0.0, 0.0]]), np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    p2, q2 = np.array([[0.0, 1.0], [0.0, -1.0], [3.0, 4.0]]), np.array([[1.0, 1.0], [0.0, 1.0], [3.0, 4.0]])
    assert np.allclose(segment_distances(p1, q1, p2, q2), [1.0, 0.0, 5.0])


def test_polylines_separated():
    top = np.array([[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]])
    bottom = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    assert polylines_separated(top, bottom, 0.5)
    assert not polylines_separated(top, bottom, 1.5)
    # segments cross although all vertices are far apart
    assert not polylines_separated(np.array([[-5.0, 0.0], [5.0, 0.0]]), np.array([[0.0, -5.0], [0.0, 5.0]]), 0.1)


# --- 3. Continuous cut balls ---

def test_straight_segment_makes_a_cut_ball():
    event = is_cut_ball_continuous(segment_path(), (0.5, 0.0), 1.0)
    assert event.hit and event.occurred


def test_cut_ball_resolution_and_margin_checks():
    with pytest.raises(UnderResolvedError):
        is_cut_ball_continuous(segment_path(dt=0.01), (0.5, 0.0), 1.0)
    with pytest.raises(ValueError):
        is_cut_ball_continuous(segment_path(), (0.5, 0.0), 1.0, rho=0.3)
    with pytest.raises(ValueError):
        is_cut_ball_continuous(segment_path(), (0.2, 0.0), 1.0)


def test_cut_ball_event_is_scale_invariant():
    path = sample_bm_until_exit([0.0, 0.0], 0.0, 1e-4, RngStream(31))
    for z in [(0.5, 0.0), (0.0, -0.5), (-0.45, 0.2)]:
        small = is_cut_ball_continuous(path, z, 1.0)
        big = is_cut_ball_continuous(path.rescaled(3.0), z, 1.0, domain_log_radius=3.0)
        assert (small.hit, small.occurred) == (big.hit, big.occurred)


def test_under_resolved_is_a_simulation_abort():
    assert issubclass(UnderResolvedError, SimulationAbort)


def test_wider_margin_never_creates_a_cut_ball():
    stream = RngStream(414)
    rhos = [0.02, 0.05, 0.1, 0.2]
    for i in range(200):
        path = sample_bm_until_exit([0.0, 0.0], 0.0, 1e-3, stream.substream(i))
        for z in [(0.5, 0.0), (0.0, -0.5)]:
            occurred = [is_cut_ball_continuous(path, z, 1.0, rho).occurred for rho in rhos]
            assert occurred == sorted(occurred, reverse=True)


# --- 4. Skorokhod embedding ---

def test_embedded_walk_copies_the_crossings():
    pair = skorokhod_embed(1.0, 0.01, RngStream(3))
    assert pair.walk.start.tolist() == [0, 0]
    for j in range(2):
        levels = pair.crossing_levels[j]
        assert np.all(np.abs(np.diff(np.concatenate([[0], levels]))) == 1)
        assert np.all(np.diff(pair.crossing_indices[j]) > 0)
        mask = pair.z_choices == j
        assert np.array_equal(pair.walk.sites[1:][mask, j], levels[: mask.sum()])


def test_coupled_pair_runs_past_both_exits():
    pair = skorokhod_embed(1.0, 0.01, RngStream(4))
    radius = math.exp(2.0)
    assert np.linalg.norm(pair.walk.sites[pair.tau_index]) >= radius
    assert np.linalg.norm(pair.bm.samples[pair.bm.exit_index]) >= radius
    assert pair.walk.duration >= max(pair.tau, pair.T)
    assert pair.max_deviation >= 0
    assert set(pair.summary()) == {"n", "dt", "seed", "stream_id", "max_deviation", "tau", "T"}


def test_embedding_is_reproducible():
    a = skorokhod_embed(1.0, 0.01, RngStream(12, 5))
    b = skorokhod_embed(1.0, 0.01, RngStream(12, 5))
    assert a.walk == b.walk
    assert a.max_deviation == b.max_deviation


def test_embedding_preconditions():
    with pytest.raises(ValueError):
        skorokhod_embed(1.0, 0.02, RngStream(0))
    with pytest.raises(ValueError):
        skorokhod_embed(0.5, 0.01, RngStream(0))
    with pytest.raises(ValueError):
        skorokhod_embed(1.0, 0.01, RngStream(0), keep_every=0)


def test_embedded_steps_are_uniform():
    stream = RngStream(77)
    codes = np.concatenate([skorokhod_embed(1.0, 0.01, stream.substream(i)).walk.directions() for i in range(150)])
    frequencies = np.bincount(codes, minlength=4) / codes.size
    assert np.allclose(frequencies, 0.25, atol=0.03)


def test_embedded_walk_mean_square_displacement():
    stream = RngStream(88)
    k = 20
    # the walk leaves radius e^3 > 20, so it has more than 20 steps
    squares = np.array([float(np.sum(skorokhod_embed(2.0, 0.01, stream.substream(i)).walk.sites[k] ** 2)) for i in range(200)])
    assert abs(squares.mean() - k) < 4.5 * squares.std() / np.sqrt(squares.size)


def test_thinning_for_coupled_cut_balls():
    assert resolved_keep_every(4.0, 0.01) == 403
    assert resolved_keep_every(1.0, 0.01) >= 1


@pytest.mark.slow
def test_cut_ball_agreement_on_one_pair():
    n = 4.0
    pair = skorokhod_embed(n, 0.01, RngStream(6), keep_every=resolved_keep_every(n, 0.01))
    agreement = coupled_cutball_agreement(pair, (0.5, 0.0), n, strict=False)
    assert agreement.agree == (agreement.discrete == agreement.continuous)
    with pytest.raises(ValueError):
        coupled_cutball_agreement(pair, (0.5, 0.0), 5.0)
