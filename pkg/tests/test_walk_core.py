import numpy as np
import pytest

from src.walk_core.lattice_walk import (
    BallSpec,
    LatticePath,
    check_bulk_point,
    check_dimension,
    hitting_time,
    path_from_directions,
    position_at,
    positions_at,
    sample_exit_path,
    sample_srw_fixed_steps,
    sample_srw_until_exit,
    scaled_lattice_point,
    time_to_edge,
    unit_steps,
)
from src.walk_core.path_io import decode_path, encode_path, path_to_frame, read_path_dump, write_path_csv, write_path_dump
from src.walk_core.rng_streams import RngStream, as_generator, mix64, scale_stream


# --- 1. Streams ---

def test_same_key_gives_same_draws():
    a = RngStream(7, 3).generator().standard_normal(5)
    b = RngStream(7, 3).generator().standard_normal(5)
    assert np.array_equal(a, b)


def test_substreams_and_jumps_are_distinct():
    stream = RngStream(7, 3)
    first = stream.substream(0).generator().integers(0, 2 ** 32, size=4)
    second = stream.substream(1).generator().integers(0, 2 ** 32, size=4)
    jumped = stream.jumped_generator().integers(0, 2 ** 32, size=4)
    plain = stream.generator().integers(0, 2 ** 32, size=4)
    assert not np.array_equal(first, second)
    assert not np.array_equal(plain, jumped)
    assert stream.substream(5) == RngStream(7, 3).substream(5)


def test_stream_key_validation():
    with pytest.raises(ValueError):
        RngStream(0).substream(-1)
    with pytest.raises(ValueError):
        scale_stream(0, "nope", 0)
    with pytest.raises(ValueError):
        scale_stream(0, "xi", 1 << 16)
    with pytest.raises(TypeError):
        as_generator(42)


def test_scale_streams_differ_by_kind_and_index():
    ids = {scale_stream(1, kind, i).stream_id for kind in ("xi", "ruin") for i in range(3)}
    assert len(ids) == 6
    assert mix64(12345) == mix64(12345)


# --- 2. Geometry and paths ---

def test_unit_steps_cover_both_signs():
    steps = unit_steps(3)
    assert steps.shape == (6, 3)
    assert np.array_equal(np.abs(steps).sum(axis=1), np.ones(6))
    assert np.array_equal(steps.sum(axis=0), np.zeros(3))


def test_unsupported_dimension_names_supported_ones():
    with pytest.raises(ValueError, match="supported dimensions are 2 and 3"):
        check_dimension(4)


def test_scaled_lattice_point_floors_componentwise():
    assert scaled_lattice_point((0.5, -0.25), 2).tolist() == [3, -2]


def test_ball_membership():
    ball = BallSpec.around((0, 0), 2)
    assert ball.radius == pytest.approx(2)
    assert bool(ball.contains(np.array([1, 1])))
    assert not bool(ball.contains(np.array([3, 0])))
    with pytest.raises(ValueError):
        BallSpec.around((0, 0), 0)


def test_path_rejects_non_neighbours():
    with pytest.raises(ValueError, match="not lattice neighbours"):
        LatticePath(np.array([[0, 0], [1, 1]]))
    with pytest.raises(ValueError):
        LatticePath(np.array([[0, 0]]))


def test_path_from_directions_round_trip():
    path = path_from_directions([0, 0], [0, 2, 1, 3])
    assert path.sites.tolist() == [[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]
    assert path.directions().tolist() == [0, 2, 1, 3]
    assert path.duration == 2.0
    assert path.prefix(2).sites.tolist() == [[0, 0], [1, 0], [1, 1]]


def test_exit_walk_stops_at_first_outside_site():
    ball = BallSpec.around((0, 0), 10)
    path = sample_srw_until_exit((0, 0), ball, RngStream(11))
    assert not bool(ball.contains(path.end))
    assert np.all(ball.contains(path.sites[:-1]))
    assert path == sample_srw_until_exit((0, 0), ball, RngStream(11))


def test_exit_walk_preconditions():
    with pytest.raises(ValueError, match="strictly inside"):
        sample_srw_until_exit((5, 0), BallSpec.around((0, 0), 3), RngStream(0))
    with pytest.raises(ValueError, match="at least 1"):
        sample_srw_until_exit((0, 0), BallSpec.around((0, 0), 0.5), RngStream(0))


def test_mean_exit_time_matches_exit_radius():
    R = 15.5
    ball = BallSpec.around((0, 0), R)
    gen = RngStream(2024).generator()
    paths = [sample_srw_until_exit((0, 0), ball, gen) for _ in range(3000)]
    steps = np.array([path.n_steps for path in paths], dtype=float)
    exit_sq = np.array([float(path.end @ path.end) for path in paths])
    # every exit site lies in the shell R <= |x| < R + 1
    assert np.all(exit_sq >= R ** 2) and np.all(exit_sq < (R + 1) ** 2)
    # |S_k|^2 - k is a martingale, so E[tau] = E|S_tau|^2
    diff = steps - exit_sq
    assert abs(diff.mean()) < 4.5 * diff.std() / np.sqrt(diff.size)


@pytest.mark.parametrize("d", [2, 3])
def test_exit_sites_are_isotropic(d):
    stream = RngStream(606)
    ends = np.array([sample_exit_path(d, 2.0, stream.substream(i)).end for i in range(4000)])
    for axis in range(d):
        positive, negative = int((ends[:, axis] > 0).sum()), int((ends[:, axis] < 0).sum())
        total = positive + negative
        assert abs(positive - total / 2) < 4 * np.sqrt(total) / 2


def test_fixed_step_walk_length():
    path = sample_srw_fixed_steps((0, 0, 0), 25, RngStream(1))
    assert path.n_steps == 25 and path.d == 3
    with pytest.raises(ValueError):
        sample_srw_fixed_steps((0, 0), 0, RngStream(1))


def test_hitting_time_for_balls_and_sets():
    path = path_from_directions([0, 0], [0, 0, 0, 2, 2])
    assert hitting_time(path, BallSpec.around((0, 0), 2.5)) == 3
    assert hitting_time(path, BallSpec.around((3, 2), 1.5)) == 4
    assert hitting_time(path, [(3, 1), (2, 0)]) == 2
    assert hitting_time(path, [(9, 9)]) is None
    assert hitting_time(path, []) is None


def test_time_interpolation():
    path = path_from_directions([0, 0], [0, 2])
    assert time_to_edge(0.75, 2) == (1, 0.5)
    assert position_at(path, 0.25).tolist() == [0.5, 0.0]
    assert position_at(path, 1.0).tolist() == [1.0, 1.0]
    times = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    expected = np.array([position_at(path, t) for t in times])
    assert np.allclose(positions_at(path, times), expected)
    with pytest.raises(ValueError):
        position_at(path, 1.5)


def test_bulk_point_policy():
    assert check_bulk_point((0.5, 0.0), 20)
    # at n = 4 the margin e^(-2/3) exceeds both distances of z
    with pytest.raises(ValueError, match="closer than"):
        check_bulk_point((0.5, 0.0), 4)
    assert not check_bulk_point((0.5, 0.0), 4, strict=False)
    assert not check_bulk_point((0.1, 0.0), 6, strict=False, warn=False)
    with pytest.raises(ValueError):
        check_bulk_point((0.0, 0.0), 4)
    with pytest.raises(ValueError):
        check_bulk_point((1.0, 0.0), 4)


# --- 3. Path dumps ---

def test_binary_dump_restores_the_path(tmp_path):
    walk = sample_srw_fixed_steps((-3, 5, 2), 300, RngStream(3))
    assert decode_path(encode_path(walk)) == walk
    target = write_path_dump(walk, tmp_path / "walk.cutp")
    assert read_path_dump(target) == walk


def test_dump_rejects_foreign_bytes():
    with pytest.raises(ValueError, match="magic"):
        decode_path(b"NOPE\x01\x00\x02")


def test_path_csv_has_time_column(tmp_path):
    walk = sample_exit_path(2, 2, RngStream(4))
    frame = path_to_frame(walk)
    assert list(frame.columns) == ["t", "x", "y"]
    assert frame["t"].iloc[1] == pytest.approx(0.5)
    assert write_path_csv(walk, tmp_path / "walk.csv").is_file()
