import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acslam.errors import DimensionMismatch, PoseInObstacle
from acslam.gridworld import (FREE, OCCUPIED, UNKNOWN, OccupancyGrid, Pose2D, SensorParams,
                              Transform2D, cast_ray, coverage_percent, integrate_scan, map_quality,
                              merge_maps, normalize_angle, raycast_scan, read_pgm, reachable_mask,
                              render, ssim, transform_point, write_pgm)

finite = st.floats(-50, 50, allow_nan=False)
angles = st.floats(-10, 10, allow_nan=False)


def grid_of(cells, res=1.0, origin=(0.0, 0.0)):
    return OccupancyGrid(np.asarray(cells, dtype=np.int8), res, origin)


def free_map(w, h, res=1.0):
    return OccupancyGrid.filled(w, h, res, state=FREE)


# -- geometry -------------------------------------------------------------------


def test_transform_point_examples():
    assert transform_point(Transform2D(), (4.2, -1.0)) == pytest.approx((4.2, -1.0))
    assert transform_point(Transform2D(0.0, (2, 3)), (1, 1)) == pytest.approx((3, 4))
    x, y = transform_point(Transform2D(math.pi / 2), (1, 0))
    assert x == pytest.approx(0.0, abs=1e-12) and y == pytest.approx(1.0)


@given(angles, finite, finite, finite, finite)
def test_transform_inverse_round_trip(theta, tx, ty, px, py):
    T = Transform2D(theta, (tx, ty))
    back = transform_point(T.inverse(), transform_point(T, (px, py)))
    assert back[0] == pytest.approx(px, abs=1e-9)
    assert back[1] == pytest.approx(py, abs=1e-9)
    ident = T.compose(T.inverse())
    assert ident.translation[0] == pytest.approx(0.0, abs=1e-9)
    assert ident.translation[1] == pytest.approx(0.0, abs=1e-9)


@given(angles)
def test_pose_theta_normalised(theta):
    p = Pose2D(0, 0, theta)
    assert -math.pi < p.theta <= math.pi
    assert math.cos(p.theta) == pytest.approx(math.cos(theta), abs=1e-9)


def test_normalize_angle_edges():
    assert normalize_angle(math.pi) == math.pi
    assert normalize_angle(-math.pi) == math.pi
    assert normalize_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


@given(st.integers(0, 9), st.integers(0, 7), st.floats(0.1, 2.0), finite, finite)
def test_cell_world_round_trip(r, c, res, ox, oy):
    g = OccupancyGrid.filled(10, 8, res, (ox, oy))
    assert g.world_to_cell(*g.cell_center(r, c)) == (r, c)


def test_grid_rejects_bad_geometry():
    with pytest.raises(ValueError):
        OccupancyGrid(np.zeros((0, 3), dtype=np.int8), 1.0)
    with pytest.raises(ValueError):
        OccupancyGrid(np.zeros((3, 3), dtype=np.int8), 0.0)
    with pytest.raises(ValueError):
        OccupancyGrid(np.full((3, 3), 5, dtype=np.int8), 1.0)


# -- ray casting -----------------------------------------------------------------


def test_empty_map_scan_is_all_free_and_in_range():
    truth = free_map(20, 20)
    obs = raycast_scan(truth, Pose2D(10.5, 10.5), SensorParams(max_range=2.0, num_rays=64))
    assert obs and all(s == FREE for _, s in obs)
    for (r, c), _ in obs:
        # Chebyshev distance from the pose cell, inflated by one cell
        assert max(abs(r - 10), abs(c - 10)) <= 3


def test_wall_column_single_ray():
    cells = np.full((10, 10), FREE, dtype=np.int8)
    cells[:, 5] = OCCUPIED
    truth = grid_of(cells)
    obs = raycast_scan(truth, Pose2D(2.5, 2.5, 0.0), SensorParams(max_range=10.0, num_rays=1))
    assert obs == [((2, 2), FREE), ((2, 3), FREE), ((2, 4), FREE), ((2, 5), OCCUPIED)]


def test_short_range_sees_no_obstacle():
    cells = np.full((10, 10), FREE, dtype=np.int8)
    cells[:, 8] = OCCUPIED
    obs = raycast_scan(grid_of(cells), Pose2D(2.5, 2.5), SensorParams(max_range=2.0, num_rays=90))
    assert not any(s == OCCUPIED for _, s in obs)


def test_scan_from_obstacle_raises():
    cells = np.full((5, 5), FREE, dtype=np.int8)
    cells[2, 2] = OCCUPIED
    with pytest.raises(PoseInObstacle):
        raycast_scan(grid_of(cells), Pose2D(2.5, 2.5), SensorParams())
    with pytest.raises(PoseInObstacle):
        raycast_scan(grid_of(cells), Pose2D(-1.0, 2.5), SensorParams())


def test_diagonal_corner_does_not_leak():
    # two walls touching only at a corner; a 45 degree ray through the corner must stop
    cells = np.full((6, 6), FREE, dtype=np.int8)
    cells[3, 2] = OCCUPIED
    cells[2, 3] = OCCUPIED
    obs = cast_ray(grid_of(cells), 2.5, 2.5, math.pi / 4, 10.0)
    seen = [c for c, _ in obs]
    assert (3, 3) not in seen
    assert obs[-1][1] == OCCUPIED


def _brute_ray(truth, x, y, angle, max_range, step=1e-3):
    """Dense point sampling along the ray; returns the set of cells before the first hit."""
    cells = []
    t = 0.0
    dx, dy = math.cos(angle), math.sin(angle)
    while t <= max_range:
        px, py = x + t * dx, y + t * dy
        if not truth.contains(px, py):
            break
        rc = truth.world_to_cell(px, py)
        if not cells or cells[-1] != rc:
            cells.append(rc)
        if truth.cells[rc] == OCCUPIED:
            break
        t += step
    return cells


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 2 * math.pi).filter(lambda a: min(abs(math.tan(a)), 1 / max(abs(math.tan(a)), 1e-12)) > 0.01))
def test_ray_matches_dense_sampling(seed, angle):
    rng = np.random.default_rng(seed)
    cells = np.where(rng.random((15, 15)) < 0.2, OCCUPIED, FREE).astype(np.int8)
    cells[7, 7] = FREE
    truth = grid_of(cells, 0.5)
    x, y = 3.5 + 0.13, 3.5 + 0.07
    got = cast_ray(truth, x, y, angle, 5.0)
    ref = _brute_ray(truth, x, y, angle, 5.0)
    got_cells = [c for c, _ in got]
    # every sampled cell is reported, and nothing past the first hit
    assert set(ref) <= set(got_cells)
    hits = [c for c, s in got if s == OCCUPIED]
    assert len(hits) <= 1
    if hits:
        assert got[-1][1] == OCCUPIED
    for c, s in got:
        assert s == (OCCUPIED if cells[c] == OCCUPIED else FREE)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_scan_never_reports_behind_a_hit(seed):
    rng = np.random.default_rng(seed)
    cells = np.where(rng.random((20, 20)) < 0.15, OCCUPIED, FREE).astype(np.int8)
    cells[10, 10] = FREE
    truth = grid_of(cells, 0.5)
    sp = SensorParams(max_range=4.0, num_rays=72)
    for angle in sp.bearings(0.3):
        ray = cast_ray(truth, 5.25, 5.25, angle, sp.max_range)
        states = [s for _, s in ray]
        if OCCUPIED in states:
            assert states.index(OCCUPIED) == len(states) - 1 or all(
                s == OCCUPIED for s in states[states.index(OCCUPIED):])


# -- integration and merging -----------------------------------------------------


def test_integrate_examples():
    local = OccupancyGrid.filled(4, 4, 1.0)
    integrate_scan(local, [((1, 1), FREE)])
    assert (local.cells == FREE).sum() == 1
    local.cells[2, 2] = OCCUPIED
    integrate_scan(local, [((2, 2), FREE)])
    assert local.cells[2, 2] == OCCUPIED


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_integrate_idempotent_and_monotone(seed):
    rng = np.random.default_rng(seed)
    cells = np.where(rng.random((16, 16)) < 0.2, OCCUPIED, FREE).astype(np.int8)
    cells[8, 8] = FREE
    truth = grid_of(cells, 0.5)
    obs = raycast_scan(truth, Pose2D(4.25, 4.25, float(rng.uniform(-3, 3))), SensorParams(3.0, 60))
    local = OccupancyGrid.filled(16, 16, 0.5)
    once = integrate_scan(local.copy(), obs)
    twice = integrate_scan(once.copy(), obs)
    assert once == twice
    known_before = once.cells != UNKNOWN
    obs2 = raycast_scan(truth, Pose2D(4.25, 4.25, 1.0), SensorParams(4.0, 90))
    after = integrate_scan(once.copy(), obs2)
    assert np.all((after.cells != UNKNOWN)[known_before])


small_maps = st.integers(0, 2**31 - 1).map(
    lambda s: grid_of(np.random.default_rng(s).integers(-1, 2, size=(6, 7)), 0.5))


def test_merge_examples():
    a = grid_of([[FREE, UNKNOWN], [UNKNOWN, UNKNOWN]])
    assert merge_maps([a], [Transform2D()]) == a
    b = grid_of([[OCCUPIED, UNKNOWN], [UNKNOWN, FREE]])
    m = merge_maps([a, b], [Transform2D(), Transform2D()])
    assert m.cells.tolist() == [[OCCUPIED, UNKNOWN], [UNKNOWN, FREE]]


def test_merge_disjoint_regions_union_extent():
    a = grid_of([[FREE, FREE]])
    b = grid_of([[OCCUPIED, FREE]])
    m = merge_maps([a, b], [Transform2D(), Transform2D(0.0, (4.0, 0.0))])
    assert m.shape == (1, 6)
    assert m.cells.tolist() == [[FREE, FREE, UNKNOWN, UNKNOWN, OCCUPIED, FREE]]


def test_merge_rotated_quarter_turn():
    a = grid_of([[FREE, OCCUPIED]])  # cells at x in [0,1) and [1,2)
    m = merge_maps([a], [Transform2D(math.pi / 2)])
    assert m.shape == (2, 1)
    assert m.origin == pytest.approx((-1.0, 0.0))
    assert m.cells[:, 0].tolist() == [FREE, OCCUPIED]


@settings(max_examples=40, deadline=None)
@given(small_maps, small_maps, small_maps)
def test_merge_commutative_associative(a, b, c):
    I = Transform2D()
    ab = merge_maps([a, b], [I, I])
    assert ab == merge_maps([b, a], [I, I])
    left = merge_maps([ab, c], [I, I])
    right = merge_maps([a, merge_maps([b, c], [I, I])], [I, I])
    assert left == right == merge_maps([a, b, c], [I, I, I])


# -- coverage and map quality ----------------------------------------------------


def test_coverage_examples():
    truth = grid_of(np.where(np.arange(20).reshape(4, 5) % 3 == 0, OCCUPIED, FREE))
    assert coverage_percent(OccupancyGrid.filled(5, 4, 1.0), truth) == 0.0
    assert coverage_percent(truth, truth) == 100.0
    half = OccupancyGrid.filled(5, 4, 1.0)
    known = np.argwhere(truth.cells != UNKNOWN)
    for r, c in known[: len(known) // 2]:
        half.cells[r, c] = truth.cells[r, c]
    assert coverage_percent(half, truth) == pytest.approx(50.0)
    with pytest.raises(DimensionMismatch):
        coverage_percent(OccupancyGrid.filled(3, 3, 1.0), truth)


def test_reachable_mask_excludes_sealed_void():
    cells = np.full((7, 7), FREE, dtype=np.int8)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = OCCUPIED
    cells[2:5, 2:5] = OCCUPIED
    cells[3, 3] = FREE  # sealed pocket
    truth = grid_of(cells)
    mask = reachable_mask(truth, [(1.5, 1.5)])
    assert not mask[3, 3]
    assert mask[1, 1] and mask[0, 0] and mask[2, 2]
    explored = truth.copy()
    explored.cells[3, 3] = UNKNOWN
    assert coverage_percent(explored, truth, mask) == 100.0


def test_map_quality_examples():
    truth = grid_of(np.where(np.indices((30, 30)).sum(0) % 7 == 0, OCCUPIED, FREE))
    rmse, s = map_quality(truth, truth)
    assert rmse == 0.0 and s == pytest.approx(1.0)
    all_free = free_map(12, 12)
    rmse, _ = map_quality(OccupancyGrid.filled(12, 12, 1.0), all_free)
    assert rmse == pytest.approx(0.5)
    board = np.indices((12, 12)).sum(0) % 2
    a = grid_of(np.where(board == 0, FREE, OCCUPIED))
    b = grid_of(np.where(board == 1, FREE, OCCUPIED))
    rmse, _ = map_quality(a, b)
    assert rmse == pytest.approx(1.0)
    with pytest.raises(DimensionMismatch):
        map_quality(a, OccupancyGrid.filled(3, 3, 1.0))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ssim_matches_reference_implementation(seed):
    skm = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(seed)
    a = rng.integers(-1, 2, size=(40, 36)).astype(np.int8)
    b = np.where(rng.random(a.shape) < 0.3, rng.integers(-1, 2, size=a.shape), a).astype(np.int8)
    ra, rb = render(grid_of(a)), render(grid_of(b))
    ref_map = skm.structural_similarity(ra, rb, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                        use_sample_covariance=False, full=True)[1]
    ref = ref_map[5:-5, 5:-5].mean()
    assert ssim(ra, rb) == pytest.approx(ref, abs=1e-9)


def test_ssim_range():
    rng = np.random.default_rng(3)
    a, b = rng.random((20, 20)), rng.random((20, 20))
    assert -1.0 <= ssim(a, b) <= 1.0
    assert ssim(a, a) == pytest.approx(1.0)


# -- PGM -------------------------------------------------------------------------


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    g = grid_of(rng.integers(-1, 2, size=(9, 13)), 0.25, (-1.5, 2.0))
    path = write_pgm(g, tmp_path / "m.pgm")
    back = read_pgm(path)
    assert back == g
    assert back.resolution == 0.25 and back.origin == (-1.5, 2.0)
    # top image row is the highest y
    lines = path.read_text().split("\n")
    assert lines[0] == "P2"
    assert path.read_bytes() == write_pgm(back, tmp_path / "m2.pgm").read_bytes()


def test_pgm_thresholds(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_text("P2\n# comment\n4 1\n255\n0 99 150 201\n")
    g = read_pgm(p, resolution=0.5)
    assert g.cells.tolist() == [[OCCUPIED, OCCUPIED, UNKNOWN, FREE]]
    assert g.resolution == 0.5
