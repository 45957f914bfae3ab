import numpy as np
import pytest

from acsim.geom import (CellLayout, Trajectory, cell_centers, d3d, position_at,
                        random_point_in_cell, random_trajectory, wrapped_distance_2d)


@pytest.fixture(scope="module")
def layout():
    return CellLayout()


def domain_points(layout, n, rng):
    # uniform over the fundamental domain: uniform over the lattice
    # parallelogram, then folded
    ab = rng.random((n, 2))
    return layout.fold(ab @ layout._basis.T)


class TestCellCenters:
    def test_seven_centers_at_isd(self):
        c = cell_centers(400.0)
        assert c.shape == (7, 2)
        assert np.allclose(c[0], 0.0)
        assert np.allclose(np.linalg.norm(c[1:], axis=1), 400.0)

    def test_adjacent_neighbors_are_isd_apart(self):
        c = cell_centers(400.0)
        for k in range(1, 7):
            nxt = 1 + (k % 6)
            assert np.linalg.norm(c[k] - c[nxt]) == pytest.approx(400.0)

    def test_scaling(self):
        assert np.allclose(cell_centers(1.0) * 400.0, cell_centers(400.0))

    def test_rejects_nonpositive_isd(self):
        with pytest.raises(ValueError):
            cell_centers(0.0)
        with pytest.raises(ValueError):
            cell_centers(-10.0)


class TestWrappedDistance:
    def test_identity(self, layout):
        a = np.array([12.0, -40.0])
        assert wrapped_distance_2d(a, a, layout) == 0.0

    def test_cluster_translation_maps_to_zero(self, layout):
        a = np.array([0.0, 0.0])
        for off in layout.wrap_offsets[1:]:
            assert wrapped_distance_2d(a, a + off, layout) == pytest.approx(0.0, abs=1e-9)

    def test_never_exceeds_euclidean(self, layout):
        rng = np.random.default_rng(1)
        a = domain_points(layout, 10_000, rng)
        b = domain_points(layout, 10_000, rng)
        wrapped = wrapped_distance_2d(a, b, layout)
        plain = np.linalg.norm(a - b, axis=1)
        assert np.all(wrapped <= plain + 1e-9)

    def test_symmetry_and_triangle_inequality(self, layout):
        rng = np.random.default_rng(2)
        a = domain_points(layout, 10_000, rng)
        b = domain_points(layout, 10_000, rng)
        c = domain_points(layout, 10_000, rng)
        ab = wrapped_distance_2d(a, b, layout)
        ba = wrapped_distance_2d(b, a, layout)
        assert np.allclose(ab, ba, atol=1e-9)
        bc = wrapped_distance_2d(b, c, layout)
        ac = wrapped_distance_2d(a, c, layout)
        assert np.all(ac <= ab + bc + 1e-6)


class TestD3d:
    def test_vertical_only(self, layout):
        assert d3d(layout.centers[0], 1.5, 0, layout) == pytest.approx(23.5)

    def test_direct_evaluation(self, layout):
        pos = layout.centers[0] + np.array([100.0, 0.0])
        assert d3d(pos, 1.5, 0, layout) == pytest.approx(np.hypot(100.0, 23.5), rel=1e-12)

    def test_lower_bound(self, layout):
        rng = np.random.default_rng(3)
        pts = domain_points(layout, 1000, rng)
        for bs in range(7):
            vals = np.array([d3d(p, 1.5, bs, layout) for p in pts[:50]])
            assert np.all(vals >= 23.5 - 1e-12)

    def test_invalid_bs_index(self, layout):
        with pytest.raises(ValueError):
            d3d(np.zeros(2), 1.5, 7, layout)


class TestPositionAt:
    def test_at_start(self, layout):
        traj = Trajectory(origin=(5.0, 6.0), direction=(1.0, 0.0), speed=2.0, start_time=3.0)
        assert np.allclose(position_at(traj, 3.0, layout), (5.0, 6.0))

    def test_linear_motion_without_wrap(self, layout):
        traj = Trajectory(origin=(0.0, 0.0), direction=(1.0, 0.0), speed=1.0)
        assert np.allclose(position_at(traj, 10.0, layout), (10.0, 0.0))

    def test_fold_back_is_one_wrap_translation(self, layout):
        traj = Trajectory(origin=(0.0, 0.0), direction=(1.0, 0.0), speed=5.0)
        t = 130.0  # unwrapped x = 650, outside the fundamental domain
        unwrapped = np.array([650.0, 0.0])
        wrapped = position_at(traj, t, layout)
        assert not np.allclose(wrapped, unwrapped)
        delta = unwrapped - wrapped
        dists = np.linalg.norm(layout.wrap_offsets[1:] - delta, axis=1)
        assert dists.min() < 1e-9
        # and the folded point is in the fundamental domain
        assert np.allclose(layout.fold(wrapped), wrapped, atol=1e-9)

    def test_continuity_in_time(self, layout):
        traj = Trajectory(origin=(100.0, 50.0), direction=(0.6, 0.8), speed=5.0)
        for t in (10.0, 107.0, 500.0):
            p1 = position_at(traj, t, layout)
            p2 = position_at(traj, t + 1e-8, layout)
            assert wrapped_distance_2d(p1, p2, layout) < 1e-6

    def test_rejects_time_before_start(self, layout):
        traj = Trajectory(origin=(0.0, 0.0), direction=(1.0, 0.0), speed=1.0, start_time=5.0)
        with pytest.raises(ValueError):
            position_at(traj, 4.0, layout)


class TestTrajectoryValidation:
    def test_direction_must_be_unit(self):
        with pytest.raises(ValueError):
            Trajectory(origin=(0, 0), direction=(1.0, 1.0), speed=2.0)

    def test_speed_range(self):
        with pytest.raises(ValueError):
            Trajectory(origin=(0, 0), direction=(1.0, 0.0), speed=0.5)
        with pytest.raises(ValueError):
            Trajectory(origin=(0, 0), direction=(1.0, 0.0), speed=5.5)

    def test_random_trajectory_in_range(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            traj = random_trajectory((0.0, 0.0), rng)
            assert 1.0 <= traj.speed <= 5.0
            assert np.hypot(*traj.direction) == pytest.approx(1.0, abs=1e-9)


class TestCellAssignment:
    def test_partition_is_balanced(self, layout):
        rng = np.random.default_rng(5)
        pts = domain_points(layout, 100_000, rng)
        cells = layout.assign_cell(pts)
        frac = np.bincount(cells, minlength=7) / len(pts)
        assert np.all(np.abs(frac - 1.0 / 7.0) < 0.02)

    def test_random_point_in_cell_lands_in_cell(self, layout):
        rng = np.random.default_rng(6)
        for cell in range(7):
            for _ in range(200):
                p = random_point_in_cell(cell, layout, rng)
                assert int(layout.assign_cell(p)) == cell
