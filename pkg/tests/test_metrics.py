import numpy as np
import pytest

from viewplan.metrics import (
    DepthGridSpec,
    EmptyCloudError,
    chamfer_distance,
    chamfer_distance_bruteforce,
    depth_mae,
    rasterize_heights,
    simple_regret_curve,
)


def random_rigid(rng):
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q, rng.uniform(-2, 2, size=3)


class TestChamfer:
    def test_identical_clouds(self):
        a = np.random.default_rng(0).uniform(size=(40, 3))
        assert chamfer_distance(a, a) == 0.0

    def test_single_points(self):
        assert chamfer_distance([[0, 0, 0]], [[1, 0, 0]]) == pytest.approx(2.0)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(size=(500, 3))
        b = rng.uniform(size=(500, 3))
        assert abs(chamfer_distance(a, b) - chamfer_distance_bruteforce(a, b)) < 1e-9

    def test_squared_variant(self):
        a = np.array([[0.0, 0.0, 0.0]])
        b = np.array([[2.0, 0.0, 0.0]])
        assert chamfer_distance(a, b, squared=True) == pytest.approx(8.0)
        rng = np.random.default_rng(5)
        a = rng.uniform(size=(50, 3))
        b = rng.uniform(size=(60, 3))
        assert abs(
            chamfer_distance(a, b, squared=True)
            - chamfer_distance_bruteforce(a, b, squared=True)
        ) < 1e-9

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(size=(30, 3))
        b = rng.uniform(size=(70, 3))
        assert chamfer_distance(a, b) == chamfer_distance(b, a)

    def test_rigid_invariance(self):
        rng = np.random.default_rng(9)
        a = rng.uniform(size=(60, 3))
        b = rng.uniform(size=(50, 3))
        base = chamfer_distance(a, b)
        for _ in range(10):
            r, t = random_rigid(rng)
            assert abs(chamfer_distance(a @ r.T + t, b @ r.T + t) - base) < 1e-9

    def test_zero_iff_coincide(self):
        rng = np.random.default_rng(10)
        a = rng.uniform(size=(20, 3))
        shuffled = a[rng.permutation(20)]
        assert chamfer_distance(a, shuffled) < 1e-12
        assert chamfer_distance(a, a + [0.01, 0, 0]) > 1e-3

    def test_empty_cloud(self):
        with pytest.raises(EmptyCloudError):
            chamfer_distance(np.zeros((0, 3)), [[0, 0, 0]])


class TestDepthMae:
    def test_identical(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(-1, 1, size=(100, 3))
        grid = DepthGridSpec(resolution=16, x_min=-1, x_max=1, y_min=-1, y_max=1)
        assert depth_mae(a, a, grid) == 0.0

    def test_single_cell(self):
        grid = DepthGridSpec(resolution=1, x_min=0, x_max=1, y_min=0, y_max=1, ground_height=0.0)
        a = np.array([[0.5, 0.5, 1.0]])
        b = np.zeros((0, 3))
        assert depth_mae(a, b, grid) == pytest.approx(1.0)

    def test_against_reference_rasterizer(self):
        rng = np.random.default_rng(8)
        grid = DepthGridSpec(resolution=8, x_min=-1, x_max=1, y_min=-1, y_max=1, ground_height=0.2)
        a = rng.uniform(-1.2, 1.2, size=(200, 3))
        b = rng.uniform(-1.2, 1.2, size=(150, 3))

        def reference(cloud):
            h = np.full((8, 8), 0.2)
            for x, y, z in cloud:
                ix = int(np.floor((x + 1) / 2 * 8))
                iy = int(np.floor((y + 1) / 2 * 8))
                if 0 <= ix < 8 and 0 <= iy < 8:
                    h[ix, iy] = max(h[ix, iy], z)
            return h

        expected = np.mean(np.abs(reference(a) - reference(b)))
        assert abs(depth_mae(a, b, grid) - expected) < 1e-12

    def test_empty_cloud_is_all_ground(self):
        grid = DepthGridSpec(resolution=4, x_min=0, x_max=1, y_min=0, y_max=1, ground_height=0.3)
        h = rasterize_heights(np.zeros((0, 3)), grid)
        assert np.all(h == 0.3)

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            DepthGridSpec(resolution=0)


class TestSimpleRegret:
    def test_running_max(self):
        np.testing.assert_allclose(simple_regret_curve([-3, -1, -2], 0.0), [3, 1, 1])

    def test_reaches_zero_and_stays(self):
        sr = simple_regret_curve([-2, 0.0, -1, -3], 0.0)
        np.testing.assert_allclose(sr, [2, 0, 0, 0])

    def test_non_increasing_property(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            y = rng.normal(size=rng.integers(1, 40))
            sr = simple_regret_curve(y, y.max() + 1.0)
            assert np.all(np.diff(sr) <= 0)

    def test_warns_when_r_star_too_low(self):
        with pytest.warns(UserWarning):
            simple_regret_curve([1.0, 2.0], 0.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            simple_regret_curve([], 0.0)
