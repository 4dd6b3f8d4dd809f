"""Corner-based pose recovery."""
import numpy as np
import pytest

from pose_retrieval.errors import BehindCameraError, DegenerateDimensionsError, DegenerateGeometryError, ShapeError
from pose_retrieval.geometry import (
    CameraIntrinsics,
    Dimensions,
    Pose,
    Viewpoint,
    bbox_corners,
    geodesic_distance,
    normalize_projection,
    project,
    random_rotation,
)
from pose_retrieval.pnp import (
    Correspondences,
    Prediction19,
    dlt_pose,
    estimate_pose,
    reprojection_rms,
    solve_pnp,
)

K = CameraIntrinsics(500.0, 320.0, 240.0, 640, 480)
# maximum geodesic error over 1000 seeded trials of the sigma=2 px case below,
# measured once when the solver was verified
MC_SIGMA2_MAX = 0.7317


def random_pose(rng):
    v = Viewpoint(rng.uniform(0, 2 * np.pi), np.radians(rng.uniform(-60, 60)), np.radians(rng.uniform(-30, 30)))
    tz = rng.uniform(3, 10)
    return Pose.from_viewpoint(v, [rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), tz])


def exact(pose, dims, k=K):
    corners = bbox_corners(dims)
    return Correspondences(project(k, pose, corners), corners)


class TestSolve:
    def test_random_pose_exact(self):
        rng = np.random.default_rng(0)
        pose = Pose(random_rotation(rng), [0.1, -0.2, 6.0])
        # keep a valid, front-facing configuration
        got = solve_pnp(exact(pose, (0.8, 0.6, 0.4)), K)
        assert geodesic_distance(got.r, pose.r) < 1e-6
        assert np.linalg.norm(got.t - pose.t) < 1e-6

    def test_identity_pose(self):
        pose = Pose(np.eye(3), [0, 0, 5])
        got = solve_pnp(exact(pose, (0.8, 0.6, 0.4)), K)
        assert geodesic_distance(got.r, np.eye(3)) < 1e-6
        assert np.allclose(got.t, [0, 0, 5], atol=1e-6)

    def test_identical_points_degenerate(self):
        c = Correspondences(np.full((8, 2), 100.0), bbox_corners((0.5, 0.5, 0.5)))
        with pytest.raises(DegenerateGeometryError):
            solve_pnp(c, K)

    def test_too_few_points(self):
        with pytest.raises(DegenerateGeometryError):
            Correspondences(np.zeros((5, 2)), np.zeros((5, 3)))
        with pytest.raises(ShapeError):
            Correspondences(np.zeros((8, 3)), np.zeros((8, 3)))

    def test_front_of_camera(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            pose = random_pose(rng)
            assert solve_pnp(exact(pose, (0.5, 0.9, 0.3)), K).t[2] > 0

    def test_refinement_never_worse_than_init(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            pose = random_pose(rng)
            c = exact(pose, (0.6, 0.4, 0.7))
            noisy = Correspondences(c.pts2d + rng.normal(0, 3, c.pts2d.shape), c.pts3d)
            res = solve_pnp(noisy, K, full_output=True)
            assert res.rms <= reprojection_rms(dlt_pose(noisy, K), noisy, K) + 1e-12
            assert res.rms <= res.init_rms + 1e-12

    def test_accepted_steps_never_increase_cost(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            pose = random_pose(rng)
            c = exact(pose, (0.6, 0.4, 0.7))
            noisy = Correspondences(c.pts2d + rng.normal(0, 2, c.pts2d.shape), c.pts3d)
            costs = solve_pnp(noisy, K, full_output=True).costs
            assert all(b <= a for a, b in zip(costs, costs[1:]))

    def test_converged_flag(self):
        res = solve_pnp(exact(Pose(np.eye(3), [0, 0, 5]), (0.8, 0.6, 0.4)), K, full_output=True)
        assert res.converged
        assert 1 <= res.iterations <= 100


class TestReprojection:
    def test_zero_at_truth(self):
        pose = Pose.from_viewpoint(Viewpoint(0.3, 0.2, 0.1), [0, 0, 4])
        assert reprojection_rms(pose, exact(pose, (1, 1, 1)), K) < 1e-9

    def test_uniform_shift(self):
        pose = Pose.from_viewpoint(Viewpoint(0.3, 0.2, 0.1), [0, 0, 4])
        c = exact(pose, (1, 1, 1))
        shifted = Correspondences(c.pts2d + [0.6, 0.8], c.pts3d)
        assert reprojection_rms(pose, shifted, K) == pytest.approx(1.0)

    def test_direct_recomputation(self):
        rng = np.random.default_rng(7)
        pose = random_pose(rng)
        pts3d = rng.uniform(-0.5, 0.5, (8, 3))
        pts2d = rng.uniform(0, 480, (8, 2))
        xc = pts3d @ pose.r.T + pose.t
        px = K.f * xc[:, :2] / xc[:, 2:] + [K.cx, K.cy]
        want = np.sqrt(np.mean(np.sum((px - pts2d) ** 2, axis=1)))
        assert reprojection_rms(pose, Correspondences(pts2d, pts3d), K) == pytest.approx(want, rel=1e-12)

    def test_behind_camera(self):
        pose = Pose(np.eye(3), [0, 0, -5])
        c = Correspondences(np.zeros((8, 2)), bbox_corners((1, 1, 1)))
        with pytest.raises(BehindCameraError):
            reprojection_rms(pose, c, K)


class TestEstimate:
    def synth(self, pose, dims, k=K):
        return Prediction19(normalize_projection(project(k, pose, bbox_corners(dims)), k), Dimensions.of(dims))

    def test_noise_free(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            pose = random_pose(rng)
            dims = rng.uniform(0.2, 1.0, 3)
            got, d = estimate_pose(self.synth(pose, dims), K)
            assert geodesic_distance(got.r, pose.r) < 1e-6
            assert np.array_equal(d.as_array(), dims)

    def test_noise_sigma2_within_monte_carlo_bound(self):
        d = Dimensions(0.8, 0.6, 0.4)
        pose = Pose.from_viewpoint(Viewpoint.from_degrees(40, 20, 10), [0.2, -0.1, 5])
        pred = self.synth(pose, d)
        rng = np.random.default_rng(99)
        for _ in range(50):
            noisy = Prediction19(pred.proj + rng.normal(0, 2, (8, 2)) / [K.w, K.h], d)
            got, _ = estimate_pose(noisy, K)
            assert geodesic_distance(got.r, pose.r) < MC_SIGMA2_MAX

    def test_degenerate_dims(self):
        with pytest.raises(DegenerateDimensionsError):
            estimate_pose(Prediction19(np.zeros((8, 2)), (0, 0.5, 0.5)), K)

    def test_vector_round_trip(self):
        v = np.arange(19) / 19.0 + 0.01
        assert np.array_equal(Prediction19.from_vector(v).to_vector(), v)
        with pytest.raises(ShapeError):
            Prediction19.from_vector(np.zeros(18))

    def test_small_image_default_camera(self):
        k = CameraIntrinsics.default()
        pose = Pose.from_viewpoint(Viewpoint.from_degrees(200, 45, -20), [0.1, 0.05, 2.2])
        got, _ = estimate_pose(self.synth(pose, (0.9, 0.5, 0.7), k), k)
        assert geodesic_distance(got.r, pose.r) < 1e-6
