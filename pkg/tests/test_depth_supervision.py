"""Tests for target generation, the depth loss and its gradient."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radarcam.depth_supervision import (
    DepthBinSpec,
    DepthTarget,
    LossConfig,
    RadarPoint,
    RadiusConfig,
    build_depth_targets,
    expected_depth,
    nearest_bin,
    neighborhood_pixels,
    neighborhood_radius,
    one_to_many_loss,
    one_to_many_loss_grad,
    pixel_depth_loss,
    read_radar_points_csv,
    targets_from_array,
    targets_to_array,
)
from radarcam.geometry import (
    AngularResolution,
    CameraIntrinsics,
    RigidTransform,
    SensorCalibration,
)
from radarcam.gradcheck import analytic_grad, finite_difference_grad, random_instance, relative_error
from radarcam.tensor_ops import softmax

K = CameraIntrinsics(fx=1600.0, fy=1600.0, cx=320.0, cy=240.0)


def make_calib(fx=1600.0, fy=1600.0, cx=320.0, cy=240.0, width=640, height=480):
    return SensorCalibration(
        intrinsics=CameraIntrinsics(fx, fy, cx, cy),
        radar_to_camera=RigidTransform.identity(),
        image_width=width,
        image_height=height,
        angular_resolution=AngularResolution.from_degrees(1.0, 1.0),
    )


def uniform_map(num_bins, height, width):
    return np.full((num_bins, height, width), 1.0 / num_bins)


class TestNeighborhoodRadius:
    def test_hand_example(self):
        cfg = RadiusConfig(k=0.1, r_max=10.0)
        r = neighborhood_radius(20.0, K, 8, cfg, rcs_dbsm=0.0)
        assert r == pytest.approx(1.0, abs=1e-9)

    def test_large_rcs_clamps_to_ceiling(self):
        cfg = RadiusConfig(k=0.1, r_max=2.0)
        assert neighborhood_radius(20.0, K, 8, cfg, rcs_dbsm=40.0) == 2.0

    def test_rcs_absent_uses_fixed_radius(self):
        cfg = RadiusConfig(fixed_r=2.0)
        assert neighborhood_radius(20.0, K, 8, cfg, rcs_dbsm=None) == 2.0

    def test_errors(self):
        with pytest.raises(ValueError, match="depth"):
            neighborhood_radius(0.0, K, 8, RadiusConfig(fixed_r=1.0))
        with pytest.raises(ValueError, match="fixed_r"):
            neighborhood_radius(10.0, K, 8, RadiusConfig(), rcs_dbsm=None)

    @given(st.floats(-20, 30), st.floats(1, 100))
    @settings(max_examples=60, deadline=None)
    def test_scaling_laws_before_clamping(self, rcs, depth):
        cfg = RadiusConfig(k=0.1, r_max=1e12)
        base = neighborhood_radius(depth, K, 8, cfg, rcs_dbsm=rcs)
        louder = neighborhood_radius(depth, K, 8, cfg, rcs_dbsm=rcs + 20.0)
        farther = neighborhood_radius(2.0 * depth, K, 8, cfg, rcs_dbsm=rcs)
        assert louder == pytest.approx(10.0 * base, rel=1e-9)
        assert farther == pytest.approx(base / 2.0, rel=1e-9)

    def test_zero_ceiling_gives_zero_radius_on_both_paths(self):
        cfg = RadiusConfig(k=0.1, r_max=0.0, fixed_r=2.0)
        assert neighborhood_radius(5.0, K, 8, cfg, rcs_dbsm=10.0) == 0.0
        assert neighborhood_radius(5.0, K, 8, cfg, rcs_dbsm=None) == 0.0


class TestBuildDepthTargets:
    def test_empty_input(self):
        result = build_depth_targets([], make_calib(), 8, RadiusConfig(fixed_r=2.0))
        assert result.targets == ()
        assert result.num_dropped == 0

    def test_single_point_on_axis(self):
        calib = make_calib(fx=500.0, fy=500.0)
        result = build_depth_targets(
            [RadarPoint(0.0, 0.0, 10.0)], calib, 8, RadiusConfig(fixed_r=2.0)
        )
        assert len(result.targets) == 1
        t = result.targets[0]
        assert (t.u, t.v) == (40, 30)
        assert t.d_gt == pytest.approx(10.0)
        assert t.radius == 2.0

    def test_coincident_points_each_keep_a_target(self):
        calib = make_calib(fx=500.0, fy=500.0)
        pts = [RadarPoint(0.0, 0.0, 8.0), RadarPoint(0.0, 0.0, 30.0)]
        result = build_depth_targets(pts, calib, 8, RadiusConfig(fixed_r=2.0))
        assert len(result.targets) == 2
        assert {t.d_gt for t in result.targets} == {8.0, 30.0}
        assert len({(t.u, t.v) for t in result.targets}) == 1

    def test_behind_camera_and_out_of_view_are_dropped(self):
        calib = make_calib()
        pts = [
            RadarPoint(0.0, 0.0, -5.0),
            RadarPoint(100.0, 0.0, 1.0),
            RadarPoint(0.0, 0.0, 10.0),
        ]
        result = build_depth_targets(pts, calib, 8, RadiusConfig(fixed_r=2.0))
        assert len(result.targets) == 1
        assert result.num_dropped == 2
        assert result.num_input == 3

    def test_extrinsics_are_applied(self):
        shift = RigidTransform(np.eye(3), np.array([0.0, 0.0, 5.0]))
        calib = SensorCalibration(
            CameraIntrinsics(500.0, 500.0, 320.0, 240.0), shift, 640, 480,
            AngularResolution.from_degrees(1.0, 1.0),
        )
        result = build_depth_targets(
            [RadarPoint(0.0, 0.0, 5.0)], calib, 8, RadiusConfig(fixed_r=1.0)
        )
        assert result.targets[0].d_gt == pytest.approx(10.0)

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_stride_consistency(self, seed):
        rng = np.random.default_rng(seed)
        calib = make_calib()
        pts = [
            RadarPoint(
                float(rng.uniform(-8, 8)), float(rng.uniform(-4, 4)), float(rng.uniform(1, 60))
            )
            for _ in range(12)
        ]
        cfg = RadiusConfig(fixed_r=2.0)
        at_stride = build_depth_targets(pts, calib, 8, cfg)
        at_unit = build_depth_targets(pts, calib, 1, cfg)
        coarse = {(t.u, t.v, round(t.d_gt, 9)) for t in at_stride.targets}
        derived = {(t.u // 8, t.v // 8, round(t.d_gt, 9)) for t in at_unit.targets}
        # points surviving both paths must agree after integer division
        assert coarse <= derived


class TestBins:
    SPEC = DepthBinSpec(0.0, 50.0, 50)

    def test_nearest_midpoint(self):
        assert nearest_bin(10.4, self.SPEC) == 10
        assert self.SPEC.midpoint(10) == pytest.approx(10.5)

    def test_lower_edge(self):
        assert nearest_bin(0.0, self.SPEC) == 0

    def test_clamp_far_out_of_range(self):
        assert nearest_bin(10_000.0, self.SPEC) == 49
        assert nearest_bin(-3.0, self.SPEC) == 0

    def test_midpoints_increasing(self):
        mids = self.SPEC.midpoints()
        assert np.all(np.diff(mids) > 0)
        assert mids[0] == pytest.approx(0.5)

    def test_expected_depth_uniform(self):
        assert expected_depth(np.full(50, 0.02), self.SPEC) == pytest.approx(25.0)

    def test_expected_depth_one_hot(self):
        dist = np.zeros(50)
        dist[7] = 1.0
        assert expected_depth(dist, self.SPEC) == pytest.approx(self.SPEC.midpoint(7))

    def test_expected_depth_two_bins(self):
        spec = DepthBinSpec(0.0, 4.0, 2)
        assert spec.midpoints().tolist() == [1.0, 3.0]
        assert expected_depth(np.array([0.5, 0.5]), spec) == pytest.approx(2.0)

    def test_expected_depth_rejects_unnormalized(self):
        with pytest.raises(ValueError, match="sums"):
            expected_depth(np.full(50, 0.03), self.SPEC)


class TestPixelDepthLoss:
    SPEC = DepthBinSpec(0.0, 50.0, 50)

    def test_perfect_one_hot_is_zero(self):
        dist = np.zeros(50)
        dist[10] = 1.0
        assert pixel_depth_loss(dist, self.SPEC.midpoint(10), self.SPEC, LossConfig()) == 0.0

    def test_uniform_mid_range(self):
        cfg = LossConfig(lambda1=0.1, lambda2=0.1)
        loss = pixel_depth_loss(np.full(50, 0.02), 25.0, self.SPEC, cfg)
        assert loss == pytest.approx(0.1 * math.log(50.0), abs=1e-12)

    def test_zero_weights_zero_loss(self):
        cfg = LossConfig(lambda1=0.0, lambda2=0.0)
        dist = softmax(np.random.default_rng(0).normal(size=50), axis=0)
        assert pixel_depth_loss(dist, 13.0, self.SPEC, cfg) == 0.0

    def test_out_of_range_depth_keeps_regression_term(self):
        dist = np.zeros(50)
        dist[49] = 1.0
        cfg = LossConfig(lambda1=0.0, lambda2=1.0)
        loss = pixel_depth_loss(dist, 60.0, self.SPEC, cfg)
        assert loss == pytest.approx(60.0 - self.SPEC.midpoint(49))


class TestNeighborhoodPixels:
    def test_radius_zero_is_center_only(self):
        assert neighborhood_pixels(3, 4, 0.0, 10, 10) == [(3, 4)]

    def test_radius_one_is_a_cross(self):
        got = set(neighborhood_pixels(5, 5, 1.0, 10, 10))
        assert got == {(5, 5), (4, 5), (6, 5), (5, 4), (5, 6)}

    def test_radius_two_disk_size(self):
        assert len(neighborhood_pixels(5, 5, 2.0, 11, 11)) == 13

    def test_bounds_clipping(self):
        got = neighborhood_pixels(0, 0, 1.0, 4, 4)
        assert set(got) == {(0, 0), (1, 0), (0, 1)}

    def test_row_major_order(self):
        got = neighborhood_pixels(1, 1, 1.0, 4, 4)
        assert got == [(1, 0), (0, 1), (1, 1), (2, 1), (1, 2)]


class TestOneToManyLoss:
    SPEC = DepthBinSpec(0.0, 16.0, 16)

    def test_empty_targets(self):
        result = one_to_many_loss(uniform_map(16, 4, 4), [], self.SPEC, LossConfig())
        assert result.total == 0.0
        assert result.per_target == ()

    def test_radius_zero_equals_one_to_one_exactly(self):
        rng = np.random.default_rng(4)
        depth_map = softmax(rng.normal(size=(16, 6, 6)), axis=0)
        targets = [DepthTarget(2, 3, 7.3, 0.0)]
        many = one_to_many_loss(depth_map, targets, self.SPEC, LossConfig())
        one = one_to_many_loss(
            depth_map, targets, self.SPEC, LossConfig(strategy="one-to-one")
        )
        assert many.total == one.total

    def test_min_absorbs_a_perfect_neighbor(self):
        depth_map = uniform_map(16, 5, 5).copy()
        gt_bin = 9
        one_hot = np.zeros(16)
        one_hot[gt_bin] = 1.0
        depth_map[:, 2, 3] = one_hot  # neighbor of (2, 2)
        targets = [DepthTarget(2, 2, self.SPEC.midpoint(gt_bin), 1.0)]
        result = one_to_many_loss(depth_map, targets, self.SPEC, LossConfig())
        assert result.total == 0.0
        assert result.per_target[0].pixel == (3, 2)

    def test_max_on_same_setup_is_positive(self):
        depth_map = uniform_map(16, 5, 5).copy()
        one_hot = np.zeros(16)
        one_hot[9] = 1.0
        depth_map[:, 2, 3] = one_hot
        targets = [DepthTarget(2, 2, self.SPEC.midpoint(9), 1.0)]
        result = one_to_many_loss(
            depth_map, targets, self.SPEC, LossConfig(neighborhood_agg="max")
        )
        assert result.total > 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_min_never_exceeds_one_to_one(self, seed):
        rng = np.random.default_rng(seed)
        depth_map = softmax(rng.normal(size=(16, 8, 8)), axis=0)
        targets = [
            DepthTarget(
                int(rng.integers(0, 8)), int(rng.integers(0, 8)),
                float(rng.uniform(0, 16)), float(rng.uniform(0, 3)),
            )
            for _ in range(5)
        ]
        many = one_to_many_loss(depth_map, targets, self.SPEC, LossConfig())
        one = one_to_many_loss(depth_map, targets, self.SPEC, LossConfig(strategy="one-to-one"))
        assert many.total <= one.total
        for m, o in zip(many.per_target, one.per_target):
            assert m.loss <= o.loss

    def test_total_is_mean_over_targets(self):
        depth_map = uniform_map(16, 4, 4)
        targets = [DepthTarget(0, 0, 8.0, 0.0), DepthTarget(3, 3, 8.0, 0.0)]
        result = one_to_many_loss(depth_map, targets, self.SPEC, LossConfig())
        assert result.total == pytest.approx(
            (result.per_target[0].loss + result.per_target[1].loss) / 2.0
        )

    def test_non_negative_and_constructive_zero(self):
        rng = np.random.default_rng(9)
        depth_map = softmax(rng.normal(size=(16, 6, 6)), axis=0).copy()
        targets = []
        for gt_bin, (u, v) in [(3, (1, 1)), (12, (4, 2))]:
            one_hot = np.zeros(16)
            one_hot[gt_bin] = 1.0
            depth_map[:, v, u] = one_hot
            targets.append(DepthTarget(u, v, self.SPEC.midpoint(gt_bin), 1.5))
        result = one_to_many_loss(depth_map, targets, self.SPEC, LossConfig())
        assert result.total == 0.0
        # perturbing any neighborhood away from one-hot makes it positive
        depth_map[:, 1, 1] = np.full(16, 1.0 / 16)
        result = one_to_many_loss(depth_map, targets, self.SPEC, LossConfig())
        assert result.total > 0.0

    def test_rejects_unnormalized_map(self):
        bad = np.full((16, 3, 3), 0.2)
        with pytest.raises(ValueError, match="normalized"):
            one_to_many_loss(bad, [], self.SPEC, LossConfig())


class TestLossGradient:
    SPEC = DepthBinSpec(0.0, 12.0, 12)

    def test_zero_targets_zero_gradient(self):
        grad = one_to_many_loss_grad(uniform_map(12, 5, 5), [], self.SPEC, LossConfig())
        np.testing.assert_array_equal(grad, np.zeros((12, 5, 5)))

    def test_pixels_outside_neighborhoods_have_zero_gradient(self):
        rng = np.random.default_rng(2)
        depth_map = softmax(rng.normal(size=(12, 9, 9)), axis=0)
        targets = [DepthTarget(4, 4, 6.0, 1.0)]
        grad = one_to_many_loss_grad(depth_map, targets, self.SPEC, LossConfig())
        inside = {(4, 4), (3, 4), (5, 4), (4, 3), (4, 5)}
        for v in range(9):
            for u in range(9):
                if (u, v) not in inside:
                    np.testing.assert_array_equal(grad[:, v, u], np.zeros(12))

    def test_single_target_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        logits = rng.normal(size=(8, 5, 5))
        spec = DepthBinSpec(0.0, 8.0, 8)
        cfg = LossConfig(strategy="one-to-one")
        targets = (DepthTarget(2, 2, 4.7, 0.0),)
        from radarcam.gradcheck import GradCheckInstance

        inst = GradCheckInstance(logits, targets, spec, cfg)
        err = relative_error(analytic_grad(inst), finite_difference_grad(inst))
        assert err <= 1e-4

    @pytest.mark.parametrize("seed", range(8))
    def test_random_instances_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        inst = random_instance(rng, max_bins=10, max_size=8)
        err = relative_error(analytic_grad(inst), finite_difference_grad(inst))
        assert err <= 1e-4

    def test_gradient_descends(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=(12, 6, 6))
        targets = [DepthTarget(2, 2, 5.0, 1.0), DepthTarget(4, 4, 9.0, 0.0)]
        cfg = LossConfig()
        base = one_to_many_loss(softmax(logits, axis=0), targets, self.SPEC, cfg).total
        grad = one_to_many_loss_grad(softmax(logits, axis=0), targets, self.SPEC, cfg)
        stepped = one_to_many_loss(
            softmax(logits - 0.1 * grad, axis=0), targets, self.SPEC, cfg
        ).total
        assert stepped < base


class TestTargetSerialization:
    def test_array_roundtrip(self):
        targets = (DepthTarget(3, 4, 12.5, 1.5), DepthTarget(0, 0, 3.0, 0.0))
        back = targets_from_array(targets_to_array(targets))
        assert back == targets

    def test_empty_roundtrip(self):
        arr = targets_to_array(())
        assert arr.shape == (0, 4)
        assert targets_from_array(arr) == ()

    def test_bad_shape_rejected(self):
        with pytest.raises(ValueError, match="N, 4"):
            targets_from_array(np.zeros((3, 3)))


class TestRadarCsv:
    def test_full_columns(self, tmp_path):
        path = tmp_path / "pts.csv"
        path.write_text("x,y,z,rcs_dbsm,doppler\n1.0,2.0,3.0,5.5,-0.25\n4,5,6,,\n")
        pts = read_radar_points_csv(path)
        assert pts[0] == RadarPoint(1.0, 2.0, 3.0, 5.5, -0.25)
        assert pts[1].rcs_dbsm is None and pts[1].doppler is None

    def test_minimal_columns(self, tmp_path):
        path = tmp_path / "pts.csv"
        path.write_text("x,y,z\n1,2,3\n")
        assert read_radar_points_csv(path) == [RadarPoint(1.0, 2.0, 3.0)]

    def test_empty_file_has_no_points(self, tmp_path):
        path = tmp_path / "pts.csv"
        path.write_text("x,y,z,rcs_dbsm,doppler\n")
        assert read_radar_points_csv(path) == []

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "pts.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            read_radar_points_csv(path)
