"""Tests for Jacobian features, the augmentation classifier and the losses"""
import math

import numpy as np
import pytest

from depth2flow.classifier import (
    ClassPosterior,
    classify,
    extract_features,
    loss_lc,
    loss_lp,
    loss_total,
)
from depth2flow.depth_unify import VirtualStereoConfig, synth_virtual_stereo
from depth2flow.ego_motion import (
    CameraModel,
    MotionSamplingConfig,
    egomotion_flow,
    sample_motion,
    synth_general_tuples,
)
from depth2flow.errors import FeatureError
from depth2flow.fields import AugLabel, FlowField, PixelGrid, SampleTuple
from depth2flow.lateral_aug import AugKind, AugRanges, AugSpec, apply_lateral_aug, sample_aug_spec, special_flow
from depth2flow.synthetic import slanted_plane_depth, textured_image

TRIALS = 1000


def _random_grid(rng):
    return PixelGrid(int(rng.integers(16, 80)), int(rng.integers(16, 80)))


def _spec_for(label, grid, rng):
    if label is AugLabel.NONE:
        return AugSpec(AugKind.NONE)
    return sample_aug_spec(grid, rng, weights={label: 1.0})


class TestFeatures:
    """Median Jacobian of the special flows"""

    def test_flip_jacobian(self, grid):
        forward, _ = special_flow(grid, AugSpec(AugKind.FLIP_H))
        np.testing.assert_allclose(extract_features(forward).jac, [[-2.0, 0.0], [0.0, 0.0]], atol=1e-12)

    def test_rotation_jacobian(self, grid):
        theta = math.radians(15.0)
        forward, _ = special_flow(grid, AugSpec(AugKind.ROTATE, theta=theta, center=(20.0, 20.0)))
        expected = [[math.cos(theta) - 1, -math.sin(theta)], [math.sin(theta), math.cos(theta) - 1]]
        np.testing.assert_allclose(extract_features(forward).jac, expected, atol=1e-9)

    def test_shear_jacobian(self, grid):
        forward, _ = special_flow(grid, AugSpec(AugKind.SHEAR_H, lam=0.3))
        features = extract_features(forward)
        np.testing.assert_allclose(features.jac, [[0.0, 0.3], [0.0, 0.0]], atol=1e-12)
        np.testing.assert_allclose(features.jac_dispersion, 0.0, atol=1e-12)

    def test_mean_magnitude(self):
        features = extract_features(FlowField.constant(20, 10, 3.0, 4.0))
        assert features.mean_mag == pytest.approx(5.0)
        assert features.n_samples == 8 * 20

    def test_too_few_pixels(self):
        with pytest.raises(FeatureError, match="too few valid pixels"):
            extract_features(FlowField.zeros(9, 9))

    def test_scattered_validity_has_no_neighborhoods(self):
        ys, xs = np.mgrid[0:20, 0:20]
        # 2x2 checkerboard: no pixel has a valid neighbor two steps away
        valid = (ys // 2 + xs // 2) % 2 == 0
        flow = FlowField(np.zeros((20, 20)), np.zeros((20, 20)), valid)
        with pytest.raises(FeatureError):
            extract_features(flow)


class TestClassify:
    """Classification of pure and composed flows"""

    def test_zero_flow_is_none(self, grid):
        assert classify(FlowField.zeros(grid.width, grid.height)).predicted is AugLabel.NONE

    def test_posterior_sums_to_one(self, rng):
        for _ in range(20):
            flow = FlowField.from_stack(rng.normal(scale=3.0, size=(24, 32, 2)))
            assert classify(flow).posterior.sum() == pytest.approx(1.0, abs=1e-9)

    def test_flip_is_confident(self):
        rng = np.random.default_rng(0)
        for _ in range(TRIALS):
            grid = _random_grid(rng)
            forward, _ = special_flow(grid, AugSpec(AugKind.FLIP_H if rng.random() < 0.5 else AugKind.FLIP_V))
            posterior = classify(forward)
            assert posterior.predicted is AugLabel.FLIP
            assert posterior.prob(AugLabel.FLIP) > 0.9

    @pytest.mark.parametrize("label", list(AugLabel), ids=lambda label: label.value)
    def test_pure_special_flows(self, label):
        """Randomized over the default parameter ranges"""
        rng = np.random.default_rng(label.index)
        hits = 0
        for _ in range(TRIALS):
            grid = _random_grid(rng)
            forward, _ = special_flow(grid, _spec_for(label, grid, rng))
            hits += classify(forward).predicted is label
        assert hits / TRIALS >= 0.95

    @pytest.mark.parametrize("label", list(AugLabel), ids=lambda label: label.value)
    def test_augmented_egomotion_flows(self, label):
        """Ground truth of target-side augmentation over small camera motions"""
        rng = np.random.default_rng(100 + label.index)
        grid = PixelGrid(32, 24)
        image = textured_image(grid.width, grid.height, seed=label.index)
        depth = slanted_plane_depth(grid.width, grid.height)
        cam = CameraModel.default(grid.width, grid.height)
        motion_cfg = MotionSamplingConfig()
        ranges = AugRanges()
        hits = 0
        for _ in range(TRIALS):
            base = egomotion_flow(depth, cam, sample_motion(motion_cfg, depth, rng))
            sample = SampleTuple(image, image, base)
            augmented = apply_lateral_aug(sample, _spec_for(label, grid, rng), ranges=ranges)
            hits += classify(augmented.flow).predicted is label
        assert hits / TRIALS >= 0.80

    @pytest.mark.parametrize("index", [0, 2], ids=["f01", "f02"])
    def test_unaugmented_disparity_flows_are_none(self, texture_image, plane_depth, index):
        """Virtual stereo flows and their motion composites carry no augmentation"""
        rng = np.random.default_rng(300 + index)
        cam = CameraModel.default(texture_image.width, texture_image.height)
        stereo_cfg = VirtualStereoConfig()
        motion_cfg = MotionSamplingConfig()
        trials = 200
        hits = 0
        for _ in range(trials):
            pair = synth_virtual_stereo(texture_image, plane_depth, stereo_cfg, rng)
            flow = synth_general_tuples(pair, cam, motion_cfg, rng)[index].flow
            hits += classify(flow).predicted is AugLabel.NONE
        assert hits / trials >= 0.9

    def test_spread_discounts_off_diagonal(self):
        """A du/dy that varies across the image is not read as a shear"""
        ys, _ = np.mgrid[0:40, 0:40].astype(np.float64)
        flow = FlowField(0.004 * ys**2, np.zeros((40, 40)), np.ones((40, 40), bool))
        features = extract_features(flow)
        assert features.jac[0, 1] > 0.045
        assert classify(flow).predicted is AugLabel.NONE


class TestPosterior:
    def test_one_hot(self):
        posterior = ClassPosterior.one_hot(AugLabel.SHEAR)
        assert posterior.predicted is AugLabel.SHEAR
        assert posterior.prob(AugLabel.SHEAR) == 1.0

    def test_from_logits_is_stable(self):
        posterior = ClassPosterior.from_logits([1000.0, 0.0, 0.0, 0.0])
        assert posterior.prob(AugLabel.FLIP) == pytest.approx(1.0)
        assert np.isfinite(posterior.posterior).all()

    def test_as_dict_keys(self):
        payload = ClassPosterior.from_logits(np.zeros(4)).as_dict()
        assert set(payload["posterior"]) == {"flip", "rotate", "shear", "none"}
        assert payload["posterior"]["rotate"] == pytest.approx(0.25)


class TestLosses:
    """L_P, L_C and their weighted sum"""

    def test_lp_zero_for_identical(self, rng):
        flow = FlowField.from_stack(rng.normal(size=(8, 8, 2)))
        assert loss_lp(flow, flow) == 0.0

    def test_lp_unit_offset(self):
        """A (1, 0) error averages to 0.5 over both components"""
        gt = FlowField.zeros(6, 4)
        assert loss_lp(FlowField.constant(6, 4, 1.0, 0.0), gt) == pytest.approx(0.5)

    def test_lp_disjoint_masks(self):
        left = np.zeros((4, 6), bool)
        left[:, :3] = True
        a = FlowField(np.zeros((4, 6)), np.zeros((4, 6)), left)
        b = FlowField(np.zeros((4, 6)), np.zeros((4, 6)), ~left)
        with pytest.raises(FeatureError, match="mutually valid"):
            loss_lp(a, b)

    def test_lc_values(self):
        assert loss_lc(ClassPosterior.one_hot(AugLabel.ROTATE), AugLabel.ROTATE) == pytest.approx(0.0)
        uniform = ClassPosterior.from_logits(np.zeros(4))
        assert loss_lc(uniform, AugLabel.NONE) == pytest.approx(math.log(4))
        half = ClassPosterior(np.zeros(4), np.array([0.5, 0.5, 0.0, 0.0]))
        assert loss_lc(half, AugLabel.FLIP) == pytest.approx(math.log(2))

    def test_lc_floor(self):
        posterior = ClassPosterior.one_hot(AugLabel.FLIP)
        assert loss_lc(posterior, AugLabel.NONE) == pytest.approx(-math.log(1e-12))

    def test_total(self):
        gt = FlowField.zeros(6, 4)
        pred = FlowField.constant(6, 4, 2.0, 0.0)
        uniform = ClassPosterior.from_logits(np.zeros(4))
        assert loss_total(pred, gt, uniform, AugLabel.FLIP, lambda_c=0.0) == pytest.approx(1.0)
        assert loss_total(gt, gt, ClassPosterior.one_hot(AugLabel.FLIP), AugLabel.FLIP) == pytest.approx(0.0)
        half = ClassPosterior(np.zeros(4), np.array([math.exp(-2.0), 0.0, 0.0, 1 - math.exp(-2.0)]))
        assert loss_total(pred, gt, half, AugLabel.FLIP, lambda_c=0.5) == pytest.approx(2.0)

    def test_negative_lambda(self):
        gt = FlowField.zeros(6, 4)
        with pytest.raises(ValueError):
            loss_total(gt, gt, ClassPosterior.one_hot(AugLabel.FLIP), AugLabel.FLIP, lambda_c=-1.0)
