"""Tests for depth/disparity conversion, virtual stereo and stereo ingestion"""
import numpy as np
import pytest

from depth2flow.depth_unify import (
    VirtualStereoConfig,
    depth_to_disparity,
    disparity_to_depth,
    disparity_to_flow,
    ingest_stereo,
    sample_scale_factor,
    synth_virtual_stereo,
)
from depth2flow.errors import (
    ConfigError,
    Depth2FlowError,
    DimensionMismatchError,
    EmptyWarpError,
)
from depth2flow.fields import ScalarField
from depth2flow.synthetic import constant_depth, stereo_scene, textured_image
from depth2flow.warp import photometric_error


def _scalar(values, valid=None):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if valid is None:
        valid = np.ones(values.shape, bool)
    return ScalarField(values, np.atleast_2d(valid))


class TestConversions:
    """Reciprocal depth/disparity maps and the horizontal flow"""

    def test_depth_to_disparity(self):
        assert depth_to_disparity(_scalar([2.0]), 1.0).values[0, 0] == 0.5
        assert depth_to_disparity(_scalar([25.0]), 50.0).values[0, 0] == 2.0

    def test_zero_depth_is_invalid(self):
        disp = depth_to_disparity(_scalar([2.0, 0.0, -1.0]), 1.0)
        assert disp.valid.tolist() == [[True, False, False]]

    def test_disparity_to_depth(self):
        assert disparity_to_depth(_scalar([0.5]), 1.0).values[0, 0] == 2.0
        assert not disparity_to_depth(_scalar([0.0]), 1.0).valid.any()

    def test_round_trip(self, plane_depth):
        back = disparity_to_depth(depth_to_disparity(plane_depth, 37.0), 37.0)
        np.testing.assert_allclose(back.values, plane_depth.values, atol=1e-6)

    @pytest.mark.parametrize("bf", [0.0, -3.0])
    def test_non_positive_bf(self, bf):
        with pytest.raises(Depth2FlowError, match="positive"):
            depth_to_disparity(_scalar([1.0]), bf)

    def test_disparity_to_flow_signs(self):
        disp = _scalar([3.0, 3.0], valid=[True, False])
        right = disparity_to_flow(disp, 1)
        left = disparity_to_flow(disp, -1)
        assert right.u[0, 0] == 3.0 and left.u[0, 0] == -3.0
        assert (right.v == 0).all()
        assert right.valid.tolist() == [[True, False]]

    def test_disparity_to_flow_bad_sign(self):
        with pytest.raises(Depth2FlowError):
            disparity_to_flow(_scalar([1.0]), 0)


class TestScaleFactor:
    """Sampling and clamping of the virtual baseline-focal product"""

    def test_fraction_range_never_clamps(self, plane_depth, rng):
        cfg = VirtualStereoConfig()
        for _ in range(50):
            s_c, clamped = sample_scale_factor(plane_depth, cfg, rng)
            assert not clamped
            assert 0.02 * 64 <= s_c / 4.0 <= 0.3 * 64 + 1e-9

    def test_clamp_keeps_disparity_within_limit(self, rng):
        """A 100 px request on a 16 px image is cut to 30% of the width"""
        depth = constant_depth(16, 16, 10.0)
        cfg = VirtualStereoConfig(s_c_range=(1000.0, 1000.0))
        s_c, clamped = sample_scale_factor(depth, cfg, rng)
        assert clamped
        assert s_c / 10.0 == pytest.approx(0.3 * 16)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"s_c_range": (0.0, 1.0)},
            {"s_c_range": (5.0, 1.0)},
            {"disparity_fraction_range": (0.3, 0.1)},
            {"max_disparity_fraction": 0.0},
            {"side_sign": 2},
            {"bf_stereo_constant": -1.0},
        ],
    )
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigError):
            VirtualStereoConfig(**kwargs)


class TestVirtualStereo:
    """synth_virtual_stereo on analytic scenes"""

    def _shift_scene(self, side_sign):
        image = textured_image(16, 16, seed=3)
        depth = constant_depth(16, 16, 10.0)
        cfg = VirtualStereoConfig(s_c_range=(40.0, 40.0), side_sign=side_sign)
        return image, synth_virtual_stereo(image, depth, cfg, np.random.default_rng(0))

    def test_constant_plane_shifts_right(self):
        """d = 4 and s_i = +1 move the whole image 4 px right"""
        image, pair = self._shift_scene(1)
        flow = pair.sample.flow
        np.testing.assert_allclose(pair.sample.target.data[:, 4:], image.data[:, :12], atol=1e-12)
        np.testing.assert_allclose(flow.u[flow.valid], 4.0)
        assert flow.valid[:, :12].all()
        assert not flow.valid[:, 12:].any()

    def test_constant_plane_shifts_left(self):
        image, pair = self._shift_scene(-1)
        np.testing.assert_allclose(pair.sample.target.data[:, :12], image.data[:, 4:], atol=1e-12)
        np.testing.assert_allclose(pair.sample.flow.u[pair.sample.flow.valid], -4.0)

    def test_flow_is_scaled_inverse_depth(self, virtual_pair, plane_depth):
        flow = virtual_pair.sample.flow
        s_c = virtual_pair.params["s_c"]
        s_i = virtual_pair.params["s_i"]
        expected = s_i * s_c / plane_depth.values
        np.testing.assert_allclose(flow.u[flow.valid], expected[flow.valid])
        assert flow.valid_fraction() > 0.8

    def test_meta_records_parameters(self, virtual_pair):
        meta = virtual_pair.sample.meta
        assert set(meta) >= {"s_c", "s_i", "clamped"}
        assert meta["s_i"] == -1
        assert virtual_pair.events == ()

    def test_photoconsistent(self, virtual_pair):
        sample = virtual_pair.sample
        assert photometric_error(sample.source, sample.target, sample.flow) < 0.03

    def test_same_seed_same_pair(self, texture_image, plane_depth):
        cfg = VirtualStereoConfig()
        a = synth_virtual_stereo(texture_image, plane_depth, cfg, np.random.default_rng(9))
        b = synth_virtual_stereo(texture_image, plane_depth, cfg, np.random.default_rng(9))
        assert a.params == b.params
        assert np.array_equal(a.sample.target.data, b.sample.target.data)
        assert np.array_equal(a.sample.flow.valid, b.sample.flow.valid)

    def test_clamp_event(self):
        image = textured_image(16, 16)
        depth = constant_depth(16, 16, 10.0)
        cfg = VirtualStereoConfig(s_c_range=(1000.0, 1000.0), side_sign=1)
        pair = synth_virtual_stereo(image, depth, cfg, np.random.default_rng(0))
        assert pair.events == ("s_c clamped",)
        assert pair.params["clamped"] is True

    def test_invalid_depth_is_empty_warp(self, texture_image):
        depth = ScalarField(np.ones((48, 64)), np.zeros((48, 64), bool))
        with pytest.raises(EmptyWarpError, match="empty warp"):
            synth_virtual_stereo(texture_image, depth, VirtualStereoConfig(), np.random.default_rng(0))

    def test_dimension_mismatch(self, texture_image):
        with pytest.raises(DimensionMismatchError):
            synth_virtual_stereo(
                texture_image, constant_depth(10, 10, 1.0), VirtualStereoConfig(), np.random.default_rng(0)
            )


class TestIngestStereo:
    """Real stereo pairs become horizontal flow tuples"""

    def test_constant_disparity(self):
        """d = 2 gives F = (-2, 0) and the pair is photoconsistent under it"""
        left, right, disp = stereo_scene(32, 24, seed=4, d_top=2.0, d_bottom=2.0)
        pair = ingest_stereo(left, right, disp, bf=100.0)
        flow = pair.sample.flow
        np.testing.assert_allclose(flow.u[flow.valid], -2.0)
        np.testing.assert_allclose(flow.v, 0.0)
        assert photometric_error(left, right, flow) < 0.02

    def test_depth_from_disparity(self):
        left, right, _ = stereo_scene(16, 16, seed=0, d_top=4.0, d_bottom=4.0)
        pair = ingest_stereo(left, right, _scalar(np.full((16, 16), 4.0)), bf=100.0)
        np.testing.assert_allclose(pair.depth_source.values, 25.0)
        assert pair.sample.meta == {"bf": 100.0, "sign": -1}

    def test_row_varying_disparity(self, stereo_inputs):
        left, right, disp = stereo_inputs
        pair = ingest_stereo(left, right, disp, bf=100.0)
        assert pair.sample.flow.valid_fraction() > 0.8
        assert photometric_error(left, right, pair.sample.flow) < 0.02

    def test_dimension_mismatch(self, stereo_inputs):
        left, _, disp = stereo_inputs
        with pytest.raises(DimensionMismatchError):
            ingest_stereo(left, textured_image(10, 10), disp, bf=100.0)

    def test_zero_disparity_is_degenerate(self, stereo_inputs):
        left, right, _ = stereo_inputs
        with pytest.raises(Depth2FlowError, match="degenerate disparity"):
            ingest_stereo(left, right, _scalar(np.zeros((48, 64))), bf=100.0)
