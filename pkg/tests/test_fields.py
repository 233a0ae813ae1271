"""Tests for field types and the sampling primitives"""
import numpy as np
import pytest

from depth2flow.errors import Depth2FlowError, DimensionMismatchError
from depth2flow.fields import (
    AugLabel,
    FlowField,
    Image,
    PixelGrid,
    SampleTuple,
    ScalarField,
    backward_sample,
    bilinear_sample,
    compose_flows,
)


class TestTypes:
    """Construction invariants of the field types"""

    def test_grid_coords_are_pixel_centers(self):
        """coords() gives x along columns and y along rows"""
        xs, ys = PixelGrid(4, 3).coords()
        assert xs.shape == (3, 4)
        assert xs[2, 3] == 3.0
        assert ys[2, 3] == 2.0

    def test_empty_grid_rejected(self):
        """A grid needs at least one pixel"""
        with pytest.raises(Depth2FlowError):
            PixelGrid(0, 5)

    def test_gray_image_is_promoted(self):
        """2-D input becomes a single-channel image"""
        image = Image(np.full((3, 5), 0.5))
        assert (image.height, image.width, image.channels) == (3, 5, 1)

    def test_image_out_of_range_rejected(self):
        """Intensities outside [0, 1] are an error"""
        with pytest.raises(Depth2FlowError, match="must lie in"):
            Image(np.full((2, 2, 3), 1.5))

    def test_image_is_read_only(self):
        """Image data cannot be modified in place"""
        image = Image(np.zeros((2, 2, 3)))
        with pytest.raises(ValueError):
            image.data[0, 0, 0] = 1.0

    def test_scalar_field_invalid_pixels_store_zero(self):
        """Invalid entries always read as 0"""
        field = ScalarField(np.array([[5.0, 7.0]]), np.array([[True, False]]))
        assert field.values.tolist() == [[5.0, 0.0]]

    def test_scalar_field_positive_masking(self):
        """from_array(positive=True) drops zero, negative and non-finite depths"""
        field = ScalarField.from_array(np.array([[1.0, 0.0, -2.0, np.nan]]), positive=True)
        assert field.valid.tolist() == [[True, False, False, False]]

    def test_flow_non_finite_becomes_invalid(self):
        """NaN components clear validity"""
        flow = FlowField(np.array([[np.nan, 1.0]]), np.zeros((1, 2)), np.ones((1, 2), bool))
        assert flow.valid.tolist() == [[False, True]]
        assert flow.u[0, 0] == 0.0

    def test_flow_sanity_bound(self):
        """Displacements beyond twice the image size fail the sanity check"""
        FlowField.constant(10, 10, 19.0, 0.0).check_sanity()
        with pytest.raises(Depth2FlowError, match="sanity"):
            FlowField.constant(10, 10, 21.0, 0.0).check_sanity()

    def test_sample_tuple_dimension_check(self):
        """Source, target and flow must share one grid"""
        image = Image(np.zeros((4, 4, 3)))
        with pytest.raises(DimensionMismatchError, match="incompatible fields"):
            SampleTuple(image, image, FlowField.zeros(5, 4))

    def test_sample_tuple_mask_is_flow_validity(self):
        image = Image(np.zeros((2, 3, 3)))
        flow = FlowField(np.zeros((2, 3)), np.zeros((2, 3)), np.eye(2, 3, dtype=bool))
        sample = SampleTuple(image, image, flow)
        assert np.array_equal(sample.mask, flow.valid)
        assert sample.label is AugLabel.NONE

    def test_label_order(self):
        """Logit order is flip, rotate, shear, none"""
        assert [label.index for label in AugLabel] == [0, 1, 2, 3]
        assert AugLabel("shear") is AugLabel.SHEAR


class TestBilinearSample:
    """Bilinear lookup edge cases"""

    def test_exact_at_pixel_centers_including_last_row_and_column(self):
        """Integer coordinates return stored values, even on the far border"""
        values = np.arange(12, dtype=float).reshape(3, 4)
        field = ScalarField(values, np.ones((3, 4), bool))
        out, ok = bilinear_sample(field, np.array([3.0, 0.0]), np.array([2.0, 0.0]))
        assert ok.all()
        assert out[:, 0].tolist() == [11.0, 0.0]

    def test_linear_field_interpolates_exactly(self):
        """A field linear in x and y is reproduced at fractional points"""
        ys, xs = np.mgrid[0:5, 0:6].astype(float)
        field = ScalarField(2 * xs + 3 * ys, np.ones((5, 6), bool))
        out, ok = bilinear_sample(field, np.array([1.25, 4.5]), np.array([2.75, 0.5]))
        assert ok.all()
        np.testing.assert_allclose(out[:, 0], [2 * 1.25 + 3 * 2.75, 2 * 4.5 + 3 * 0.5])

    def test_out_of_bounds_is_invalid(self):
        field = ScalarField(np.ones((3, 3)), np.ones((3, 3), bool))
        out, ok = bilinear_sample(field, np.array([-0.5, 2.5, 1e12]), np.array([1.0, 1.0, 1.0]))
        assert not ok.any()
        assert (out == 0).all()

    def test_invalid_neighbor_invalidates(self):
        """Any contributing invalid neighbor makes the sample invalid"""
        valid = np.ones((3, 3), bool)
        valid[1, 2] = False
        field = ScalarField(np.ones((3, 3)), valid)
        _, ok = bilinear_sample(field, np.array([1.5, 1.0]), np.array([1.0, 0.0]))
        assert ok.tolist() == [False, True]

    def test_scalar_coordinates(self):
        image = Image(np.full((2, 2, 3), 0.25))
        out, ok = bilinear_sample(image, 0.5, 0.5)
        assert bool(ok)
        np.testing.assert_allclose(out, [0.25, 0.25, 0.25])


class TestComposition:
    """backward_sample and compose_flows"""

    def test_constant_flows_add(self):
        """(2, 0) then (1, 1) is (3, 1) wherever the first lands inside"""
        composed = compose_flows(FlowField.constant(8, 6, 2.0, 0.0), FlowField.constant(8, 6, 1.0, 1.0))
        np.testing.assert_allclose(composed.u[composed.valid], 3.0)
        np.testing.assert_allclose(composed.v[composed.valid], 1.0)
        # the last two columns land outside
        assert composed.valid[:, :6].all()
        assert not composed.valid[:, 6:].any()

    def test_compose_with_zero_is_identity(self):
        rng = np.random.default_rng(0)
        flow = FlowField.from_stack(rng.uniform(-1, 1, size=(6, 7, 2)))
        composed = compose_flows(flow, FlowField.zeros(7, 6))
        np.testing.assert_allclose(composed.stack()[composed.valid], flow.stack()[composed.valid])

    def test_backward_sample_looks_up_at_landing_point(self):
        ys, xs = np.mgrid[0:4, 0:5].astype(float)
        beta = FlowField(xs, ys, np.ones((4, 5), bool))
        alpha = FlowField.constant(5, 4, 1.0, 0.0)
        sampled = backward_sample(alpha, beta)
        np.testing.assert_allclose(sampled.u[sampled.valid], (xs + 1)[sampled.valid])

    def test_mismatched_grids_rejected(self):
        with pytest.raises(DimensionMismatchError):
            compose_flows(FlowField.zeros(4, 4), FlowField.zeros(5, 4))
