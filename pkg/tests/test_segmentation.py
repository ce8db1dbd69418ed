import numpy as np
import pytest

from src.xai.segmentation import (
    SegmentationScheme, apply_masks, evaluate_masks, interpolation_background, perturbation_samples,
)
from src.utils.errors import DimensionError, ParameterError
from tests.toys import tanh_encoder


@pytest.mark.parametrize("length,segments", [(64, 8), (100, 7), (10, 10), (5, 1)])
def test_equal_segments_partition_the_series(length, segments):
    scheme = SegmentationScheme.equal(length, segments).validate()
    assert len(scheme) == segments
    assert scheme.length == length
    assert scheme.sizes.sum() == length
    assert scheme.sizes.max() - scheme.sizes.min() <= 1


def test_segment_count_bounds():
    with pytest.raises(ParameterError):
        SegmentationScheme.equal(10, 0)
    with pytest.raises(ParameterError):
        SegmentationScheme.equal(10, 11)
    with pytest.raises(ParameterError):
        SegmentationScheme(((0, 3), (4, 6))).validate()


def test_expand_and_segment_of():
    scheme = SegmentationScheme.equal(6, 3)
    np.testing.assert_array_equal(scheme.expand([1.0, 2.0, 3.0]), [1, 1, 2, 2, 3, 3])
    assert scheme.expand(np.ones((2, 3))).shape == (2, 6)
    assert [scheme.segment_of(i) for i in range(6)] == [0, 0, 1, 1, 2, 2]
    with pytest.raises(DimensionError):
        scheme.expand([1.0, 2.0])


def test_background_is_a_line_per_segment():
    x = np.array([0.0, 5.0, 2.0, 1.0, 9.0, 3.0])
    background = interpolation_background(x, SegmentationScheme.equal(6, 2))
    np.testing.assert_allclose(background, [0.0, 1.0, 2.0, 1.0, 2.0, 3.0])
    with pytest.raises(DimensionError):
        interpolation_background(x[:5], SegmentationScheme.equal(6, 2))


def test_apply_masks_keeps_selected_segments():
    x = np.arange(6, dtype=float)
    background = np.full(6, -1.0)
    scheme = SegmentationScheme.equal(6, 3)
    out = apply_masks(x, np.array([[1, 0, 1], [0, 0, 0], [1, 1, 1]]), scheme, background)
    np.testing.assert_array_equal(out[0], [0, 1, -1, -1, 4, 5])
    np.testing.assert_array_equal(out[1], background)
    np.testing.assert_array_equal(out[2], x)
    with pytest.raises(DimensionError):
        apply_masks(x, np.ones((2, 4)), scheme, background)


def test_perturbation_samples_pair_masks_with_outputs(rng):
    model = tanh_encoder(rng, length=16)
    x = rng.normal(size=16)
    scheme = SegmentationScheme.equal(16, 4)
    background = interpolation_background(x, scheme)
    masks = np.array([[1, 1, 1, 1], [0, 1, 0, 1], [0, 0, 0, 0]])
    samples = perturbation_samples(model, x, masks, scheme, background)
    assert len(samples) == 3
    np.testing.assert_array_equal(samples[0].series, x)
    np.testing.assert_array_equal(samples[2].series, background)
    outputs = evaluate_masks(model, x, masks, scheme, background)
    for sample, mask, output in zip(samples, masks, outputs):
        assert len(sample.mask) == len(scheme)
        np.testing.assert_array_equal(sample.mask, mask)
        np.testing.assert_allclose(sample.output, output)
    with pytest.raises(DimensionError):
        perturbation_samples(model, x, np.ones((2, 3)), scheme, background)
