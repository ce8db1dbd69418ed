import numpy as np
import pytest

from src.utils.errors import ParameterError
from src.xai.kernel_shap import (
    KernelShapConfig, all_coalitions, constrained_wls, exact_shapley, kernel_weight, kshap_explain,
    sample_coalitions, segment_attributions,
)
from src.xai.segmentation import SegmentationScheme, interpolation_background
from tests.test_lime import linear_segment_effects
from tests.toys import conv_encoder, linear_encoder, tanh_encoder


def game_values(fn, m):
    masks = all_coalitions(m)
    return np.array([[fn(mask)] for mask in masks], dtype=float)


def test_coalitions_are_indexed_by_their_bits():
    masks = all_coalitions(3)
    assert masks.shape == (8, 3)
    np.testing.assert_array_equal(masks[5], [1, 0, 1])
    np.testing.assert_array_equal(masks[-1], [1, 1, 1])


def test_exact_shapley_axioms_on_a_synthetic_game():
    m = 8
    values = game_values(lambda s: (s[0] + s[1]) ** 2 + 3.0 * s[2] * s[3] - s[4] + 0.5 * s[5] * s[0], m)
    phi = exact_shapley(values, m)[:, 0]
    assert phi.sum() == pytest.approx(values[-1, 0] - values[0, 0], abs=1e-9)
    assert phi[2] == pytest.approx(phi[3], abs=1e-9)
    assert phi[4] == pytest.approx(-1.0, abs=1e-9)
    assert phi[6] == pytest.approx(0.0, abs=1e-9)
    assert phi[7] == pytest.approx(0.0, abs=1e-9)


def test_exact_mode_satisfies_efficiency_and_null_player(rng):
    model = conv_encoder(rng, length=32, normalization="none")
    x = rng.normal(size=32)
    x[8:12] = np.linspace(x[8], x[11], 4)
    config = KernelShapConfig(segments=8, exact=True)
    phi = segment_attributions(model, x, config)
    scheme = SegmentationScheme.equal(32, 8)
    v_full = model.encode(x)
    v_empty = model.encode(interpolation_background(x, scheme))
    np.testing.assert_allclose(phi.sum(axis=0), v_full - v_empty, atol=1e-9)
    np.testing.assert_allclose(phi[2], 0.0, atol=1e-9)


def test_enumerated_regression_equals_exact_values(rng):
    model = conv_encoder(rng, length=32)
    x = rng.normal(size=32)
    exact = segment_attributions(model, x, KernelShapConfig(segments=8, exact=True))
    sampled = segment_attributions(model, x, KernelShapConfig(segments=8, samples=2048))
    np.testing.assert_allclose(sampled, exact, atol=5e-2)
    np.testing.assert_allclose(sampled.sum(axis=0), exact.sum(axis=0), atol=1e-9)


def test_sampled_regression_is_exact_for_linear_models(rng):
    weights = rng.normal(size=(2, 40))
    x = rng.normal(size=40)
    phi = segment_attributions(linear_encoder(weights), x, KernelShapConfig(segments=10, samples=600, seed=2))
    np.testing.assert_allclose(phi.T, linear_segment_effects(weights, x, 10), atol=1e-8)


def test_sampled_regression_approximates_a_mild_non_linearity(rng):
    model = tanh_encoder(rng, length=20)
    x = 0.1 * rng.normal(size=20)
    exact = segment_attributions(model, x, KernelShapConfig(segments=10, exact=True))
    sampled = segment_attributions(model, x, KernelShapConfig(segments=10, samples=800, seed=1))
    assert np.max(np.abs(sampled - exact)) <= 5e-2 * np.max(np.abs(exact)) + 1e-9


def test_constrained_wls_keeps_efficiency(rng):
    masks = rng.integers(0, 2, size=(30, 5))
    values = rng.normal(size=(30, 2))
    phi = constrained_wls(masks, values, np.ones(30), np.array([0.5, 0.0]), np.array([2.0, -1.0]))
    np.testing.assert_allclose(phi.sum(axis=0), [1.5, -1.0])


def test_sampled_coalitions_come_in_complement_pairs(rng):
    masks, weights = sample_coalitions(12, 100, rng)
    assert masks.shape == (100, 12)
    np.testing.assert_array_equal(masks[1::2], 1 - masks[0::2])
    assert np.all((masks.sum(axis=1) > 0) & (masks.sum(axis=1) < 12))
    np.testing.assert_array_equal(weights, 1.0)
    enumerated, kernel = sample_coalitions(4, 14, rng)
    assert enumerated.shape == (14, 4)
    np.testing.assert_allclose(kernel, kernel_weight(4, enumerated.sum(axis=1)))


def test_combined_map_and_metadata(rng):
    model = conv_encoder(rng)
    x = rng.normal(size=32)
    config = KernelShapConfig(segments=8, samples=64, seed=4)
    explanation = kshap_explain(model, x, "combined", config)
    assert explanation.method == "shap"
    assert explanation.metadata["coalitions"] == 64
    assert not explanation.metadata["enumerated"]
    assert np.all(explanation.values >= 0)


def test_config_validation():
    with pytest.raises(ParameterError):
        KernelShapConfig(segments=13, exact=True).validate()
    with pytest.raises(ParameterError):
        KernelShapConfig(segments=1).validate()
    with pytest.raises(ParameterError):
        KernelShapConfig(samples=1).validate()
