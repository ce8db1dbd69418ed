import numpy as np
import pytest

from src.models.autoencoder import AEModel
from src.nn.layers import Activation, Conv1D, Dense, Flatten
from src.nn.network import Network
from src.utils.errors import ParameterError, StateError
from src.xai.gradcam import _cam, feature_map_gradients, feature_map_index, gradcam_explain, gradcam_feature_maps
from tests.test_functional import numeric_gradient, relative_error
from tests.toys import conv_encoder, linear_encoder


def summing_encoder(length=12):
    """Identity convolution, ReLU, then the sum of all feature values."""
    network = Network([
        Conv1D(np.ones((1, 1, 1)), np.zeros(1)),
        Activation("relu"),
        Flatten(),
        Dense(np.ones((1, length)), np.zeros(1)),
    ])
    return AEModel(network, None, length, 1, normalization="none")


def test_cam_of_summing_encoder_is_the_rectified_input(rng):
    model = summing_encoder()
    x = rng.normal(size=12)
    explanation = gradcam_explain(model, x, 0)
    np.testing.assert_allclose(explanation.values, np.maximum(x, 0.0))
    assert explanation.method == "gradcam"
    assert explanation.metadata["feature_layer"] == 1


def smooth_conv_encoder(rng, length=16, latent_dim=2):
    """Conv1D -> tanh -> Flatten -> Dense -> tanh -> Dense, differentiable everywhere."""
    network = Network([
        Conv1D(rng.normal(0.0, 0.5, size=(3, 1, 5)), rng.normal(0.0, 0.1, size=3)),
        Activation("tanh"),
        Flatten(),
        Dense(rng.normal(0.0, 0.3, size=(6, 3 * length)), rng.normal(0.0, 0.1, size=6)),
        Activation("tanh"),
        Dense(rng.normal(0.0, 0.5, size=(latent_dim, 6)), np.zeros(latent_dim)),
    ])
    return AEModel(network, None, length, latent_dim, normalization="none")


def test_feature_map_gradients_match_finite_differences(rng):
    model = smooth_conv_encoder(rng)
    x = rng.normal(size=16)
    index = feature_map_index(model)
    assert index == 1
    for latent in range(model.latent_dim):
        maps, grads = feature_map_gradients(model, x, latent)
        perturbed = maps.copy()
        numeric = numeric_gradient(
            lambda: float(model.encoder.predict(perturbed[None], start=index + 1)[0, latent]), perturbed
        )
        assert relative_error(grads, numeric) < 1e-6


def test_cams_are_non_negative_and_combine(rng):
    model = conv_encoder(rng, length=32)
    x = rng.normal(size=32)
    cams, _ = gradcam_feature_maps(model, x)
    assert cams.shape == (3, 32)
    assert np.all(cams >= 0)
    combined = gradcam_explain(model, x, "combined")
    np.testing.assert_allclose(combined.values, cams.mean(axis=0))


def test_trained_model_cam_has_input_length(tiny_model, small_corpus):
    explanation = gradcam_explain(tiny_model, small_corpus[0], "latent(1)")
    assert len(explanation) == 64
    assert explanation.series_id == small_corpus[0].series_id
    assert np.all(explanation.values >= 0)


def test_cam_interpolation():
    maps = np.array([[0.0, 1.0, 2.0, 3.0]])
    np.testing.assert_allclose(_cam(maps, np.ones((1, 4)), 7), [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    np.testing.assert_allclose(_cam(np.array([[2.0]]), np.ones((1, 1)), 5), np.full(5, 2.0))
    np.testing.assert_allclose(_cam(maps, -np.ones((1, 4)), 4), np.zeros(4))


def test_gradcam_needs_a_convolution():
    with pytest.raises(StateError):
        gradcam_explain(linear_encoder(np.ones((1, 8))), np.zeros(8), 0)


def test_target_out_of_range(rng):
    with pytest.raises(ParameterError):
        gradcam_explain(conv_encoder(rng), np.zeros(32), 3)


def test_zero_gradient_gives_an_empty_map(rng):
    model = summing_encoder()
    model.encoder.layers[-1].weights[:] = 0.0
    np.testing.assert_array_equal(gradcam_explain(model, rng.normal(size=12), 0).values, 0.0)
