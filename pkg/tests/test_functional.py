import numpy as np
import pytest

from src.nn import functional as F
from src.utils.errors import DimensionError, ParameterError


def brute_force_conv(x, w, b, stride, left, right):
    """Nested-loop cross-correlation on a single (C_in, L) input."""
    xp = np.pad(x, [(0, 0), (left, right)])
    c_out, c_in, k = w.shape
    out_length = (xp.shape[1] - k) // stride + 1
    out = np.zeros((c_out, out_length))
    for o in range(c_out):
        for t in range(out_length):
            total = b[o]
            for c in range(c_in):
                for j in range(k):
                    total += w[o, c, j] * xp[c, t * stride + j]
            out[o, t] = total
    return out


def numeric_gradient(fn, x, h=1e-5):
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        plus = fn()
        flat[i] = saved - h
        minus = fn()
        flat[i] = saved
        g[i] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)) + np.max(np.abs(b)), 1e-12))


def test_valid_convolution_small_example():
    out = F.conv1d_forward(np.array([[1.0, 2.0, 3.0, 4.0]]), np.array([[[1.0, 0.0]]]), np.zeros(1))
    np.testing.assert_array_equal(out, [[1.0, 2.0, 3.0]])


def test_same_padding_puts_extra_element_right():
    assert F.padding_amounts(10, 4, 1, "same") == (1, 2)
    assert F.padding_amounts(10, 5, 1, "same") == (2, 2)
    assert F.padding_amounts(10, 4, 1, "valid") == (0, 0)
    assert F.conv1d_output_length(10, 4, 1, "same") == 10
    assert F.conv1d_output_length(10, 3, 2, "same") == 5


@pytest.mark.parametrize("padding", ["same", "valid"])
@pytest.mark.parametrize("stride", [1, 2, 3])
def test_convolution_matches_nested_loops(rng, padding, stride):
    for _ in range(5):
        c_in, c_out, k = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 6)
        length = int(rng.integers(k, 20))
        x = rng.normal(size=(c_in, length))
        w = rng.normal(size=(c_out, c_in, k))
        b = rng.normal(size=c_out)
        left, right = F.padding_amounts(length, k, stride, padding)
        np.testing.assert_allclose(
            F.conv1d_forward(x, w, b, stride, padding), brute_force_conv(x, w, b, stride, left, right), atol=1e-12
        )


def test_convolution_rejects_bad_shapes():
    with pytest.raises(DimensionError):
        F.conv1d_forward(np.zeros((2, 8)), np.zeros((1, 3, 2)), np.zeros(1))
    with pytest.raises(DimensionError):
        F.conv1d_forward(np.zeros((1, 3)), np.zeros((1, 1, 5)), np.zeros(1), padding="valid")
    with pytest.raises(ParameterError):
        F.conv1d_forward(np.zeros((1, 8)), np.zeros((1, 1, 2)), np.zeros(1), stride=0)


def test_convolution_gradients_match_finite_differences(rng):
    checked = 0
    for stride in (1, 2):
        for padding in ("same", "valid"):
            for _ in range(30):
                c_in, c_out, k = rng.integers(1, 3), rng.integers(1, 3), rng.integers(1, 4)
                length = int(rng.integers(k + 1, 9))
                x = rng.normal(size=(2, c_in, length))
                w = rng.normal(size=(c_out, c_in, k))
                b = rng.normal(size=c_out)
                out = F.conv1d_forward(x, w, b, stride, padding)
                g = rng.normal(size=out.shape)

                def loss():
                    return float(np.sum(F.conv1d_forward(x, w, b, stride, padding) * g))

                dx, dw, db = F.conv1d_backward(x, w, g, stride, padding)
                assert relative_error(dx, numeric_gradient(loss, x)) <= 1e-5
                assert relative_error(dw, numeric_gradient(loss, w)) <= 1e-5
                assert relative_error(db, numeric_gradient(loss, b)) <= 1e-5
                checked += 1
    assert checked >= 100


def test_maxpool_floors_length_and_breaks_ties_low():
    out, indices = F.maxpool1d_forward(np.array([[3.0, 3.0, 1.0, 5.0, 9.0]]), 2)
    np.testing.assert_array_equal(out, [[3.0, 5.0]])
    np.testing.assert_array_equal(indices, [[0, 3]])


def test_maxpool_backward_routes_to_argmax():
    x = np.array([[1.0, 4.0, 2.0, 0.0]])
    _, indices = F.maxpool1d_forward(x, 2)
    grad = F.maxpool1d_backward(indices, np.array([[10.0, 20.0]]), x.shape)
    np.testing.assert_array_equal(grad, [[0.0, 10.0, 20.0, 0.0]])


def test_maxpool_rejects_short_input():
    with pytest.raises(DimensionError):
        F.maxpool1d_forward(np.array([1.0]), 2)


def test_dense_gradients_match_finite_differences(rng):
    for _ in range(100):
        n_in, n_out = rng.integers(1, 6), rng.integers(1, 6)
        x = rng.normal(size=(3, n_in))
        w = rng.normal(size=(n_out, n_in))
        b = rng.normal(size=n_out)
        g = rng.normal(size=(3, n_out))

        def loss():
            return float(np.sum(F.dense_forward(x, w, b) * g))

        dx, dw, db = F.dense_backward(x, w, g)
        assert relative_error(dx, numeric_gradient(loss, x)) <= 1e-5
        assert relative_error(dw, numeric_gradient(loss, w)) <= 1e-5
        assert relative_error(db, numeric_gradient(loss, b)) <= 1e-5


@pytest.mark.parametrize("name", ["relu", "tanh", "sigmoid", "softmax", "linear"])
def test_activation_gradients_match_finite_differences(rng, name):
    for _ in range(20):
        x = rng.normal(size=(2, 3, 5))
        if name == "relu":
            x = np.where(np.abs(x) < 1e-3, 0.5, x)
        g = rng.normal(size=x.shape)

        def loss():
            return float(np.sum(F.activation_forward(x, name, axis=1) * g))

        y = F.activation_forward(x, name, axis=1)
        analytic = F.activation_backward(x, y, g, name, axis=1)
        assert relative_error(analytic, numeric_gradient(loss, x)) <= 1e-5


def test_softmax_normalizes_along_axis(rng):
    y = F.activation_forward(rng.normal(size=(2, 4, 3)), "softmax", axis=1)
    np.testing.assert_allclose(y.sum(axis=1), 1.0)


def test_softmax_is_shift_invariant(rng):
    x = rng.normal(size=(3, 6))
    y = F.activation_forward(x, "softmax", axis=1)
    for c in (-40.0, 1.5, 300.0):
        np.testing.assert_allclose(F.activation_forward(x + c, "softmax", axis=1), y, rtol=0, atol=1e-12)
    np.testing.assert_allclose(y.sum(axis=1), 1.0, rtol=0, atol=1e-9)


def test_unknown_activation():
    with pytest.raises(ParameterError):
        F.activation_forward(np.zeros(3), "gelu")


def test_dropout_is_identity_at_inference(rng):
    x = rng.normal(size=(4, 5))
    out, mask = F.dropout_forward(x, 0.5, rng, training=False)
    np.testing.assert_array_equal(out, x)
    assert mask is None


def test_dropout_scales_kept_units(rng):
    x = np.ones((1000,))
    out, mask = F.dropout_forward(x, 0.25, rng, training=True)
    kept = out[out > 0]
    np.testing.assert_allclose(kept, 1.0 / 0.75)
    np.testing.assert_array_equal(F.dropout_backward(mask, np.ones_like(x)), mask)


def test_dropout_preserves_the_expectation():
    x = np.array([0.5, -1.0, 2.0, 3.0, -0.25])
    trials, rate = 20_000, 0.3
    out, _ = F.dropout_forward(np.tile(x, (trials, 1)), rate, np.random.default_rng(17), training=True)
    ratio = out / x
    sigma = np.sqrt(rate / (1.0 - rate))
    assert abs(ratio.mean() - 1.0) <= 3.0 * sigma / np.sqrt(ratio.size)


def test_dropout_mask_is_reproducible_for_a_seed():
    x = np.ones((4, 32))
    first, mask_a = F.dropout_forward(x, 0.4, np.random.default_rng(3), training=True)
    second, mask_b = F.dropout_forward(x, 0.4, np.random.default_rng(3), training=True)
    np.testing.assert_array_equal(mask_a, mask_b)
    np.testing.assert_array_equal(first, second)


def test_dropout_rejects_rate_one():
    with pytest.raises(ParameterError):
        F.dropout_forward(np.zeros(3), 1.0)


def test_upsample_backward_sums_pairs():
    np.testing.assert_array_equal(F.upsample1d_forward(np.array([[1.0, 2.0]])), [[1.0, 1.0, 2.0, 2.0]])
    np.testing.assert_array_equal(F.upsample1d_backward(np.array([[1.0, 2.0, 3.0, 4.0]])), [[3.0, 7.0]])


def test_mse_loss_and_gradient(rng):
    prediction, target = rng.normal(size=(2, 1, 6)), rng.normal(size=(2, 1, 6))
    loss, grad = F.mse_loss(prediction, target)
    assert loss == pytest.approx(np.mean((prediction - target) ** 2))

    def fn():
        return F.mse_loss(prediction, target)[0]

    assert relative_error(grad, numeric_gradient(fn, prediction)) <= 1e-5
