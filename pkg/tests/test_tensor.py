import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orn import tensor as T


def _brute_conv(x, k, padding):
    # direct nested-loop cross-correlation, independent of im2col
    c_in, h, w = x.shape
    c_out, _, kk, _ = k.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    ho, wo = h + 2 * padding - kk + 1, w + 2 * padding - kk + 1
    out = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for r in range(ho):
            for c in range(wo):
                out[o, r, c] = (xp[:, r:r + kk, c:c + kk] * k[o]).sum()
    return out


class TestConv2d:
    def test_zero_input(self):
        out = T.conv2d(np.zeros((1, 3, 3)), np.random.default_rng(0).normal(size=(2, 1, 3, 3)), padding=1)
        assert np.all(out == 0)

    def test_identity_kernel(self):
        x = np.random.default_rng(1).normal(size=(1, 5, 4))
        np.testing.assert_array_equal(T.conv2d(x, np.ones((1, 1, 1, 1))), x)

    def test_hand_sum(self):
        x = np.arange(1, 10, dtype=float).reshape(1, 3, 3)
        out = T.conv2d(x, np.ones((1, 1, 3, 3)))
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == 45

    def test_no_kernel_flip(self):
        x = np.zeros((1, 3, 3))
        x[0, 0, 0] = 1
        k = np.arange(9, dtype=float).reshape(1, 1, 3, 3)
        # correlation reads k[0, 0] at the top-left input pixel
        assert T.conv2d(x, k)[0, 0, 0] == 0

    @pytest.mark.parametrize("padding", [0, 1, 2])
    def test_matches_brute_force(self, padding):
        rng = np.random.default_rng(padding)
        x, k = rng.normal(size=(3, 6, 5)), rng.normal(size=(4, 3, 3, 3))
        np.testing.assert_allclose(T.conv2d(x, k, padding), _brute_conv(x, k, padding), atol=1e-12)

    def test_batched(self):
        rng = np.random.default_rng(3)
        x, k = rng.normal(size=(2, 3, 6, 6)), rng.normal(size=(4, 3, 3, 3))
        out = T.conv2d(x, k, 1)
        for b in range(2):
            np.testing.assert_allclose(out[b], T.conv2d(x[b], k, 1))

    def test_channel_mismatch_names_axis(self):
        with pytest.raises(T.ShapeError, match="axis 1"):
            T.conv2d(np.zeros((2, 4, 4)), np.zeros((1, 3, 3, 3)))

    def test_even_kernel_rejected(self):
        with pytest.raises(T.ShapeError, match="odd"):
            T.conv2d(np.zeros((1, 4, 4)), np.zeros((1, 1, 2, 2)))

    @settings(max_examples=25, deadline=None)
    @given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 10_000))
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        x, y, k = rng.normal(size=(2, 5, 5)), rng.normal(size=(2, 5, 5)), rng.normal(size=(3, 2, 3, 3))
        lhs = T.conv2d(a * x + b * y, k, 1)
        rhs = a * T.conv2d(x, k, 1) + b * T.conv2d(y, k, 1)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-6, atol=1e-6 * (np.abs(rhs).max() + 1))

    @pytest.mark.parametrize("padding", [0, 1])
    def test_gradients(self, padding):
        rng = np.random.default_rng(7)
        x, k = rng.normal(size=(2, 2, 5, 5)), rng.normal(size=(3, 2, 3, 3))
        w = rng.normal(size=T.conv2d(x, k, padding).shape)
        f = lambda: float((T.conv2d(x, k, padding) * w).sum())  # noqa: E731
        gx, gk = T.conv2d_backward(x, k, w, padding)
        assert T.relative_error(gx, T.numerical_gradient(f, x)) < 1e-5
        assert T.relative_error(gk, T.numerical_gradient(f, k)) < 1e-5


class TestMaxPool:
    def test_constant(self):
        out, _ = T.maxpool2(np.full((2, 4, 6), 3.0))
        assert out.shape == (2, 2, 3) and np.all(out == 3)

    def test_single_window(self):
        out, idx = T.maxpool2(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
        assert out[0, 0, 0] == 4 and idx[0, 0, 0] == 3

    def test_odd_rejected(self):
        with pytest.raises(T.ShapeError, match="even"):
            T.maxpool2(np.zeros((1, 3, 4)))

    def test_backward_routes_to_argmax(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 3, 4, 4))
        out, idx = T.maxpool2(x)
        g = rng.normal(size=out.shape)
        gx = T.maxpool2_backward(g, idx)
        assert np.count_nonzero(gx) == out.size
        np.testing.assert_array_equal(gx.reshape(-1)[np.flatnonzero(gx)].size, g.size)
        f = lambda: float((T.maxpool2(x)[0] * g).sum())  # noqa: E731
        assert T.relative_error(gx, T.numerical_gradient(f, x)) < 1e-5


class TestPointwise:
    def test_relu_zero_and_identity(self):
        assert np.all(T.relu(np.zeros(5)) == 0)
        x = np.abs(np.random.default_rng(0).normal(size=5)) + 0.1
        np.testing.assert_array_equal(T.relu(x), x)

    def test_relu_gradient_away_from_kink(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 5))
        x[np.abs(x) < 1e-3] = 0.5
        w = rng.normal(size=x.shape)
        f = lambda: float((T.relu(x) * w).sum())  # noqa: E731
        assert T.relative_error(T.relu_backward(w, x), T.numerical_gradient(f, x)) < 1e-5

    def test_dropout_eval_identity(self):
        x = np.random.default_rng(0).normal(size=(3, 7))
        y, mask = T.dropout(x, 0.5, training=False)
        assert y is x and mask is None

    def test_dropout_zero_rate(self):
        x = np.ones((2, 3))
        y, _ = T.dropout(x, 0.0, training=True, rng=np.random.default_rng(0))
        np.testing.assert_array_equal(y, x)

    def test_dropout_seeded_and_scaled(self):
        x = np.ones((200, 50))
        a, ma = T.dropout(x, 0.5, True, np.random.default_rng(4))
        b, mb = T.dropout(x, 0.5, True, np.random.default_rng(4))
        np.testing.assert_array_equal(a, b)
        assert set(np.unique(a)) <= {0.0, 2.0}
        assert abs(a.mean() - 1) < 0.05

    def test_dropout_gradient(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(3, 4))
        _, mask = T.dropout(x, 0.3, True, np.random.default_rng(9))
        w = rng.normal(size=x.shape)
        f = lambda: float((x * mask * w).sum())  # noqa: E731
        assert T.relative_error(T.dropout_backward(w, mask), T.numerical_gradient(f, x)) < 1e-5

    def test_linear_zero_and_identity(self):
        x = np.random.default_rng(0).normal(size=(3, 4))
        assert np.all(T.linear(x, np.zeros((2, 4)), np.zeros(2)) == 0)
        np.testing.assert_array_equal(T.linear(x, np.eye(4)), x)

    def test_linear_gradient(self):
        rng = np.random.default_rng(3)
        x, w, b = rng.normal(size=(3, 4)), rng.normal(size=(5, 4)), rng.normal(size=5)
        up = rng.normal(size=(3, 5))
        f = lambda: float((T.linear(x, w, b) * up).sum())  # noqa: E731
        gx, gw, gb = T.linear_backward(x, w, up)
        for g, p in ((gx, x), (gw, w), (gb, b)):
            assert T.relative_error(g, T.numerical_gradient(f, p)) < 1e-5

    def test_linear_shape_error(self):
        with pytest.raises(T.ShapeError, match="axis 1"):
            T.linear(np.zeros((2, 3)), np.zeros((4, 5)))

    def test_cross_entropy_uniform_logits(self):
        loss, _ = T.softmax_cross_entropy(np.zeros((4, 10)), np.arange(4))
        assert loss == pytest.approx(np.log(10))

    def test_cross_entropy_gradient(self):
        rng = np.random.default_rng(5)
        z, y = rng.normal(size=(6, 10)), rng.integers(0, 10, 6)
        _, g = T.softmax_cross_entropy(z, y)
        f = lambda: T.softmax_cross_entropy(z, y)[0]  # noqa: E731
        assert T.relative_error(g, T.numerical_gradient(f, z)) < 1e-5

    def test_global_pool_gradient(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(2, 3, 4, 4))
        w = rng.normal(size=(2, 3))
        f = lambda: float((T.global_avg_pool(x) * w).sum())  # noqa: E731
        assert T.relative_error(T.global_avg_pool_backward(w, (4, 4)), T.numerical_gradient(f, x)) < 1e-5


class TestAdadelta:
    def test_zero_gradient(self):
        p = np.array([1.0, -2.0])
        st_ = T.AdadeltaState(np.array([0.5, 0.2]), np.array([0.1, 0.3]))
        T.adadelta_step(p, np.zeros(2), st_)
        np.testing.assert_array_equal(p, [1.0, -2.0])
        np.testing.assert_allclose(st_.sq_grad, [0.45, 0.18])
        np.testing.assert_allclose(st_.sq_update, [0.09, 0.27])

    def test_first_step_magnitude(self):
        g = np.array([0.3, -2.0, 1e-3])
        p = np.zeros(3)
        T.adadelta_step(p, g, T.AdadeltaState.zeros_like(p))
        rho, eps = 0.9, 1e-6
        expected = -np.sqrt(eps) / np.sqrt(eps + (1 - rho) * g ** 2) * g
        np.testing.assert_allclose(p, expected, rtol=1e-12)

    def test_constant_gradient_monotone(self):
        p = np.array([0.0, 0.0])
        g = np.array([1.5, -0.2])
        st_ = T.AdadeltaState.zeros_like(p)
        history = []
        for _ in range(100):
            T.adadelta_step(p, g, st_)
            history.append(p.copy())
        h = np.array(history)
        assert np.all(np.diff(h[:, 0]) < 0) and np.all(np.diff(h[:, 1]) > 0)
        assert np.all(st_.sq_grad >= 0) and np.all(st_.sq_update >= 0)

    def test_non_finite_aborts(self):
        p = np.zeros(3)
        with pytest.raises(T.NonFiniteError, match="non-finite"):
            T.adadelta_step(p, np.array([0.0, np.nan, 1.0]), T.AdadeltaState.zeros_like(p))

    def test_shape_mismatch(self):
        with pytest.raises(T.ShapeError):
            T.adadelta_step(np.zeros(3), np.zeros(4), T.AdadeltaState.zeros_like(np.zeros(3)))


def test_numerical_gradient_requires_float64():
    with pytest.raises(TypeError):
        T.numerical_gradient(lambda: 0.0, np.zeros(3, dtype=np.float32))
