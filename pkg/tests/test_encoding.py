import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from orn.encoding import (
    argmax_margin,
    circular_shift,
    dominant_orientation,
    oralign,
    oralign_backward,
    orpooling,
    orpooling_backward,
)
from orn.tensor import numerical_gradient, relative_error


def _unique_max(rng, shape):
    while True:
        v = rng.normal(size=shape)
        srt = np.sort(v, axis=-1)
        if np.all(srt[..., -1] > srt[..., -2]):
            return v


class TestCircularShift:
    def test_definition(self):
        v = np.array([10, 11, 12, 13, 14])
        np.testing.assert_array_equal(circular_shift(v, 2), [13, 14, 10, 11, 12])
        np.testing.assert_array_equal(circular_shift(v, 2), np.roll(v, 2))

    def test_per_row_shift(self):
        v = np.arange(12).reshape(3, 4)
        out = circular_shift(v, np.array([0, 1, 3]))
        for r, s in enumerate([0, 1, 3]):
            np.testing.assert_array_equal(out[r], np.roll(v[r], s))


class TestORAlign:
    def test_one_hot(self):
        e3 = np.eye(8)[3]
        aligned, d = oralign(e3)
        np.testing.assert_array_equal(aligned, np.eye(8)[0])
        assert d == 3

    def test_constant_tie(self):
        v = np.full(8, 2.5)
        aligned, d = oralign(v)
        np.testing.assert_array_equal(aligned, v)
        assert d == 0

    def test_ties_go_to_smallest_index(self):
        assert dominant_orientation(np.array([0.0, 5.0, 1.0, 5.0])) == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            oralign(np.zeros((3, 0)))

    def test_alignment_formula(self):
        v = np.random.default_rng(0).normal(size=(4, 6, 8))
        aligned, d = oralign(v)
        for idx in np.ndindex(v.shape[:-1]):
            for n in range(8):
                assert aligned[idx][n] == v[idx][(n + d[idx]) % 8]
        assert np.all(aligned.argmax(axis=-1) == 0)

    @pytest.mark.parametrize("n", [4, 8, 16])
    def test_shift_invariance_exhaustive(self, n):
        v = _unique_max(np.random.default_rng(n), (50, n))
        ref, _ = oralign(v)
        for s in range(n):
            out, _ = oralign(np.roll(v, s, axis=-1))
            np.testing.assert_array_equal(out, ref)

    @settings(max_examples=100, deadline=None)
    @given(v=arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e6, 1e6)), s=st.integers(-30, 30))
    def test_shift_invariance_property(self, v, s):
        if np.count_nonzero(v == v.max()) > 1:
            return
        np.testing.assert_array_equal(oralign(np.roll(v, s))[0], oralign(v)[0])

    def test_backward_identity_at_zero(self):
        g = np.random.default_rng(1).normal(size=(3, 8))
        np.testing.assert_array_equal(oralign_backward(g, np.zeros(3, dtype=int)), g)

    def test_backward_inverts_forward_permutation(self):
        v = np.random.default_rng(2).normal(size=(5, 8))
        aligned, d = oralign(v)
        np.testing.assert_array_equal(oralign_backward(aligned, d), v)

    def test_backward_requires_d(self):
        with pytest.raises(ValueError):
            oralign_backward(np.zeros((2, 8)), None)

    def test_backward_finite_differences(self):
        rng = np.random.default_rng(3)
        v = _unique_max(rng, (4, 8))
        assert argmax_margin(v) > 1e-3
        w = rng.normal(size=v.shape)
        f = lambda: float((oralign(v)[0] * w).sum())  # noqa: E731
        _, d = oralign(v)
        assert relative_error(oralign_backward(w, d), numerical_gradient(f, v)) < 1e-5


class TestORPooling:
    def test_scaled_one_hot(self):
        pooled, idx = orpooling(3.5 * np.eye(8)[5])
        assert pooled == 3.5 and idx == 5

    def test_dimension_reduction(self):
        v = np.random.default_rng(0).normal(size=(2, 16, 8))
        pooled, _ = orpooling(v)
        assert pooled.shape == (2, 16)
        assert oralign(v)[0].size == 8 * pooled.size

    @pytest.mark.parametrize("n", [4, 8])
    def test_shift_invariance_exhaustive(self, n):
        v = np.random.default_rng(n).normal(size=(50, n))
        ref, _ = orpooling(v)
        for s in range(n):
            np.testing.assert_array_equal(orpooling(np.roll(v, s, axis=-1))[0], ref)

    def test_backward_routes_to_max(self):
        rng = np.random.default_rng(4)
        v = _unique_max(rng, (3, 8))
        w = rng.normal(size=3)
        pooled, idx = orpooling(v)
        g = orpooling_backward(w, idx, 8)
        assert np.count_nonzero(g) == 3
        f = lambda: float((orpooling(v)[0] * w).sum())  # noqa: E731
        assert relative_error(g, numerical_gradient(f, v)) < 1e-5


def test_margin():
    assert argmax_margin(np.array([[1.0, 3.0, 2.5]])) == pytest.approx(0.5)
