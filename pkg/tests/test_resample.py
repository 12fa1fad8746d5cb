import math

import numpy as np
import pytest

from pansharp.resample import (
    correlate1d,
    cubic_kernel,
    gaussian_kernel,
    mtf_gaussian_kernel,
    mtf_sigma,
    resize_array,
    resize_matrix,
    separable_filter,
)


def bicubic_oracle_1d(signal, n_out):
    """Direct per-sample Keys interpolation, written independently of resize_matrix."""
    n_in = len(signal)
    scale = n_out / n_in
    out = np.zeros(n_out)
    for o in range(n_out):
        src = (o + 0.5) / scale - 0.5
        base = math.floor(src)
        t = src - base
        acc = 0.0
        for offset in (-1, 0, 1, 2):
            tap = min(max(base + offset, 0), n_in - 1)
            acc += signal[tap] * float(cubic_kernel(t - offset))
        out[o] = acc
    return out


class TestCubicKernel:
    def test_anchor_values(self):
        assert cubic_kernel(0.0) == 1.0
        assert cubic_kernel(1.0) == 0.0
        assert cubic_kernel(2.0) == 0.0
        assert cubic_kernel(2.5) == 0.0
        # hand-evaluated: (a+2)t^3 - (a+3)t^2 + 1 at t=0.5, a=-0.5
        assert cubic_kernel(0.5) == pytest.approx(0.5625, abs=1e-12)

    def test_symmetry(self):
        t = np.linspace(-2.5, 2.5, 101)
        np.testing.assert_allclose(cubic_kernel(t), cubic_kernel(-t), atol=1e-15)

    def test_continuity_at_knots(self):
        eps = 1e-9
        for knot in (1.0, 2.0):
            lo = float(cubic_kernel(knot - eps))
            hi = float(cubic_kernel(knot + eps))
            assert abs(lo - hi) < 1e-7

    def test_partition_of_unity(self):
        # interpolating kernel: weights at offsets (-1-t, -t, 1-t, 2-t) sum to 1
        for t in (0.0, 0.25, 0.5, 0.99):
            w = sum(float(cubic_kernel(t - off)) for off in (-1, 0, 1, 2))
            assert w == pytest.approx(1.0, abs=1e-12)


class TestResizeMatrix:
    def test_identity_at_scale_1(self):
        m = resize_matrix(7, 7)
        np.testing.assert_allclose(m, np.eye(7), atol=1e-12)

    def test_rows_sum_to_one(self):
        for n_in, n_out in ((8, 32), (32, 8), (5, 13), (16, 4)):
            m = resize_matrix(n_in, n_out)
            np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-12)

    def test_matches_direct_interpolation(self):
        rng = np.random.default_rng(0)
        for n_in, n_out in ((8, 32), (12, 3), (9, 27), (10, 10)):
            signal = rng.standard_normal(n_in)
            direct = bicubic_oracle_1d(signal, n_out)
            via_matrix = resize_matrix(n_in, n_out) @ signal
            np.testing.assert_allclose(via_matrix, direct, atol=1e-12)

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            resize_matrix(0, 4)
        with pytest.raises(ValueError):
            resize_matrix(4, 0)

    def test_constant_preserved(self):
        m = resize_matrix(6, 24)
        np.testing.assert_allclose(m @ np.full(6, 3.25), 3.25, atol=1e-12)


class TestResizeArray:
    def test_separable_against_1d_oracle(self):
        rng = np.random.default_rng(1)
        img = rng.standard_normal((6, 8))
        out = resize_array(img, 12, 16)
        oracle = np.stack([bicubic_oracle_1d(row, 16) for row in img])
        oracle = np.stack([bicubic_oracle_1d(col, 12) for col in oracle.T]).T
        np.testing.assert_allclose(out, oracle, atol=1e-12)

    def test_leading_axes_preserved(self):
        arr = np.random.default_rng(2).standard_normal((3, 2, 8, 8))
        out = resize_array(arr, 4, 4)
        assert out.shape == (3, 2, 4, 4)

    def test_dtype_kept(self):
        arr = np.ones((4, 4), dtype=np.float32)
        assert resize_array(arr, 8, 8).dtype == np.float32


class TestGaussianKernel:
    def test_normalized_and_symmetric(self):
        k = gaussian_kernel(2.0, 8)
        assert k.shape == (17,)
        assert k.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(k, k[::-1], atol=1e-15)
        assert np.argmax(k) == 8

    def test_validation(self):
        with pytest.raises(ValueError):
            gaussian_kernel(0.0, 4)
        with pytest.raises(ValueError):
            gaussian_kernel(1.0, 0)


class TestMtfKernel:
    def test_sigma_formula(self):
        # sigma = r * sqrt(-2 ln g) / pi for gain g at f = 1/(2r)
        sigma = mtf_sigma(4, 0.3)
        assert sigma == pytest.approx(4.0 * math.sqrt(-2.0 * math.log(0.3)) / math.pi, abs=1e-12)

    def test_nyquist_gain(self):
        # oracle: evaluate the kernel's frequency response by direct cosine sum
        for r in (2, 4):
            k = mtf_gaussian_kernel(r)
            radius = (k.size - 1) // 2
            n = np.arange(-radius, radius + 1)
            f_nyquist = 1.0 / (2.0 * r)
            gain = float(np.sum(k * np.cos(2.0 * math.pi * f_nyquist * n)))
            assert gain == pytest.approx(0.3, abs=0.01)

    def test_gain_validation(self):
        with pytest.raises(ValueError):
            mtf_sigma(4, 0.0)
        with pytest.raises(ValueError):
            mtf_sigma(4, 1.0)


class TestCorrelate1d:
    def test_delta_kernel_is_identity(self):
        arr = np.random.default_rng(3).standard_normal((5, 7))
        out = correlate1d(arr, np.array([0.0, 1.0, 0.0]), axis=1)
        np.testing.assert_allclose(out, arr, atol=1e-15)

    def test_box_kernel_interior(self):
        arr = np.arange(6, dtype=np.float64)
        out = correlate1d(arr, np.full(3, 1.0), axis=0)
        # interior: sliding sums; edges replicate the boundary sample
        np.testing.assert_allclose(out[1:-1], [3.0, 6.0, 9.0, 12.0], atol=1e-12)
        assert out[0] == pytest.approx(0 + 0 + 1)
        assert out[-1] == pytest.approx(4 + 5 + 5)

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            correlate1d(np.zeros(5), np.ones(4), axis=0)

    def test_separable_constant(self):
        arr = np.full((9, 9), 2.5)
        out = separable_filter(arr, gaussian_kernel(1.0, 3))
        np.testing.assert_allclose(out, 2.5, atol=1e-12)

    def test_separable_matches_dense_2d(self):
        rng = np.random.default_rng(4)
        arr = rng.standard_normal((10, 11))
        k = gaussian_kernel(0.8, 2)
        out = separable_filter(arr, k)
        # oracle: explicit 2-D edge-padded correlation
        k2 = np.outer(k, k)
        r = 2
        padded = np.pad(arr, r, mode="edge")
        oracle = np.zeros_like(arr)
        for i in range(arr.shape[0]):
            for j in range(arr.shape[1]):
                oracle[i, j] = np.sum(padded[i:i + 2 * r + 1, j:j + 2 * r + 1] * k2)
        np.testing.assert_allclose(out, oracle, atol=1e-12)
