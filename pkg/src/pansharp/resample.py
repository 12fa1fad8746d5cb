"""Separable resampling and filtering primitives on plain numpy arrays.

Everything here is tape-free: the autograd layer wraps `resize_matrix`
into a differentiable op, and the simulation / baseline code calls the
array-level helpers directly.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def cubic_kernel(t, a=-0.5):
    """Keys cubic convolution kernel u(t).

    :param t: distance(s) from the sample point, any sign.
    :param a: kernel sharpness, -0.5 for the classic Catmull-Rom family.
    :returns: kernel weight(s), same shape as `t`.
    """
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2 = t * t
    t3 = t2 * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    out = np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))
    return out


def resize_matrix(n_in, n_out):
    """Dense (n_out, n_in) matrix M so that y = M @ x bicubic-resizes a signal.

    Uses half-pixel-center source mapping src = (dst + 0.5) / scale - 0.5 and
    clamp-to-edge handling: out-of-range taps fold their weight onto the
    nearest edge sample, so rows always sum to 1.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError(f"resize_matrix: sizes must be >= 1, got {n_in} -> {n_out}")
    scale = n_out / n_in
    dst = np.arange(n_out, dtype=np.float64)
    src = (dst + 0.5) / scale - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    for offset in (-1, 0, 1, 2):
        w = cubic_kernel(frac - offset)
        taps = np.clip(base + offset, 0, n_in - 1)
        np.add.at(mat, (rows, taps), w)
    return mat


def resize_array(arr, out_h, out_w):
    """Bicubic-resize the trailing two axes of `arr` to (out_h, out_w)."""
    arr = np.asarray(arr)
    h, w = arr.shape[-2], arr.shape[-1]
    mh = resize_matrix(h, out_h)
    mw = resize_matrix(w, out_w)
    tmp = np.tensordot(arr, mh, axes=((-2,), (1,)))   # (..., W, out_h)
    out = np.tensordot(tmp, mw, axes=((-2,), (1,)))   # (..., out_h, out_w)
    return out.astype(arr.dtype, copy=False)


def gaussian_kernel(sigma, radius):
    """Normalized 1-D Gaussian, length 2*radius + 1."""
    if sigma <= 0:
        raise ValueError(f"gaussian_kernel: sigma must be positive, got {sigma}")
    if radius < 1:
        raise ValueError(f"gaussian_kernel: radius must be >= 1, got {radius}")
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def mtf_sigma(ratio, nyquist_gain=0.3):
    """Gaussian sigma whose frequency response hits `nyquist_gain` at f = 1/(2*ratio)."""
    if not 0.0 < nyquist_gain < 1.0:
        raise ValueError(f"mtf_sigma: gain must be in (0, 1), got {nyquist_gain}")
    return ratio * math.sqrt(-2.0 * math.log(nyquist_gain)) / math.pi


def mtf_gaussian_kernel(ratio, nyquist_gain=0.3):
    """Separable MTF-matched low-pass for a resolution ratio (e.g. 4)."""
    sigma = mtf_sigma(ratio, nyquist_gain)
    radius = max(2 * int(ratio), int(math.ceil(4.0 * sigma)))
    return gaussian_kernel(sigma, radius)


def correlate1d(arr, kernel, axis):
    """Edge-padded cross-correlation along one axis. Output shape == input shape."""
    arr = np.asarray(arr)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 1 or kernel.size % 2 != 1:
        raise ValueError(f"correlate1d: kernel must be 1-D with odd length, got shape {kernel.shape}")
    radius = kernel.size // 2
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad, mode="edge")
    windows = sliding_window_view(padded, kernel.size, axis=axis)
    out = windows @ kernel
    return out.astype(arr.dtype, copy=False)


def separable_filter(arr, kernel):
    """Apply `kernel` along the last two axes (rows then columns)."""
    out = correlate1d(arr, kernel, axis=-2)
    return correlate1d(out, kernel, axis=-1)
