"""Classical pan-sharpening baselines.

Component-substitution methods (IHS, PCA, GS) and an MTF-matched ratio
injection method. All of them take the MS image already upsampled to the PAN
grid, shift the [-1, 1] toolkit range to [0, 1] internally, and hand back a
fused 4-band image in [-1, 1].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .raster import RasterImage
from .resample import mtf_gaussian_kernel, resize_array, separable_filter

logger = logging.getLogger(__name__)

NYQUIST_GAIN = 0.3


@dataclass
class FusionInput:
    """Upsampled MS + PAN on the same grid, plus the resolution ratio."""

    ms_up: RasterImage
    pan: RasterImage
    r: int

    def __post_init__(self):
        if self.ms_up.bands != 4:
            raise ValueError(f"FusionInput: MS must have 4 bands, got {self.ms_up.bands}")
        if self.pan.bands != 1:
            raise ValueError(f"FusionInput: PAN must have 1 band, got {self.pan.bands}")
        if self.ms_up.data.shape[1:] != self.pan.data.shape[1:]:
            raise ValueError(
                f"FusionInput: MS {self.ms_up.data.shape[1:]} and PAN "
                f"{self.pan.data.shape[1:]} grids differ"
            )
        if self.r < 2:
            raise ValueError(f"FusionInput: r must be >= 2, got {self.r}")


def prepare_fusion_input(ms, pan, r):
    """Bicubic-upsample low-resolution MS onto the PAN grid."""
    if pan.height != r * ms.height or pan.width != r * ms.width:
        raise ValueError(
            f"prepare_fusion_input: PAN {pan.height}x{pan.width} is not r = {r} "
            f"times MS {ms.height}x{ms.width}"
        )
    up = resize_array(ms.data.astype(np.float64), pan.height, pan.width)
    return FusionInput(ms_up=ms.with_data(up.astype(np.float32)), pan=pan, r=r)


def hist_match(src, ref):
    """Affine-match `src` to the mean/std of `ref`.

    A constant `src` cannot be matched; it maps to the constant ref mean and
    logs a warning.
    """
    src = np.asarray(src, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    mu_s, mu_r = src.mean(), ref.mean()
    sd_s, sd_r = src.std(), ref.std()
    if sd_s < 1e-12:
        logger.warning("hist_match: source has (near) zero variance; returning the reference mean")
        return np.full_like(src, mu_r)
    return (src - mu_s) * (sd_r / sd_s) + mu_r


def _unpack(inp):
    ms = (np.asarray(inp.ms_up.data, dtype=np.float64) + 1.0) / 2.0
    pan = (np.asarray(inp.pan.data[0], dtype=np.float64) + 1.0) / 2.0
    return ms, pan


def _pack(inp, fused01):
    out = (2.0 * fused01 - 1.0).astype(np.float32)
    return inp.ms_up.with_data(out)


def ihs_fuse(inp):
    """Additive intensity substitution: out_b = ms_b + (PAN' - I), I = mean of bands."""
    ms, pan = _unpack(inp)
    intensity = ms.mean(axis=0)
    pan_m = hist_match(pan, intensity)
    return _pack(inp, ms + (pan_m - intensity)[None])


def pca_fuse(inp):
    """Substitute the first principal component with the histogram-matched PAN."""
    ms, pan = _unpack(inp)
    bands, h, w = ms.shape
    flat = ms.reshape(bands, h * w)
    mu = flat.mean(axis=1, keepdims=True)
    centered = flat - mu
    cov = (centered @ centered.T) / centered.shape[1]
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[-1] <= 0 or eigvals[0] <= 1e-12 * eigvals[-1]:
        raise ValueError("pca_fuse: rank-deficient band covariance, PCA substitution undefined")
    order = np.argsort(eigvals)[::-1]
    basis = eigvecs[:, order]
    # fix each component's sign so the largest-magnitude loading is positive
    for i in range(bands):
        j = int(np.argmax(np.abs(basis[:, i])))
        if basis[j, i] < 0:
            basis[:, i] = -basis[:, i]
    scores = basis.T @ centered
    scores[0] = hist_match(pan.reshape(-1), scores[0])
    fused = basis @ scores + mu
    return _pack(inp, fused.reshape(bands, h, w))


def gs_fuse(inp):
    """Gram-Schmidt substitution with the band mean as the synthetic low-pass intensity."""
    ms, pan = _unpack(inp)
    bands, h, w = ms.shape
    n = h * w
    intensity = ms.mean(axis=0).reshape(-1)
    t0 = intensity - intensity.mean()
    band_means = ms.reshape(bands, n).mean(axis=1)
    centered = ms.reshape(bands, n) - band_means[:, None]

    comps = [t0]
    coeffs = []
    for b in range(bands):
        c_b = []
        residual = centered[b].copy()
        for t in comps:
            denom = float(t @ t)
            if denom < 1e-12:
                c = 0.0
            else:
                c = float(residual @ t) / denom
            c_b.append(c)
            residual = residual - c * t
        coeffs.append(c_b)
        comps.append(residual)

    pan_m = hist_match(pan.reshape(-1), intensity)
    t0_sub = pan_m - pan_m.mean()
    fused = np.empty((bands, n))
    for b in range(bands):
        acc = comps[b + 1] + coeffs[b][0] * t0_sub
        for j in range(1, b + 1):
            acc = acc + coeffs[b][j] * comps[j]
        fused[b] = acc + band_means[b]
    return _pack(inp, fused.reshape(bands, h, w))


def gs_components(inp):
    """Expose the GS transform internals for verification: (t0, components, coefficients)."""
    ms, _ = _unpack(inp)
    bands, h, w = ms.shape
    n = h * w
    intensity = ms.mean(axis=0).reshape(-1)
    t0 = intensity - intensity.mean()
    centered = ms.reshape(bands, n) - ms.reshape(bands, n).mean(axis=1, keepdims=True)
    comps = [t0]
    coeffs = []
    for b in range(bands):
        c_b = []
        residual = centered[b].copy()
        for t in comps:
            denom = float(t @ t)
            c = 0.0 if denom < 1e-12 else float(residual @ t) / denom
            c_b.append(c)
            residual = residual - c * t
        coeffs.append(c_b)
        comps.append(residual)
    return t0, comps[1:], coeffs


def mtf_glp_hpm_fuse(inp):
    """High-pass modulation: out_b = ms_b * PAN / PAN_low.

    PAN_low is the MTF-matched Gaussian low-pass (gain 0.3 at Nyquist),
    decimated by r and bicubic re-expanded. Pixels where PAN_low vanishes
    copy ms_b through unchanged.
    """
    ms, pan = _unpack(inp)
    h, w = pan.shape
    if h % inp.r or w % inp.r:
        raise ValueError(f"mtf_glp_hpm_fuse: PAN size {h}x{w} not divisible by r = {inp.r}")
    kernel = mtf_gaussian_kernel(inp.r, NYQUIST_GAIN)
    smooth = separable_filter(pan, kernel)
    decimated = resize_array(smooth, h // inp.r, w // inp.r)
    pan_low = resize_array(decimated, h, w)
    safe = np.abs(pan_low) > 1e-6
    ratio = np.ones_like(pan)
    ratio[safe] = pan[safe] / pan_low[safe]
    return _pack(inp, ms * ratio[None])


BASELINES = {
    "ihs": ihs_fuse,
    "pca": pca_fuse,
    "gs": gs_fuse,
    "mtf-glp-hpm": mtf_glp_hpm_fuse,
}
