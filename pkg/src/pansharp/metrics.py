"""Quality metrics for pan-sharpened imagery, reference and no-reference.

All metric functions accept RasterImage or bare (bands, H, W) arrays and
compute in float64. The report helpers shift [-1, 1] toolkit data to [0, 1]
first, so means are nonnegative where a metric needs that (ERGAS, the
Q-index family, SAM).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .raster import RasterImage
from .resample import gaussian_kernel, resize_array, separable_filter

PSNR_CAP_DB = 150.0
_EPS = 1e-8


def _data(img):
    arr = img.data if isinstance(img, RasterImage) else img
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"metrics: expected (bands, H, W) data, got shape {arr.shape}")
    return arr


def _pair(fused, ref, name):
    a, b = _data(fused), _data(ref)
    if a.shape != b.shape:
        raise ValueError(f"{name}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def _shift_unit(arr):
    return (arr + 1.0) / 2.0


def psnr(fused, ref, peak):
    """Mean over bands of per-band PSNR in dB, each capped at 150."""
    a, b = _pair(fused, ref, "psnr")
    if peak <= 0:
        raise ValueError(f"psnr: peak must be positive, got {peak}")
    return float(np.mean(psnr_per_band(a, b, peak)))


def psnr_per_band(fused, ref, peak):
    a, b = _pair(fused, ref, "psnr")
    out = []
    for band in range(a.shape[0]):
        mse = np.mean((a[band] - b[band]) ** 2)
        if mse <= 0.0:
            out.append(PSNR_CAP_DB)
        else:
            out.append(min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse)))
    return out


_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5


def _ssim_kernel():
    x = np.arange(_SSIM_WINDOW, dtype=np.float64) - (_SSIM_WINDOW - 1) / 2.0
    k = np.exp(-0.5 * (x / _SSIM_SIGMA) ** 2)
    return k / k.sum()


def _valid_corr2(img, k):
    out = sliding_window_view(img, k.size, axis=0) @ k
    out = sliding_window_view(out, k.size, axis=1) @ k
    return out


def ssim(fused, ref, dynamic_range):
    """Mean structural similarity, 11x11 Gaussian window (sigma 1.5), valid windows only."""
    a, b = _pair(fused, ref, "ssim")
    return float(np.mean(ssim_per_band(a, b, dynamic_range)))


def ssim_per_band(fused, ref, dynamic_range):
    a, b = _pair(fused, ref, "ssim")
    if dynamic_range <= 0:
        raise ValueError(f"ssim: dynamic_range must be positive, got {dynamic_range}")
    if a.shape[1] < _SSIM_WINDOW or a.shape[2] < _SSIM_WINDOW:
        raise ValueError(
            f"ssim: image {a.shape[1]}x{a.shape[2]} is smaller than the "
            f"{_SSIM_WINDOW}x{_SSIM_WINDOW} window"
        )
    k = _ssim_kernel()
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    out = []
    for band in range(a.shape[0]):
        x, y = a[band], b[band]
        mu_x = _valid_corr2(x, k)
        mu_y = _valid_corr2(y, k)
        var_x = _valid_corr2(x * x, k) - mu_x * mu_x
        var_y = _valid_corr2(y * y, k) - mu_y * mu_y
        cov = _valid_corr2(x * y, k) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        out.append(float(np.mean(num / den)))
    return out


def _sam_stats(fused, ref):
    a, b = _pair(fused, ref, "sam")
    na = np.sqrt(np.sum(a * a, axis=0))
    nb = np.sqrt(np.sum(b * b, axis=0))
    valid = (na > 0.0) & (nb > 0.0)
    theta = np.zeros(na.shape, dtype=np.float64)
    if np.any(valid):
        u = a[:, valid] / na[valid]
        v = b[:, valid] / nb[valid]
        chord = np.sqrt(np.sum((u - v) ** 2, axis=0))
        theta[valid] = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    return theta, valid


def sam(fused, ref):
    """Mean spectral angle in radians over pixels with nonzero norm in both images.

    Uses the chord form 2*arcsin(||u - v|| / 2) on unit vectors, which is
    exact at zero angle and stable near it.
    """
    theta, valid = _sam_stats(fused, ref)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("sam: no pixels with nonzero spectral norm in both images")
    return float(theta[valid].sum() / n_valid)


def ergas(fused, ref, ratio):
    """Relative global dimensionless synthesis error; ratio is 1/r (e.g. 0.25)."""
    a, b = _pair(fused, ref, "ergas")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ergas: ratio must be in (0, 1], got {ratio}")
    terms = []
    for band in range(a.shape[0]):
        mu = np.mean(b[band])
        if abs(mu) < 1e-12:
            raise ValueError(f"ergas: reference band {band} has (near) zero mean")
        rmse = np.sqrt(np.mean((a[band] - b[band]) ** 2))
        terms.append((rmse / mu) ** 2)
    return float(100.0 * ratio * np.sqrt(np.mean(terms)))


def cc(fused, ref):
    """Mean over bands of the Pearson correlation coefficient."""
    a, b = _pair(fused, ref, "cc")
    return float(np.mean(cc_per_band(a, b)))


def cc_per_band(fused, ref):
    a, b = _pair(fused, ref, "cc")
    out = []
    for band in range(a.shape[0]):
        x = a[band] - np.mean(a[band])
        y = b[band] - np.mean(b[band])
        den = np.sqrt(np.sum(x * x) * np.sum(y * y))
        if den <= 0.0:
            raise ValueError(f"cc: band {band} has zero variance")
        out.append(float(np.sum(x * y) / den))
    return out


def _blockify(arr2d, block, stride):
    """(n_blocks, block*block) view list of fully-inside windows."""
    h, w = arr2d.shape
    if h < block or w < block:
        raise ValueError(f"q-index: image {h}x{w} is smaller than block {block}")
    wins = sliding_window_view(arr2d, (block, block))[::stride, ::stride]
    return wins.reshape(-1, block * block)


def q_index(a2d, b2d, block=32, stride=32):
    """Universal image quality index averaged over block x block windows.

    Degenerate blocks follow the usual convention: drop the vanishing moment
    factor; 1.0 when both variances and both means vanish.
    """
    a2d = np.asarray(a2d, dtype=np.float64)
    b2d = np.asarray(b2d, dtype=np.float64)
    if a2d.shape != b2d.shape or a2d.ndim != 2:
        raise ValueError(f"q_index: need matching 2-D arrays, got {a2d.shape} and {b2d.shape}")
    xa = _blockify(a2d, block, stride)
    xb = _blockify(b2d, block, stride)
    mu1 = xa.mean(axis=1)
    mu2 = xb.mean(axis=1)
    da = xa - mu1[:, None]
    db = xb - mu2[:, None]
    var1 = np.mean(da * da, axis=1)
    var2 = np.mean(db * db, axis=1)
    cov = np.mean(da * db, axis=1)
    d_sigma = var1 + var2
    d_mu = mu1 * mu1 + mu2 * mu2
    q = np.empty(mu1.shape, dtype=np.float64)
    both = (d_sigma >= _EPS) & (d_mu >= _EPS)
    only_mu = (d_sigma < _EPS) & (d_mu >= _EPS)
    only_sigma = (d_sigma >= _EPS) & (d_mu < _EPS)
    neither = (d_sigma < _EPS) & (d_mu < _EPS)
    q[both] = (4.0 * cov[both] * mu1[both] * mu2[both]) / (d_sigma[both] * d_mu[both])
    q[only_mu] = 2.0 * mu1[only_mu] * mu2[only_mu] / d_mu[only_mu]
    q[only_sigma] = 2.0 * cov[only_sigma] / d_sigma[only_sigma]
    q[neither] = 1.0
    return float(q.mean())


def _quat_conj_prod_mean(u, v):
    """Mean over pixels of the quaternion product u * conj(v), per block.

    u, v: (n_blocks, 4, n_pix) zero-mean quaternion arrays (band 0 scalar part).
    """
    a1, b1, c1, d1 = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
    a2, b2, c2, d2 = v[:, 0], v[:, 1], v[:, 2], v[:, 3]
    # conj(v) flips the sign of the vector part
    w = a1 * a2 + b1 * b2 + c1 * c2 + d1 * d2
    x = -a1 * b2 + b1 * a2 - c1 * d2 + d1 * c2
    y = -a1 * c2 + b1 * d2 + c1 * a2 - d1 * b2
    z = -a1 * d2 - b1 * c2 + c1 * b2 + d1 * a2
    return np.stack([w.mean(axis=1), x.mean(axis=1), y.mean(axis=1), z.mean(axis=1)], axis=1)


def q4(fused, ref, block=32):
    """Quaternion UIQI for 4-band images, averaged over non-overlapping blocks."""
    a, b = _pair(fused, ref, "q4")
    if a.shape[0] != 4:
        raise ValueError(f"q4: requires 4 bands, got {a.shape[0]}")
    h, w = a.shape[1], a.shape[2]
    if h < block or w < block:
        raise ValueError(f"q4: image {h}x{w} is smaller than block {block}")
    nby, nbx = h // block, w // block
    # (bands, nby, block, nbx, block) -> (n_blocks, bands, block*block)
    za = a[:, : nby * block, : nbx * block].reshape(4, nby, block, nbx, block)
    zb = b[:, : nby * block, : nbx * block].reshape(4, nby, block, nbx, block)
    za = za.transpose(1, 3, 0, 2, 4).reshape(nby * nbx, 4, block * block)
    zb = zb.transpose(1, 3, 0, 2, 4).reshape(nby * nbx, 4, block * block)

    mu1 = za.mean(axis=2)
    mu2 = zb.mean(axis=2)
    u = za - mu1[:, :, None]
    v = zb - mu2[:, :, None]
    var1 = np.mean(np.sum(u * u, axis=1), axis=1)
    var2 = np.mean(np.sum(v * v, axis=1), axis=1)
    cov_mod = np.sqrt(np.sum(_quat_conj_prod_mean(u, v) ** 2, axis=1))
    mod1 = np.sqrt(np.sum(mu1 * mu1, axis=1))
    mod2 = np.sqrt(np.sum(mu2 * mu2, axis=1))
    d_sigma = var1 + var2
    d_mu = mod1 * mod1 + mod2 * mod2
    q = np.empty(d_sigma.shape, dtype=np.float64)
    both = (d_sigma >= _EPS) & (d_mu >= _EPS)
    only_mu = (d_sigma < _EPS) & (d_mu >= _EPS)
    only_sigma = (d_sigma >= _EPS) & (d_mu < _EPS)
    neither = (d_sigma < _EPS) & (d_mu < _EPS)
    q[both] = (4.0 * cov_mod[both] * mod1[both] * mod2[both]) / (d_sigma[both] * d_mu[both])
    q[only_mu] = 2.0 * mod1[only_mu] * mod2[only_mu] / d_mu[only_mu]
    q[only_sigma] = 2.0 * cov_mod[only_sigma] / d_sigma[only_sigma]
    q[neither] = 1.0
    return float(q.mean())


def _degrade_pan(pan2d, r):
    """Same low-pass + bicubic decimation as the training-data simulation."""
    kernel = gaussian_kernel(0.5 * r, 2 * r)
    smooth = separable_filter(pan2d, kernel)
    return resize_array(smooth, pan2d.shape[0] // r, pan2d.shape[1] // r)


def _low_res_block(block, ratio, name):
    """Block size covering the same ground footprint at 1/ratio resolution."""
    if block % ratio != 0:
        raise ValueError(f"{name}: block {block} is not divisible by the scale ratio {ratio}")
    return block // ratio


def d_lambda(fused, ms_orig, block=32):
    """Spectral distortion: mean |Q(f_i, f_j) - Q(m_i, m_j)| over band pairs i < j.

    The Q blocks at MS scale cover the same ground footprint as the `block`
    sized blocks at fused scale.
    """
    a = _data(fused)
    m = _data(ms_orig)
    if a.shape[0] != m.shape[0]:
        raise ValueError(f"d_lambda: band count mismatch {a.shape[0]} vs {m.shape[0]}")
    n_bands = a.shape[0]
    if n_bands < 2:
        raise ValueError("d_lambda: needs at least two bands")
    if a.shape[1] % m.shape[1] or a.shape[2] % m.shape[2]:
        raise ValueError(
            f"d_lambda: fused size {a.shape[1:]} is not a multiple of MS size {m.shape[1:]}"
        )
    ratio = a.shape[1] // m.shape[1]
    if a.shape[2] // m.shape[2] != ratio:
        raise ValueError(
            f"d_lambda: inconsistent scale ratios between axes for {a.shape[1:]} vs {m.shape[1:]}"
        )
    block_low = _low_res_block(block, ratio, "d_lambda")
    diffs = []
    for i in range(n_bands):
        for j in range(i + 1, n_bands):
            qf = q_index(a[i], a[j], block=block, stride=block)
            qm = q_index(m[i], m[j], block=block_low, stride=block_low)
            diffs.append(abs(qf - qm))
    return float(np.mean(diffs))


def d_s(fused, ms_orig, pan, r, block=32):
    """Spatial distortion: mean |Q(f_i, PAN) - Q(m_i, PAN_degraded)| over bands.

    Low-resolution Q blocks shrink by r to keep the ground footprint of `block`.
    """
    a = _data(fused)
    m = _data(ms_orig)
    p = _data(pan)
    if p.shape[0] != 1:
        raise ValueError(f"d_s: PAN must have 1 band, got {p.shape[0]}")
    if a.shape[1:] != p.shape[1:]:
        raise ValueError(f"d_s: fused {a.shape[1:]} and PAN {p.shape[1:]} sizes differ")
    if p.shape[1] % r or p.shape[2] % r:
        raise ValueError(f"d_s: PAN size {p.shape[1:]} not divisible by r = {r}")
    pan2d = p[0]
    pan_lr = _degrade_pan(pan2d, r)
    if m.shape[1:] != pan_lr.shape:
        raise ValueError(
            f"d_s: MS size {m.shape[1:]} does not match degraded PAN {pan_lr.shape}"
        )
    block_low = _low_res_block(block, r, "d_s")
    diffs = []
    for band in range(a.shape[0]):
        qf = q_index(a[band], pan2d, block=block, stride=block)
        qm = q_index(m[band], pan_lr, block=block_low, stride=block_low)
        diffs.append(abs(qf - qm))
    return float(np.mean(diffs))


def qnr_suite(fused, ms_orig, pan, r, block=32):
    """No-reference indices: returns (d_lambda, d_s, qnr) with qnr = (1-dl)(1-ds)."""
    dl = d_lambda(fused, ms_orig, block=block)
    ds = d_s(fused, ms_orig, pan, r, block=block)
    return dl, ds, (1.0 - dl) * (1.0 - ds)


@dataclass
class MetricReport:
    """Named metric values plus optional per-band breakdowns."""

    kind: str
    values: dict
    per_band: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_text(self):
        lines = [f"metric report ({self.kind})"]
        for name in sorted(self.values):
            lines.append(f"  {name:<10s} {self.values[name]:.6f}")
        for name in sorted(self.per_band):
            bands = " ".join(f"{v:.6f}" for v in self.per_band[name])
            lines.append(f"  {name:<10s} per band: {bands}")
        for name in sorted(self.details):
            lines.append(f"  {name} = {self.details[name]}")
        return "\n".join(lines) + "\n"

    def to_json(self):
        payload = {
            "kind": self.kind,
            "values": self.values,
            "per_band": self.per_band,
            "details": self.details,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def reference_report(fused, ref, r):
    """Full-reference suite on [-1, 1] data (shifted to [0, 1] internally)."""
    a = _shift_unit(_data(fused))
    b = _shift_unit(_data(ref))
    theta, valid = _sam_stats(a, b)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("reference_report: no valid pixels for SAM")
    values = {
        "psnr": psnr(a, b, peak=1.0),
        "ssim": ssim(a, b, dynamic_range=1.0),
        "sam": float(theta[valid].sum() / n_valid),
        "ergas": ergas(a, b, ratio=1.0 / r),
        "cc": cc(a, b),
        "q4": q4(a, b),
    }
    per_band = {
        "psnr": psnr_per_band(a, b, peak=1.0),
        "ssim": ssim_per_band(a, b, dynamic_range=1.0),
        "cc": cc_per_band(a, b),
    }
    details = {"sam_skipped_pixels": int(valid.size - n_valid)}
    return MetricReport(kind="reference", values=values, per_band=per_band, details=details)


def noreference_report(fused, ms_orig, pan, r):
    """No-reference suite on [-1, 1] data (shifted to [0, 1] internally)."""
    a = _shift_unit(_data(fused))
    m = _shift_unit(_data(ms_orig))
    p = _shift_unit(_data(pan))
    dl, ds, qnr = qnr_suite(a, m, p, r)
    values = {"d_lambda": dl, "d_s": ds, "qnr": qnr}
    return MetricReport(kind="no_reference", values=values)


def sam_map(fused, ref):
    """Per-pixel spectral angle (radians) as a 1-band raster; zero-norm pixels read 0."""
    a = _shift_unit(_data(fused))
    b = _shift_unit(_data(ref))
    theta, _ = _sam_stats(a, b)
    return RasterImage(theta[None].astype(np.float32), bit_depth=16)


_SOBEL_SMOOTH = np.array([1.0, 2.0, 1.0]) / 4.0
_SOBEL_DIFF = np.array([-1.0, 0.0, 1.0])


def gradient_map(img):
    """Mean-over-bands Sobel gradient magnitude as a 1-band raster."""
    from .resample import correlate1d

    a = _data(img)
    mags = []
    for band in range(a.shape[0]):
        gx = correlate1d(correlate1d(a[band], _SOBEL_DIFF, axis=1), _SOBEL_SMOOTH, axis=0)
        gy = correlate1d(correlate1d(a[band], _SOBEL_DIFF, axis=0), _SOBEL_SMOOTH, axis=1)
        mags.append(np.sqrt(gx * gx + gy * gy))
    out = np.mean(mags, axis=0)
    return RasterImage(out[None].astype(np.float32), bit_depth=16)


def diff_map(fused, ref):
    """Mean absolute band difference as a 1-band raster."""
    a, b = _pair(fused, ref, "diff_map")
    out = np.mean(np.abs(a - b), axis=0)
    return RasterImage(out[None].astype(np.float32), bit_depth=16)
