"""Reduced-resolution training data via Wald's protocol.

Both inputs are degraded by the resolution ratio r (Gaussian low-pass then
bicubic decimation), so the original multispectral image becomes the
ground-truth target for patches cut from the degraded pair:

    MS   (H, W)     -> MS_lr  (H/r, W/r)   network input
    PAN  (rH, rW)   -> PAN_lr (H, W)       network input
    MS   (H, W)                            reference target

Patches are cut on a regular grid at reference scale, shuffled with a seeded
generator, and split into train/validation.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .raster import RasterImage, load_raster, normalize_to_unit, save_raster
from .resample import gaussian_kernel, resize_array, separable_filter

MS_BANDS = 4


@dataclass(frozen=True)
class WaldConfig:
    """Simulation geometry and split control."""

    r: int = 4
    patch: int = 64
    stride: int = 0          # 0 means non-overlapping (stride = patch)
    train_fraction: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.r < 2:
            raise ValueError(f"WaldConfig: r must be >= 2, got {self.r}")
        if self.patch < self.r:
            raise ValueError(f"WaldConfig: patch must be >= r, got {self.patch}")
        if self.patch % self.r != 0:
            raise ValueError(f"WaldConfig: patch {self.patch} must be divisible by r {self.r}")
        stride = self.effective_stride
        if stride < 1 or stride % self.r != 0:
            raise ValueError(f"WaldConfig: stride {stride} must be a positive multiple of r {self.r}")
        if not 0.0 <= self.train_fraction <= 1.0:
            raise ValueError(
                f"WaldConfig: train_fraction must be in [0, 1], got {self.train_fraction}"
            )

    @property
    def effective_stride(self):
        return self.stride if self.stride else self.patch


@dataclass
class SamplePair:
    """One training example: degraded inputs plus the reference target, all in [-1, 1]."""

    source_id: str
    ms_lr: RasterImage
    pan_lr: RasterImage
    ms_ref: RasterImage


@dataclass
class DatasetManifest:
    """Split sample lists plus the config echo that produced them."""

    config: WaldConfig
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)

    def all_samples(self):
        return list(self.train) + list(self.val)


def degrade(img, r):
    """Low-pass (Gaussian sigma = 0.5 * r, radius 2r, edge padded) then bicubic decimate by r."""
    if r < 2:
        raise ValueError(f"degrade: r must be >= 2, got {r}")
    if img.height % r != 0 or img.width % r != 0:
        raise ValueError(
            f"degrade: image size {img.height}x{img.width} is not divisible by r = {r}"
        )
    kernel = gaussian_kernel(0.5 * r, 2 * r)
    smooth = separable_filter(img.data.astype(np.float64), kernel)
    small = resize_array(smooth, img.height // r, img.width // r)
    return img.with_data(small.astype(img.data.dtype if img.data.dtype.kind == "f" else np.float32))


def make_dataset(ms, pan, cfg):
    """Cut a co-registered MS/PAN pair into Wald-protocol training samples.

    `ms` and `pan` hold digital numbers in [0, 2^bit_depth - 1]; both are
    normalized to [-1, 1] before degradation. The patch grid lives at the
    reference (original MS) scale.
    """
    if ms.bands != MS_BANDS:
        raise ValueError(f"make_dataset: MS must have {MS_BANDS} bands, got {ms.bands}")
    if pan.bands != 1:
        raise ValueError(f"make_dataset: PAN must have 1 band, got {pan.bands}")
    r = cfg.r
    if pan.height != r * ms.height or pan.width != r * ms.width:
        raise ValueError(
            f"make_dataset: PAN {pan.height}x{pan.width} is not r = {r} times "
            f"MS {ms.height}x{ms.width}"
        )
    if ms.height % r != 0 or ms.width % r != 0:
        raise ValueError(
            f"make_dataset: MS size {ms.height}x{ms.width} must be divisible by r = {r}"
        )
    patch = cfg.patch
    if patch > ms.height or patch > ms.width:
        raise ValueError(
            f"make_dataset: patch {patch} exceeds MS size {ms.height}x{ms.width}"
        )

    ms_n = normalize_to_unit(ms)
    pan_n = normalize_to_unit(pan)
    ms_lr = degrade(ms_n, r)     # (4, H/r, W/r)
    pan_lr = degrade(pan_n, r)   # (1, H, W)

    stride = cfg.effective_stride
    samples = []
    for row in range(0, ms.height - patch + 1, stride):
        for col in range(0, ms.width - patch + 1, stride):
            sid = f"r{row:05d}_c{col:05d}"
            lo_r, lo_c, lo_p = row // r, col // r, patch // r
            samples.append(
                SamplePair(
                    source_id=sid,
                    ms_lr=ms_n.with_data(ms_lr.data[:, lo_r:lo_r + lo_p, lo_c:lo_c + lo_p].copy()),
                    pan_lr=pan_n.with_data(pan_lr.data[:, row:row + patch, col:col + patch].copy()),
                    ms_ref=ms_n.with_data(ms_n.data[:, row:row + patch, col:col + patch].copy()),
                )
            )

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(samples))
    shuffled = [samples[i] for i in order]
    n_train = int(round(cfg.train_fraction * len(shuffled)))
    n_train = min(max(n_train, 0), len(shuffled))
    return DatasetManifest(config=cfg, train=shuffled[:n_train], val=shuffled[n_train:])


_ROLES = ("mslr", "panlr", "msref")


def write_dataset(manifest, out_dir):
    """Persist samples and the manifest file; returns the manifest path.

    Bytes are fully deterministic for a given input pair and config.
    """
    out_dir = Path(out_dir)
    sample_dir = out_dir / "samples"
    sample_dir.mkdir(parents=True, exist_ok=True)
    lines = io.StringIO()
    lines.write("wald-manifest v1\n")
    cfg = manifest.config
    lines.write(f"# r {cfg.r}\n")
    lines.write(f"# patch {cfg.patch}\n")
    lines.write(f"# stride {cfg.effective_stride}\n")
    lines.write(f"# train_fraction {cfg.train_fraction!r}\n")
    lines.write(f"# seed {cfg.seed}\n")
    lines.write(f"# train {len(manifest.train)}\n")
    lines.write(f"# val {len(manifest.val)}\n")
    for split, samples in (("train", manifest.train), ("val", manifest.val)):
        for s in samples:
            paths = [f"samples/{s.source_id}_{role}.raster" for role in _ROLES]
            for path, img in zip(paths, (s.ms_lr, s.pan_lr, s.ms_ref)):
                save_raster(img, out_dir / path, dtype="f32")
            lines.write("\t".join([split] + paths + [s.source_id]) + "\n")
    manifest_path = out_dir / "manifest.txt"
    manifest_path.write_text(lines.getvalue(), encoding="ascii")
    return manifest_path


def read_dataset(manifest_path):
    """Load a written dataset back into memory."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    text = manifest_path.read_text(encoding="ascii")
    rows = text.splitlines()
    if not rows or rows[0] != "wald-manifest v1":
        raise ValueError(f"read_dataset: {manifest_path} is not a wald-manifest v1 file")
    meta = {}
    samples = {"train": [], "val": []}
    for row in rows[1:]:
        if row.startswith("# "):
            key, _, value = row[2:].partition(" ")
            meta[key] = value
            continue
        split, p_ms, p_pan, p_ref, sid = row.split("\t")
        if split not in samples:
            raise ValueError(f"read_dataset: unknown split {split!r} in {manifest_path}")
        samples[split].append(
            SamplePair(
                source_id=sid,
                ms_lr=load_raster(base / p_ms),
                pan_lr=load_raster(base / p_pan),
                ms_ref=load_raster(base / p_ref),
            )
        )
    cfg = WaldConfig(
        r=int(meta["r"]),
        patch=int(meta["patch"]),
        stride=int(meta["stride"]),
        train_fraction=float(meta["train_fraction"]),
        seed=int(meta["seed"]),
    )
    return DatasetManifest(config=cfg, train=samples["train"], val=samples["val"])
