"""
Simulating training data from a single scene
============================================

Real reference data for fusion does not exist: there is no sensor that
captures the high-resolution multispectral truth. The standard workaround
degrades both inputs by the resolution ratio r, so the original MS becomes
the reference. This script builds a synthetic scene in digital numbers,
runs the simulation, and inspects the resulting dataset.
"""

from pathlib import Path

import numpy as np

from pansharp.raster import RasterImage, export_png8, save_raster
from pansharp.wald import WaldConfig, make_dataset, read_dataset, write_dataset

out_dir = Path("demo_output/wald")
out_dir.mkdir(parents=True, exist_ok=True)

# --- a synthetic scene in digital numbers ------------------------------------
# 4 sinusoid bands at 256x256 plus a 1024x1024 pan; 11-bit range like a
# typical satellite product.

peak = float(2 ** 11 - 1)
size = 256
axis = np.linspace(0, 6.0, size)
yy, xx = np.meshgrid(axis, axis, indexing="ij")
ms = np.stack(
    [(np.sin(yy * (i + 1)) * np.cos(xx * (i + 2)) * 0.45 + 0.5) for i in range(4)]
) * peak

axis_hi = np.linspace(0, 6.0, size * 4)
yy2, xx2 = np.meshgrid(axis_hi, axis_hi, indexing="ij")
pan = ((np.sin(yy2 * 2.5) * np.cos(xx2 * 1.5) * 0.45 + 0.5) * peak)[None]

ms_img = RasterImage(ms.astype(np.float32), bit_depth=11)
pan_img = RasterImage(pan.astype(np.float32), bit_depth=11)
save_raster(ms_img, out_dir / "scene_ms.raster", dtype="u16")
save_raster(pan_img, out_dir / "scene_pan.raster", dtype="u16")
print("scene: MS", ms_img.data.shape, "PAN", pan_img.data.shape, "peak", peak)

# --- degrade, patch, split ----------------------------------------------------
# make_dataset normalizes to [-1, 1], low-passes with a Gaussian matched to
# the ratio, decimates bicubically, cuts patches, and shuffles them into a
# train/val split.

cfg = WaldConfig(r=4, patch=64, train_fraction=0.875, seed=0)
manifest = make_dataset(ms_img, pan_img, cfg)
print("samples:", len(manifest.train), "train +", len(manifest.val), "val")

sample = manifest.train[0]
print("one sample:", sample.source_id)
print("  ms_lr ", sample.ms_lr.data.shape, " input MS, degraded by r")
print("  pan_lr", sample.pan_lr.data.shape, " input PAN, degraded by r")
print("  ms_ref", sample.ms_ref.data.shape, " reference, the original MS patch")
lo, hi = sample.ms_ref.data.min(), sample.ms_ref.data.max()
print(f"  reference range [{lo:.3f}, {hi:.3f}] inside [-1, 1]")

# --- persist and reload -------------------------------------------------------
# write_dataset saves every sample plus a manifest; the manifest is plain
# text with relative paths, so the directory can be moved around.

manifest_path = write_dataset(manifest, out_dir / "dataset")
reloaded = read_dataset(manifest_path)
print("manifest:", manifest_path)
print("reloaded:", len(reloaded.train), "train +", len(reloaded.val), "val")

# an 8-bit preview of the reference patch for a quick look
export_png8(sample.ms_ref, (0, 1, 2), out_dir / "reference_patch.png")
print("wrote", out_dir / "reference_patch.png")
