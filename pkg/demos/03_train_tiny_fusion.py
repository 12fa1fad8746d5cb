"""
Training a tiny fusion model
============================

End-to-end run of the training loop on a small simulated dataset: build a
scene, simulate, train a reduced model for a couple of minutes, and score
the result against the held-out validation patches. The full-size recipe
(9 blocks, 64 channels, 350 epochs) uses exactly the same code, just
bigger numbers.
"""

from pathlib import Path

import numpy as np

from pansharp.network import FusionConfig
from pansharp.raster import RasterImage
from pansharp.train import TrainConfig, evaluate, train
from pansharp.wald import WaldConfig, make_dataset

out_dir = Path("demo_output/training")
out_dir.mkdir(parents=True, exist_ok=True)

# --- data: one synthetic scene, 16 patches -----------------------------------
# The PAN is the spectral average of the same scene, so its fine texture is
# real information about the reference the model is asked to reproduce.

peak = float(2 ** 11 - 1)
size = 128


def scene_fields(size):
    axis = np.linspace(0, 5.0, size)
    yy, xx = np.meshgrid(axis, axis, indexing="ij")
    texture = 0.12 * np.sin(yy * 17.0) * np.cos(xx * 13.0)
    return np.stack(
        [
            np.sin(yy * (i + 1.3)) * np.cos(xx * (i + 0.7)) * 0.3 + 0.5 + texture
            for i in range(4)
        ]
    )


ms = scene_fields(size) * peak
pan = scene_fields(size * 4).mean(axis=0, keepdims=True) * peak

manifest = make_dataset(
    RasterImage(ms.astype(np.float32), bit_depth=11),
    RasterImage(pan.astype(np.float32), bit_depth=11),
    WaldConfig(r=4, patch=32, train_fraction=0.875, seed=0),
)
print("dataset:", len(manifest.train), "train +", len(manifest.val), "val patches")

# --- model and schedule -------------------------------------------------------
# 1 block and 8 channels instead of 9 and 64; short schedule with the decay
# dropped in proportionally. Loss is L1, optimizer is Adam(0.7, 0.99).

net_cfg = FusionConfig(blocks=1, channels=8)
train_cfg = TrainConfig(
    epochs=40, batch_size=4, lr0=1e-3, decay_epoch=30, decay_factor=0.1, seed=0
)

net, history = train(manifest, net_cfg, train_cfg, out_dir / "run")
print("parameters:", net.param_count())
for stats in history[:: max(1, len(history) // 8)]:
    print(
        f"epoch {stats.epoch:3d}  lr {stats.lr:.1e}  "
        f"train_l1 {stats.train_l1:.4f}  val_l1 {stats.val_l1:.4f}"
    )

# --- scoring ------------------------------------------------------------------
# evaluate() runs the reference metric suite over samples and averages.

report = evaluate(net, manifest.val)
print("validation metrics after", train_cfg.epochs, "epochs:")
for name, value in report.values.items():
    print(f"  {name:<6s} {value:.4f}")

print("checkpoint written to", out_dir / "run" / "checkpoint_final.ckpt")
print("the loss trace is in", out_dir / "run" / "loss_log.txt")
