"""Seeded trainer: L1 objective, Adam, one-step learning-rate decay.

Determinism contract: with a fixed seed (and fixed thread environment) the
parameter trajectory is bit-exact, checkpoints serialize to identical bytes,
and a run resumed from a checkpoint finishes bit-identical to an
uninterrupted one. Per-epoch shuffling draws from a generator seeded with
(seed, epoch), so epoch k's batch order never depends on how the process got
to epoch k.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as _ckpt
from .autograd import Tensor, backward, l1_loss, no_grad
from .metrics import MetricReport, reference_report
from .network import FusionConfig, FusionNet
from .optim import adam_step

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised on a non-finite loss; `last_checkpoint` names the latest saved state."""

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule and run control."""

    epochs: int = 350
    batch_size: int = 64
    lr0: float = 1e-4
    decay_epoch: int = 150
    decay_factor: float = 0.1
    beta1: float = 0.7
    beta2: float = 0.99
    epsilon: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0    # 0: only the final checkpoint
    max_train_samples: int = 0   # 0: use every training sample
    max_val_samples: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"TrainConfig: epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"TrainConfig: batch_size must be >= 1, got {self.batch_size}")
        if self.lr0 <= 0:
            raise ValueError(f"TrainConfig: lr0 must be positive, got {self.lr0}")
        if self.decay_epoch < 1:
            raise ValueError(f"TrainConfig: decay_epoch must be >= 1, got {self.decay_epoch}")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError(f"TrainConfig: decay_factor must be in (0, 1], got {self.decay_factor}")

    def to_dict(self):
        return asdict(self)


def effective_lr(cfg, epoch):
    """lr0 until `decay_epoch`, then lr0 * decay_factor; exactly one decay step."""
    if epoch < 0:
        raise ValueError(f"effective_lr: epoch must be >= 0, got {epoch}")
    return cfg.lr0 * (cfg.decay_factor if epoch >= cfg.decay_epoch else 1.0)


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_l1: float
    val_l1: float
    val_psnr: float
    seconds: float


def _stack_samples(samples, limit, dtype):
    if limit:
        samples = samples[:limit]
    ms = np.stack([s.ms_lr.data for s in samples]).astype(dtype)
    pan = np.stack([s.pan_lr.data for s in samples]).astype(dtype)
    ref = np.stack([s.ms_ref.data for s in samples]).astype(dtype)
    return ms, pan, ref


def _forward_batched(net, ms, pan, batch_size):
    outs = []
    with no_grad():
        for lo in range(0, ms.shape[0], batch_size):
            hi = lo + batch_size
            outs.append(net(Tensor(ms[lo:hi]), Tensor(pan[lo:hi])).data)
    return np.concatenate(outs, axis=0)


# --- model checkpoints -------------------------------------------------------

def save_model(path, net, train_cfg=None, next_epoch=0, with_optimizer=False):
    """Serialize the network (optionally with Adam state) to `path`."""
    blobs = {}
    steps = {}
    for name, p in net.named_parameters().items():
        blobs[name] = p.data
        if with_optimizer:
            blobs[name + "::adam_m"] = p.adam_m
            blobs[name + "::adam_v"] = p.adam_v
            steps[name] = p.step_count
    config = dict(net.cfg.to_dict(), dtype=str(np.dtype(net.dtype).name))
    meta = {"next_epoch": int(next_epoch), "with_optimizer": bool(with_optimizer)}
    if with_optimizer:
        meta["steps"] = steps
    if train_cfg is not None:
        meta["train_config"] = train_cfg.to_dict()
    _ckpt.save_blobs(path, config, meta, blobs)


def load_model(path, expect_cfg=None):
    """Rebuild a FusionNet from a checkpoint; returns (net, meta).

    If `expect_cfg` is given, the stored architecture must match it exactly;
    a mismatch raises with both configs in the message.
    """
    config, meta, arrays = _ckpt.load_blobs(path)
    config = dict(config)
    dtype = np.dtype(config.pop("dtype", "float32"))
    cfg = FusionConfig.from_dict(config)
    if expect_cfg is not None and cfg != expect_cfg:
        raise ValueError(
            f"load_model: checkpoint architecture {cfg.to_dict()} does not match "
            f"the requested {expect_cfg.to_dict()}"
        )
    net = FusionNet(cfg, seed=0, dtype=dtype)
    net.set_parameters({k: v for k, v in arrays.items() if "::" not in k})
    if meta.get("with_optimizer"):
        steps = meta.get("steps", {})
        for name, p in net.named_parameters().items():
            p.adam_m[...] = arrays[name + "::adam_m"]
            p.adam_v[...] = arrays[name + "::adam_v"]
            p.step_count = int(steps[name])
    return net, meta


# --- training loop -----------------------------------------------------------

def train(manifest, net_cfg, train_cfg, out_dir, resume_from=None):
    """Train on a Wald dataset; returns (net, [EpochStats...]).

    Writes `loss_log.txt`, periodic checkpoints when configured, and
    `checkpoint_final.ckpt` (with optimizer state) into `out_dir`.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    ms_tr, pan_tr, ref_tr = _stack_samples(
        manifest.train, train_cfg.max_train_samples, np.float32
    )
    has_val = bool(manifest.val)
    if has_val:
        ms_va, pan_va, ref_va = _stack_samples(
            manifest.val, train_cfg.max_val_samples, np.float32
        )
    n_train = ms_tr.shape[0]
    if n_train < train_cfg.batch_size:
        raise ValueError(
            f"train: {n_train} training samples cannot fill one batch of "
            f"{train_cfg.batch_size}; lower batch_size"
        )

    if resume_from is not None:
        net, meta = load_model(resume_from, expect_cfg=net_cfg)
        if not meta.get("with_optimizer"):
            raise ValueError(f"train: {resume_from} has no optimizer state, cannot resume")
        start_epoch = int(meta["next_epoch"])
        if start_epoch >= train_cfg.epochs:
            raise ValueError(
                f"train: checkpoint is already at epoch {start_epoch} of {train_cfg.epochs}"
            )
    else:
        net = FusionNet(net_cfg, seed=train_cfg.seed, dtype=np.float32)
        start_epoch = 0

    params = net.parameters()
    log_path = out_dir / "loss_log.txt"
    log_mode = "a" if resume_from is not None else "w"
    history = []
    last_checkpoint = str(resume_from) if resume_from is not None else None

    with open(log_path, log_mode, encoding="ascii") as log_file:
        if log_mode == "w":
            log_file.write("epoch\tlr\ttrain_l1\tval_l1\tval_psnr\tseconds\n")
        for epoch in range(start_epoch, train_cfg.epochs):
            t0 = time.perf_counter()
            lr = effective_lr(train_cfg, epoch)
            order = np.random.default_rng((train_cfg.seed, epoch)).permutation(n_train)
            n_batches = n_train // train_cfg.batch_size
            losses = []
            for b in range(n_batches):
                idx = order[b * train_cfg.batch_size:(b + 1) * train_cfg.batch_size]
                pred = net(Tensor(ms_tr[idx]), Tensor(pan_tr[idx]))
                loss = l1_loss(pred, Tensor(ref_tr[idx]))
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, batch {b}; last good "
                        f"checkpoint: {last_checkpoint or 'none'}",
                        last_checkpoint=last_checkpoint,
                    )
                backward(loss)
                adam_step(
                    params, lr,
                    beta1=train_cfg.beta1, beta2=train_cfg.beta2, epsilon=train_cfg.epsilon,
                )
                losses.append(value)

            if has_val:
                pred_va = _forward_batched(net, ms_va, pan_va, train_cfg.batch_size)
                val_l1 = float(np.mean(np.abs(pred_va - ref_va)))
                val_psnr = float(
                    np.mean(
                        [
                            reference_report(pred_va[i], ref_va[i], net_cfg.scale).values["psnr"]
                            for i in range(pred_va.shape[0])
                        ]
                    )
                )
            else:
                val_l1 = float("nan")
                val_psnr = float("nan")

            stats = EpochStats(
                epoch=epoch,
                lr=lr,
                train_l1=float(np.mean(losses)),
                val_l1=val_l1,
                val_psnr=val_psnr,
                seconds=time.perf_counter() - t0,
            )
            history.append(stats)
            log_file.write(
                f"{stats.epoch}\t{stats.lr:.3e}\t{stats.train_l1:.6f}\t"
                f"{stats.val_l1:.6f}\t{stats.val_psnr:.4f}\t{stats.seconds:.3f}\n"
            )
            log_file.flush()
            logger.info(
                "epoch %d lr %.3e train_l1 %.6f val_l1 %.6f val_psnr %.4f (%.2fs)",
                stats.epoch, stats.lr, stats.train_l1, stats.val_l1, stats.val_psnr,
                stats.seconds,
            )

            if train_cfg.checkpoint_every and (epoch + 1) % train_cfg.checkpoint_every == 0:
                path = out_dir / f"checkpoint_epoch_{epoch:04d}.ckpt"
                save_model(path, net, train_cfg, next_epoch=epoch + 1, with_optimizer=True)
                last_checkpoint = str(path)

    final_path = out_dir / "checkpoint_final.ckpt"
    save_model(final_path, net, train_cfg, next_epoch=train_cfg.epochs, with_optimizer=True)
    return net, history


def evaluate(net, samples, selection=("psnr", "ssim", "sam", "ergas", "cc", "q4"), batch_size=8):
    """Mean reference metrics over `samples`; returns {metric: value}.

    `selection` picks which of the reference suite's values are reported.
    """
    if not samples:
        raise ValueError("evaluate: no samples given")
    ms, pan, ref = _stack_samples(list(samples), 0, np.float32)
    pred = _forward_batched(net, ms, pan, batch_size)
    sums = {name: 0.0 for name in selection}
    for i in range(pred.shape[0]):
        report = reference_report(pred[i], ref[i], net.cfg.scale)
        for name in selection:
            if name not in report.values:
                raise ValueError(f"evaluate: unknown metric {name!r}")
            sums[name] += report.values[name]
    values = {name: sums[name] / pred.shape[0] for name in selection}
    return MetricReport(kind="reference", values=values, details={"samples": pred.shape[0]})
