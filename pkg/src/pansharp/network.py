"""Three-stream hierarchical fusion network for pan-sharpening.

Streams:
  * multispectral stream: upsampled MS through channel-attention residual blocks,
  * panchromatic stream: PAN through multi-scale blocks with spatial attention,
  * joint stream: plain residual blocks fed by the previous fused level.

Every level's stream outputs are fused elementwise; all fused levels are
aggregated by channel concatenation and a 1x1 convolution, and a final 3x3
convolution with tanh produces the 4-band residual-free output in [-1, 1].

Level layout for B expert blocks: levels 0 and 1 come from the stream heads
(two stacked 3x3 convolutions per stream; the joint stream is born from fused
level 0), levels 2 .. B+1 from the expert blocks, giving B+2 fused levels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import (
    ConvSpec,
    add,
    bicubic_resize,
    broadcast_mul_channel,
    broadcast_mul_spatial,
    channel_mean,
    concat_channels,
    conv1d,
    conv2d,
    global_avg_pool,
    global_var_pool,
    relu,
    reshape,
    sigmoid,
    tanh,
    zeros_like,
)
from .optim import Parameter

MS_BANDS = 4

ABLATION_CHOICES = ("none", "no-rsab", "no-rmsab")


def parse_disconnect(spec_text, max_level):
    """Parse 'disconnect=2,5,7' into a frozenset of fusion levels."""
    body = spec_text.partition("=")[2]
    if not body:
        raise ValueError(f"ablation: empty disconnect list in {spec_text!r}")
    levels = []
    for part in body.split(","):
        try:
            level = int(part)
        except ValueError:
            raise ValueError(f"ablation: bad disconnect level {part!r} in {spec_text!r}") from None
        if not 0 <= level <= max_level:
            raise ValueError(
                f"ablation: disconnect level {level} outside [0, {max_level}]"
            )
        levels.append(level)
    return frozenset(levels)


@dataclass(frozen=True)
class FusionConfig:
    """Architecture hyperparameters.

    ablation: "none", "no-rsab" (channel attention off, plain residual blocks
    in the MS stream), "no-rmsab" (same for the PAN stream), or
    "disconnect=i,j,..." (listed fusion levels pass only the joint stream
    through).
    """

    blocks: int = 9
    channels: int = 64
    spectral_kernel: int = 3
    attention_kernel: int = 7
    scale: int = 4
    ablation: str = "none"

    def __post_init__(self):
        if self.blocks < 1:
            raise ValueError(f"FusionConfig: blocks must be >= 1, got {self.blocks}")
        if self.channels < 1:
            raise ValueError(f"FusionConfig: channels must be >= 1, got {self.channels}")
        for name in ("spectral_kernel", "attention_kernel"):
            k = getattr(self, name)
            if k < 1 or k % 2 != 1:
                raise ValueError(f"FusionConfig: {name} must be odd and >= 1, got {k}")
        if self.scale < 1:
            raise ValueError(f"FusionConfig: scale must be >= 1, got {self.scale}")
        self.disconnect_levels()   # validates the ablation string

    @property
    def levels(self):
        """Number of fused levels (two head levels + one per expert block)."""
        return self.blocks + 2

    def disconnect_levels(self):
        if self.ablation.startswith("disconnect="):
            return parse_disconnect(self.ablation, self.levels - 1)
        if self.ablation not in ABLATION_CHOICES:
            raise ValueError(
                f"FusionConfig: unknown ablation {self.ablation!r}; expected one of "
                f"{ABLATION_CHOICES} or 'disconnect=...'"
            )
        return frozenset()

    def to_dict(self):
        return {
            "blocks": self.blocks,
            "channels": self.channels,
            "spectral_kernel": self.spectral_kernel,
            "attention_kernel": self.attention_kernel,
            "scale": self.scale,
            "ablation": self.ablation,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _he_weight(rng, shape, fan_in, dtype):
    std = np.sqrt(2.0 / fan_in)
    return Parameter((rng.standard_normal(shape) * std).astype(dtype))


class Conv2dLayer:
    """Stride-1 convolution with 'same' zero padding and He-initialized weights."""

    def __init__(self, rng, cin, cout, kernel, dtype, bias=True):
        kh, kw = kernel if isinstance(kernel, tuple) else (kernel, kernel)
        self.spec = ConvSpec(
            in_channels=cin, out_channels=cout, kernel_h=kh, kernel_w=kw,
            stride=1, pad_h=(kh - 1) // 2, pad_w=(kw - 1) // 2, has_bias=bias,
        )
        self.weight = _he_weight(rng, (cout, cin, kh, kw), cin * kh * kw, dtype)
        self.bias = Parameter(np.zeros(cout, dtype=dtype)) if bias else None

    def __call__(self, x):
        return conv2d(x, self.spec, self.weight, self.bias)

    def named(self, prefix):
        yield f"{prefix}.weight", self.weight
        if self.bias is not None:
            yield f"{prefix}.bias", self.bias


class SpectralAttentionBlock:
    """Residual block with channel attention from the pooled spectral descriptor.

    body: 3x3 conv + relu. A 1-D convolution over the per-channel means gives
    a sigmoid gate per channel; the gated body is added back to the input.
    """

    def __init__(self, rng, channels, spectral_kernel, dtype):
        self.body = Conv2dLayer(rng, channels, channels, 3, dtype)
        self.attn = _he_weight(rng, (spectral_kernel,), spectral_kernel, dtype)

    def __call__(self, f):
        h = relu(self.body(f))
        n, c = h.shape[0], h.shape[1]
        desc = reshape(global_avg_pool(h), (n, 1, c))
        gate = reshape(sigmoid(conv1d(desc, self.attn)), (n, c))
        return add(broadcast_mul_channel(h, gate), f)

    def named(self, prefix):
        yield from self.body.named(f"{prefix}.body")
        yield f"{prefix}.attn.weight", self.attn


class MultiScaleSpatialAttentionBlock:
    """Residual block with asymmetric multi-scale branches and spatial attention.

    Branches: 1x1, 1x3+3x1, 1x5+5x1 (each relu'd), concatenated and fused by a
    1x1 conv. The spatial gate is a sigmoid conv over the concatenation of the
    per-pixel channel variance and channel mean maps.
    """

    def __init__(self, rng, channels, attention_kernel, dtype):
        self.b1 = Conv2dLayer(rng, channels, channels, 1, dtype)
        self.b3a = Conv2dLayer(rng, channels, channels, (1, 3), dtype)
        self.b3b = Conv2dLayer(rng, channels, channels, (3, 1), dtype)
        self.b5a = Conv2dLayer(rng, channels, channels, (1, 5), dtype)
        self.b5b = Conv2dLayer(rng, channels, channels, (5, 1), dtype)
        self.fuse = Conv2dLayer(rng, 3 * channels, channels, 1, dtype)
        self.attn = Conv2dLayer(rng, 2, 1, attention_kernel, dtype, bias=False)

    def __call__(self, f):
        p1 = relu(self.b1(f))
        p3 = relu(self.b3b(relu(self.b3a(f))))
        p5 = relu(self.b5b(relu(self.b5a(f))))
        h = relu(self.fuse(concat_channels([p1, p3, p5])))
        stats = concat_channels([global_var_pool(h), channel_mean(h)])
        gate = sigmoid(self.attn(stats))
        return add(broadcast_mul_spatial(h, gate), f)

    def named(self, prefix):
        for sub in ("b1", "b3a", "b3b", "b5a", "b5b", "fuse", "attn"):
            yield from getattr(self, sub).named(f"{prefix}.{sub}")


class ResidualBlock:
    """conv-relu-conv with identity skip."""

    def __init__(self, rng, channels, dtype):
        self.conv1 = Conv2dLayer(rng, channels, channels, 3, dtype)
        self.conv2 = Conv2dLayer(rng, channels, channels, 3, dtype)

    def __call__(self, f):
        return add(self.conv2(relu(self.conv1(f))), f)

    def named(self, prefix):
        yield from self.conv1.named(f"{prefix}.conv1")
        yield from self.conv2.named(f"{prefix}.conv2")


def fuse_level(f_ms, f_pan, f_joint, level, disconnect=frozenset()):
    """Elementwise sum of the three stream features at one level.

    A disconnected level passes `f_joint` through unchanged (bit-identical),
    severing the MS/PAN contribution there.
    """
    if level in disconnect:
        return f_joint
    return add(add(f_ms, f_pan), f_joint)


class FusionNet:
    """The full model. Construction draws He-initialized weights from `seed`."""

    def __init__(self, cfg, seed=0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        if self.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise TypeError(f"FusionNet: dtype must be float32 or float64, got {dtype}")
        rng = np.random.default_rng(seed)
        c = cfg.channels
        dt = self.dtype

        self.upsample_conv = Conv2dLayer(rng, MS_BANDS, MS_BANDS, 3, dt)
        self.ms_head = [Conv2dLayer(rng, MS_BANDS, c, 3, dt), Conv2dLayer(rng, c, c, 3, dt)]
        self.pan_head = [Conv2dLayer(rng, 1, c, 3, dt), Conv2dLayer(rng, c, c, 3, dt)]
        self.joint_head = Conv2dLayer(rng, c, c, 3, dt)

        if cfg.ablation == "no-rsab":
            self.ms_blocks = [ResidualBlock(rng, c, dt) for _ in range(cfg.blocks)]
        else:
            self.ms_blocks = [
                SpectralAttentionBlock(rng, c, cfg.spectral_kernel, dt)
                for _ in range(cfg.blocks)
            ]
        if cfg.ablation == "no-rmsab":
            self.pan_blocks = [ResidualBlock(rng, c, dt) for _ in range(cfg.blocks)]
        else:
            self.pan_blocks = [
                MultiScaleSpatialAttentionBlock(rng, c, cfg.attention_kernel, dt)
                for _ in range(cfg.blocks)
            ]
        self.joint_blocks = [ResidualBlock(rng, c, dt) for _ in range(cfg.blocks)]

        self.aggregate = Conv2dLayer(rng, cfg.levels * c, c, 1, dt)
        self.output = Conv2dLayer(rng, c, MS_BANDS, 3, dt)
        self._disconnect = cfg.disconnect_levels()

    def named_parameters(self):
        out = {}

        def take(pairs):
            for name, p in pairs:
                out[name] = p

        take(self.upsample_conv.named("upsample.conv"))
        for i, layer in enumerate(self.ms_head):
            take(layer.named(f"ms.head.{i}"))
        for i, layer in enumerate(self.pan_head):
            take(layer.named(f"pan.head.{i}"))
        take(self.joint_head.named("joint.head"))
        for i, block in enumerate(self.ms_blocks):
            take(block.named(f"ms.block.{i}"))
        for i, block in enumerate(self.pan_blocks):
            take(block.named(f"pan.block.{i}"))
        for i, block in enumerate(self.joint_blocks):
            take(block.named(f"joint.block.{i}"))
        take(self.aggregate.named("aggregate"))
        take(self.output.named("output"))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def param_count(self):
        return sum(p.numel() for p in self.parameters())

    def upsample(self, ms):
        """Bicubic upsample by the scale factor, refined by one 3x3 convolution."""
        return self.upsample_conv(bicubic_resize(ms, self.cfg.scale))

    def forward(self, ms, pan):
        """(N, 4, h, w) MS and (N, 1, r*h, r*w) PAN -> (N, 4, r*h, r*w) in [-1, 1]."""
        if ms.ndim != 4 or ms.shape[1] != MS_BANDS:
            raise ValueError(f"forward: MS must be (N, {MS_BANDS}, h, w), got {ms.shape}")
        if pan.ndim != 4 or pan.shape[1] != 1:
            raise ValueError(f"forward: PAN must be (N, 1, H, W), got {pan.shape}")
        if pan.shape[0] != ms.shape[0]:
            raise ValueError(
                f"forward: batch mismatch, MS has {ms.shape[0]} and PAN has {pan.shape[0]}"
            )
        r = self.cfg.scale
        if pan.shape[2] != r * ms.shape[2] or pan.shape[3] != r * ms.shape[3]:
            raise ValueError(
                f"forward: PAN size {pan.shape[2]}x{pan.shape[3]} is not {r}x the "
                f"MS size {ms.shape[2]}x{ms.shape[3]}"
            )
        if ms.data.dtype != self.dtype or pan.data.dtype != self.dtype:
            raise TypeError(
                f"forward: inputs must be {self.dtype}, got {ms.data.dtype} and {pan.data.dtype}"
            )
        disconnect = self._disconnect

        ms_up = self.upsample(ms)
        f_ms = self.ms_head[0](ms_up)
        f_pan = self.pan_head[0](pan)
        fused = [fuse_level(f_ms, f_pan, zeros_like(f_ms), 0, disconnect)]

        f_ms = self.ms_head[1](relu(f_ms))
        f_pan = self.pan_head[1](relu(f_pan))
        f_joint = self.joint_head(fused[0])
        fused.append(fuse_level(f_ms, f_pan, f_joint, 1, disconnect))

        for i in range(self.cfg.blocks):
            f_ms = self.ms_blocks[i](f_ms)
            f_pan = self.pan_blocks[i](f_pan)
            f_joint = self.joint_blocks[i](fused[-1])
            fused.append(fuse_level(f_ms, f_pan, f_joint, i + 2, disconnect))

        agg = self.aggregate(concat_channels(fused))
        return tanh(self.output(agg))

    def __call__(self, ms, pan):
        return self.forward(ms, pan)

    def set_parameters(self, named_values):
        """Overwrite parameter buffers from {name: array}; names must match exactly."""
        params = self.named_parameters()
        missing = sorted(set(params) - set(named_values))
        extra = sorted(set(named_values) - set(params))
        if missing or extra:
            raise ValueError(
                f"set_parameters: name mismatch (missing {missing[:3]}, extra {extra[:3]}, "
                f"{len(missing)} missing / {len(extra)} extra total)"
            )
        for name, p in params.items():
            arr = np.asarray(named_values[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"set_parameters: {name} has shape {arr.shape}, expected {p.data.shape}"
                )
            p.data[...] = arr
