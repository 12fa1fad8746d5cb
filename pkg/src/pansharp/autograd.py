"""Dense tensors with reverse-mode automatic differentiation.

The op set covers exactly what the fusion network needs: 2-D and 1-D
cross-correlation, bicubic resampling as a fixed linear map, global pooling
statistics, pointwise arithmetic/activations, channel concatenation, and an
L1 objective. The tape is per-graph and consumed by `backward`; calling
`backward` twice on the same graph without re-running the forward pass is
rejected.

Convolutions are lowered to im2col + matmul so the heavy lifting runs in
BLAS; their backward passes scatter-add back through the same window
geometry.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .resample import resize_matrix

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the context (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_float_array(data, dtype):
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype.kind != "f":
        arr = arr.astype(np.float32)
    if arr.dtype not in (np.float32, np.float64):
        raise TypeError(f"tensor dtype must be float32 or float64, got {arr.dtype}")
    return arr


class Tensor:
    """N-d float array plus optional participation in the gradient tape.

    `data` is never mutated by ops; `grad` is allocated lazily the first time
    the tape reaches a leaf that requires gradients.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_float_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numel(self):
        return int(self.data.size)

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(())[()])

    def detach(self):
        """Same buffer, off the tape."""
        return Tensor(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype.name}{flag})"


def zeros_like(t):
    return Tensor(np.zeros_like(t.data))


def _on_tape(t):
    return t.requires_grad or t._backward is not None


def _record(out_data, parents, backward_fn):
    out = Tensor(out_data)
    if _grad_enabled and any(_on_tape(p) for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def backward(loss):
    """Reverse-mode sweep from a scalar `loss`; accumulates into leaf .grad.

    Consumes the tape: intermediate closures are dropped as they are applied,
    and a second call on the same graph raises.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise RuntimeError("backward called twice on the same graph; re-run the forward pass first")

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is not None:
            for parent, contrib in node._backward(g):
                if contrib is None:
                    continue
                held = grads.get(id(parent))
                if held is None:
                    grads[id(parent)] = contrib
                else:
                    held += contrib
            node._backward = None
            node._parents = ()
        elif node.requires_grad:
            if node.grad is None:
                node.grad = g.astype(node.data.dtype, copy=True)
            else:
                node.grad += g
    loss._consumed = True


def _check_binary(a, b, op_name):
    if a.shape != b.shape:
        raise ValueError(f"{op_name}: shape mismatch {a.shape} vs {b.shape}")
    if a.data.dtype != b.data.dtype:
        raise TypeError(f"{op_name}: dtype mismatch {a.data.dtype} vs {b.data.dtype}")


def add(a, b):
    _check_binary(a, b, "add")

    def bw(g):
        return ((a, g), (b, g.copy()))

    return _record(a.data + b.data, (a, b), bw)


def mul(a, b):
    _check_binary(a, b, "mul")

    def bw(g):
        return ((a, g * b.data), (b, g * a.data))

    return _record(a.data * b.data, (a, b), bw)


def relu(x):
    mask = x.data > 0

    def bw(g):
        return ((x, g * mask),)

    return _record(np.where(mask, x.data, 0), (x,), bw)


def sigmoid(x):
    # exp only ever sees non-positive arguments, so no overflow for large |x|
    z = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.data.dtype)

    def bw(g):
        return ((x, g * y * (1.0 - y)),)

    return _record(y, (x,), bw)


def tanh(x):
    y = np.tanh(x.data)

    def bw(g):
        return ((x, g * (1.0 - y * y)),)

    return _record(y, (x,), bw)


def reshape(x, shape):
    out_data = x.data.reshape(shape)

    def bw(g):
        return ((x, g.reshape(x.shape)),)

    return _record(out_data, (x,), bw)


def concat_channels(tensors):
    """Concatenate 4-D (N, C, H, W) tensors along the channel axis."""
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat_channels: need at least one tensor")
    first = tensors[0]
    for t in tensors:
        if t.ndim != 4:
            raise ValueError(f"concat_channels: expected 4-D tensors, got shape {t.shape}")
        if t.shape[0] != first.shape[0] or t.shape[2:] != first.shape[2:]:
            raise ValueError(f"concat_channels: incompatible shapes {first.shape} vs {t.shape}")
        if t.data.dtype != first.data.dtype:
            raise TypeError(f"concat_channels: dtype mismatch {first.data.dtype} vs {t.data.dtype}")
    sizes = [t.shape[1] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(
            (t, g[:, offsets[i]:offsets[i + 1]].copy()) for i, t in enumerate(tensors)
        )

    return _record(np.concatenate([t.data for t in tensors], axis=1), tensors, bw)


def global_avg_pool(x):
    """(N, C, H, W) -> (N, C) per-channel spatial mean."""
    if x.ndim != 4:
        raise ValueError(f"global_avg_pool: expected 4-D input, got shape {x.shape}")
    n, c, h, w = x.shape
    out_data = x.data.mean(axis=(2, 3))

    def bw(g):
        gx = np.broadcast_to((g / (h * w))[:, :, None, None], x.shape)
        return ((x, np.ascontiguousarray(gx)),)

    return _record(out_data, (x,), bw)


def global_var_pool(x):
    """(N, C, H, W) -> (N, 1, H, W) per-pixel channel variance, divisor C.

    Channel 0 is subtracted before taking moments: variance is translation
    invariant, and this keeps the result exactly zero wherever all channels
    agree bit-for-bit.
    """
    if x.ndim != 4:
        raise ValueError(f"global_var_pool: expected 4-D input, got shape {x.shape}")
    c = x.shape[1]
    shifted = x.data - x.data[:, :1]
    dev = shifted - shifted.mean(axis=1, keepdims=True)
    out_data = np.mean(dev * dev, axis=1, keepdims=True)

    def bw(g):
        return ((x, g * (2.0 / c) * dev),)

    return _record(out_data, (x,), bw)


def channel_mean(x):
    """(N, C, H, W) -> (N, 1, H, W) mean over channels."""
    if x.ndim != 4:
        raise ValueError(f"channel_mean: expected 4-D input, got shape {x.shape}")
    c = x.shape[1]
    out_data = x.data.mean(axis=1, keepdims=True)

    def bw(g):
        gx = np.broadcast_to(g / c, x.shape)
        return ((x, np.ascontiguousarray(gx)),)

    return _record(out_data, (x,), bw)


def broadcast_mul_channel(x, mask):
    """Scale (N, C, H, W) activations by a per-channel (N, C) mask."""
    if x.ndim != 4 or mask.ndim != 2:
        raise ValueError(
            f"broadcast_mul_channel: expected 4-D x and 2-D mask, got {x.shape} and {mask.shape}"
        )
    if mask.shape != x.shape[:2]:
        raise ValueError(f"broadcast_mul_channel: mask {mask.shape} does not match x {x.shape}")
    if x.data.dtype != mask.data.dtype:
        raise TypeError(f"broadcast_mul_channel: dtype mismatch {x.data.dtype} vs {mask.data.dtype}")
    m4 = mask.data[:, :, None, None]

    def bw(g):
        return ((x, g * m4), (mask, (g * x.data).sum(axis=(2, 3))))

    return _record(x.data * m4, (x, mask), bw)


def broadcast_mul_spatial(x, mask):
    """Scale (N, C, H, W) activations by a per-pixel (N, 1, H, W) mask."""
    if x.ndim != 4 or mask.ndim != 4:
        raise ValueError(
            f"broadcast_mul_spatial: expected 4-D x and mask, got {x.shape} and {mask.shape}"
        )
    if mask.shape != (x.shape[0], 1, x.shape[2], x.shape[3]):
        raise ValueError(f"broadcast_mul_spatial: mask {mask.shape} does not match x {x.shape}")
    if x.data.dtype != mask.data.dtype:
        raise TypeError(f"broadcast_mul_spatial: dtype mismatch {x.data.dtype} vs {mask.data.dtype}")

    def bw(g):
        return ((x, g * mask.data), (mask, (g * x.data).sum(axis=1, keepdims=True)))

    return _record(x.data * mask.data, (x, mask), bw)


def tensor_sum(x):
    """Sum all elements to a scalar tensor."""
    out_data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def bw(g):
        return ((x, np.full(x.shape, g.reshape(())[()], dtype=x.data.dtype)),)

    return _record(out_data, (x,), bw)


def l1_loss(pred, target):
    """Mean absolute error, scalar output."""
    _check_binary(pred, target, "l1_loss")
    diff = pred.data - target.data
    out_data = np.asarray(np.abs(diff).mean(), dtype=pred.data.dtype)
    n = diff.size

    def bw(g):
        s = np.sign(diff) * (g.reshape(())[()] / n)
        return ((pred, s.astype(pred.data.dtype)), (target, -s.astype(pred.data.dtype)))

    return _record(out_data, (pred, target), bw)


@dataclass(frozen=True)
class ConvSpec:
    """Static geometry of a 2-D convolution layer."""

    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    pad_h: int = 0
    pad_w: int = 0
    has_bias: bool = True

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel_h", "kernel_w", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"ConvSpec: {name} must be >= 1, got {getattr(self, name)}")
        if self.pad_h < 0 or self.pad_w < 0:
            raise ValueError(f"ConvSpec: padding must be non-negative, got ({self.pad_h}, {self.pad_w})")

    def out_size(self, h, w):
        oh = (h + 2 * self.pad_h - self.kernel_h) // self.stride + 1
        ow = (w + 2 * self.pad_w - self.kernel_w) // self.stride + 1
        if oh < 1:
            raise ValueError(f"ConvSpec: output height {oh} < 1 for input height {h}")
        if ow < 1:
            raise ValueError(f"ConvSpec: output width {ow} < 1 for input width {w}")
        return oh, ow


def conv2d(x, spec, weight, bias=None):
    """2-D cross-correlation of (N, Cin, H, W) with (Cout, Cin, kh, kw) weights.

    Lowered to im2col + matmul. Padding is zero-fill; output spatial size is
    floor((in + 2*pad - kernel) / stride) + 1.
    """
    if x.ndim != 4:
        raise ValueError(f"conv2d: expected 4-D input, got shape {x.shape}")
    n, cin, h, w = x.shape
    if cin != spec.in_channels:
        raise ValueError(f"conv2d: input has {cin} channels, spec expects {spec.in_channels}")
    wshape = (spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w)
    if weight.shape != wshape:
        raise ValueError(f"conv2d: weight shape {weight.shape} does not match spec {wshape}")
    if spec.has_bias:
        if bias is None:
            raise ValueError("conv2d: spec declares a bias but none was given")
        if bias.shape != (spec.out_channels,):
            raise ValueError(f"conv2d: bias shape {bias.shape}, expected ({spec.out_channels},)")
        if bias.data.dtype != x.data.dtype:
            raise TypeError(f"conv2d: bias dtype {bias.data.dtype} vs input {x.data.dtype}")
    elif bias is not None:
        raise ValueError("conv2d: spec declares no bias but one was given")
    if weight.data.dtype != x.data.dtype:
        raise TypeError(f"conv2d: weight dtype {weight.data.dtype} vs input {x.data.dtype}")

    oh, ow = spec.out_size(h, w)
    s = spec.stride
    ph, pw = spec.pad_h, spec.pad_w
    kh, kw = spec.kernel_h, spec.kernel_w

    xp = x.data
    if ph or pw:
        xp = np.pad(xp, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    # (N, Cin, oh, ow, kh, kw) -> (N*oh*ow, Cin*kh*kw)
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * oh * ow, cin * kh * kw
    )
    wmat = weight.data.reshape(spec.out_channels, -1)
    out = cols @ wmat.T
    if spec.has_bias:
        out = out + bias.data
    out_data = out.reshape(n, oh, ow, spec.out_channels).transpose(0, 3, 1, 2)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * oh * ow, spec.out_channels)
        gw = (gmat.T @ cols).reshape(weight.shape)
        gcols = (gmat @ wmat).reshape(n, oh, ow, cin, kh, kw)
        gxp = np.zeros((n, cin, h + 2 * ph, w + 2 * pw), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + s * oh:s, j:j + s * ow:s] += gcols[:, :, :, :, i, j].transpose(
                    0, 3, 1, 2
                )
        gx = gxp[:, :, ph:ph + h, pw:pw + w]
        if not gx.flags.owndata:
            gx = gx.copy()
        grads = [(x, gx), (weight, gw)]
        if bias is not None:
            grads.append((bias, g.sum(axis=(0, 2, 3))))
        return grads

    return _record(np.ascontiguousarray(out_data), parents, bw)


def conv1d(x, weight):
    """1-D cross-correlation over the channel axis of a (N, 1, C) descriptor.

    Kernel length comes from `weight` and must be odd; zero padding of
    (k - 1) / 2 on both ends preserves the length.
    """
    if x.ndim != 3 or x.shape[1] != 1:
        raise ValueError(f"conv1d: expected (N, 1, C) input, got shape {x.shape}")
    if weight.ndim != 1:
        raise ValueError(f"conv1d: expected 1-D weight, got shape {weight.shape}")
    k = weight.shape[0]
    if k % 2 != 1:
        raise ValueError(f"conv1d: kernel length must be odd, got {k}")
    if weight.data.dtype != x.data.dtype:
        raise TypeError(f"conv1d: weight dtype {weight.data.dtype} vs input {x.data.dtype}")
    n, _, c = x.shape
    r = k // 2
    xp = np.pad(x.data[:, 0, :], ((0, 0), (r, r)))
    windows = sliding_window_view(xp, k, axis=1)   # (N, C, k)
    out_data = (windows @ weight.data).reshape(n, 1, c)

    def bw(g):
        g2 = g[:, 0, :]
        gw = np.tensordot(g2, windows, axes=((0, 1), (0, 1)))
        gxp = np.zeros_like(xp)
        for i in range(k):
            gxp[:, i:i + c] += g2 * weight.data[i]
        gx = gxp[:, r:r + c].reshape(x.shape)
        if not gx.flags.owndata:
            gx = gx.copy()
        return ((x, gx), (weight, gw))

    return _record(out_data, (x, weight), bw)


_RESIZE_CACHE = {}


def _cached_resize_matrix(n_in, n_out, dtype):
    key = (n_in, n_out, np.dtype(dtype).str)
    mat = _RESIZE_CACHE.get(key)
    if mat is None:
        mat = resize_matrix(n_in, n_out).astype(dtype)
        _RESIZE_CACHE[key] = mat
    return mat


def bicubic_resize(x, scale):
    """Bicubic resample of (N, C, H, W) by a fixed factor; differentiable.

    The resample is a constant linear map (a resize matrix per axis), so the
    backward pass is the transposed map.
    """
    if x.ndim != 4:
        raise ValueError(f"bicubic_resize: expected 4-D input, got shape {x.shape}")
    if scale <= 0:
        raise ValueError(f"bicubic_resize: scale must be positive, got {scale}")
    n, c, h, w = x.shape
    oh_f, ow_f = h * scale, w * scale
    oh, ow = int(round(oh_f)), int(round(ow_f))
    if abs(oh_f - oh) > 1e-9 or abs(ow_f - ow) > 1e-9 or oh < 1 or ow < 1:
        raise ValueError(f"bicubic_resize: scale {scale} does not map ({h}, {w}) to integer sizes")
    mh = _cached_resize_matrix(h, oh, x.data.dtype)
    mw = _cached_resize_matrix(w, ow, x.data.dtype)
    tmp = np.tensordot(x.data, mh, axes=((2,), (1,)))      # (N, C, W, oh)
    out_data = np.tensordot(tmp, mw, axes=((2,), (1,)))    # (N, C, oh, ow)

    def bw(g):
        t = np.tensordot(g, mh, axes=((2,), (0,)))         # (N, C, ow, H)
        gx = np.tensordot(t, mw, axes=((2,), (0,)))        # (N, C, H, W)
        return ((x, np.ascontiguousarray(gx)),)

    return _record(np.ascontiguousarray(out_data), (x,), bw)
