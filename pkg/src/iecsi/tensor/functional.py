"""Layer primitives built on the core tensor ops."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import (
    Tensor,
    UsageError,
    _lift,
    _make,
    _profile_hook,
    erf,
    exp,
    mean,
    reshape,
    sqrt,
    sum_,
    var,
)

__all__ = [
    "gelu",
    "leaky_relu",
    "softmax",
    "layer_norm",
    "batch_norm",
    "dropout",
    "linear",
    "conv2d",
    "deconv2d",
    "conv2d_weight_grad",
    "conv_output_size",
    "deconv_output_size",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Tensor) -> Tensor:
    """``x * Phi(x)`` with the exact normal CDF."""
    from scipy import special

    cdf = 0.5 * (1.0 + special.erf(x.data * _INV_SQRT2))

    def bw(g):
        c = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        pdf = exp(x * x * -0.5) * _INV_SQRT_2PI
        return (g * (c + x * pdf),)
    return _make("gelu", x.data * cdf.astype(x.dtype), (x,), bw)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return x * Tensor._wrap(scale)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shift = Tensor._wrap(x.data.max(axis=axis, keepdims=True))
    e = exp(x - shift)
    return e / sum_(e, axis, keepdims=True)


def layer_norm(x: Tensor, g=None, l=None, eps: float = 1e-5) -> Tensor:
    """Standardize over the last axis (population variance), then ``* g + l``."""
    mu = mean(x, -1, keepdims=True)
    d = x - mu
    v = mean(d * d, -1, keepdims=True)
    y = d / sqrt(v + eps)
    if g is not None:
        y = y * g
    if l is not None:
        y = y + l
    return y


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """Per-channel normalization of ``(N, C, H, W)`` input.

    In training mode the batch statistics are used and the running buffers
    are updated in place; otherwise the running buffers are used.
    """
    c = x.shape[1]
    shape = (1, c, 1, 1)
    if training:
        axes = (0, 2, 3)
        mu = mean(x, axes, keepdims=True)
        v = var(x, axes, keepdims=True)
        n = x.size // c
        running_mean *= 1 - momentum
        running_mean += momentum * mu.data.reshape(c)
        running_var *= 1 - momentum
        running_var += momentum * v.data.reshape(c) * (n / max(n - 1, 1))
    else:
        mu = Tensor._wrap(running_mean.reshape(shape).astype(x.dtype))
        v = Tensor._wrap(running_var.reshape(shape).astype(x.dtype))
    y = (x - mu) / sqrt(v + eps)
    return y * reshape(gamma, shape) + reshape(beta, shape)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not training or p <= 0:
        return x
    if rng is None:
        raise UsageError("dropout in training mode needs an explicit random generator")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * Tensor._wrap(keep)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    y = x @ weight
    return y + bias if bias is not None else y


# ---------------------------------------------------------------------------
# convolutions, layout (N, C, H, W)
# ---------------------------------------------------------------------------
def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def conv_output_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def deconv_output_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n - 1) * stride - 2 * pad + k


def _batched(x: Tensor):
    if x.ndim == 3:
        return reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise UsageError(f"expected (N, C, H, W) or (C, H, W) input, got shape {x.shape}")
    return x, False


def _im2col(xd: np.ndarray, kh, kw, stride, pad, ho, wo):
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xd
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]


def _conv2d_raw(xd, wd, stride, pad):
    n, c, h, w = xd.shape
    o, c2, kh, kw = wd.shape
    ho, wo = conv_output_size(h, kh, stride, pad), conv_output_size(w, kw, stride, pad)
    if c != c2 or ho < 1 or wo < 1:
        raise ValueError(f"conv2d shape mismatch: input {xd.shape}, kernel {wd.shape}, "
                         f"stride {stride}, pad {pad}")
    cols = _im2col(xd, kh, kw, stride, pad, ho, wo)              # (N, C, Ho, Wo, kh, kw)
    out = np.tensordot(cols, wd, axes=([1, 4, 5], [1, 2, 3]))      # (N, Ho, Wo, O)
    _profile_hook("conv2d", n * ho * wo * o * c * kh * kw)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _deconv2d_raw(xd, wd, stride, pad, out_hw=None):
    n, c, h, w = xd.shape
    c2, o, kh, kw = wd.shape
    if c != c2:
        raise ValueError(f"deconv2d shape mismatch: input {xd.shape}, kernel {wd.shape}")
    ho = deconv_output_size(h, kh, stride, pad) if out_hw is None else out_hw[0]
    wo = deconv_output_size(w, kw, stride, pad) if out_hw is None else out_hw[1]
    if ho < 1 or wo < 1:
        raise ValueError(f"deconv2d produces empty output: input {xd.shape}, kernel {wd.shape}, "
                         f"stride {stride}, pad {pad}")
    cols = np.tensordot(xd, wd, axes=([1], [0]))                  # (N, H, W, O, kh, kw)
    _profile_hook("deconv2d", n * h * w * c * o * kh * kw)
    full_h = max((h - 1) * stride + kh, ho + pad)
    full_w = max((w - 1) * stride + kw, wo + pad)
    full = np.zeros((n, o, full_h, full_w), dtype=np.result_type(xd, wd))
    for i in range(kh):
        for j in range(kw):
            full[:, :, i : i + (h - 1) * stride + 1 : stride, j : j + (w - 1) * stride + 1 : stride] += \
                cols[..., i, j].transpose(0, 3, 1, 2)
    return np.ascontiguousarray(full[:, :, pad : pad + ho, pad : pad + wo])


def _wgrad_raw(xd, gd, kh, kw, stride, pad):
    ho, wo = gd.shape[2], gd.shape[3]
    cols = _im2col(xd, kh, kw, stride, pad, ho, wo)              # (N, C, Ho, Wo, kh, kw)
    _profile_hook("conv2d_weight_grad", gd.shape[0] * ho * wo * gd.shape[1] * xd.shape[1] * kh * kw)
    return np.tensordot(gd, cols, axes=([0, 2, 3], [0, 2, 3]))   # (O, C, kh, kw)


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, pad: int = 0, bias: Tensor | None = None) -> Tensor:
    """Cross-correlation of ``x`` (N, C, H, W) with ``kernel`` (O, C, kh, kw)."""
    x, squeeze = _batched(_lift(x))
    kernel = _lift(kernel, x)
    in_hw = x.shape[2:]
    kh, kw = kernel.shape[2:]

    def bw(g):
        gx = deconv2d(g, kernel, stride, pad, out_hw=in_hw) if x.requires_grad else None
        gk = conv2d_weight_grad(x, g, (kh, kw), stride, pad) if kernel.requires_grad else None
        return gx, gk
    out = _make("conv2d", _conv2d_raw(x.data, kernel.data, stride, pad), (x, kernel), bw)
    if bias is not None:
        out = out + reshape(bias, (1, -1, 1, 1))
    return reshape(out, out.shape[1:]) if squeeze else out


def deconv2d(x: Tensor, kernel: Tensor, stride: int = 1, pad: int = 0, bias: Tensor | None = None,
             out_hw=None) -> Tensor:
    """Transposed convolution; ``kernel`` has layout (C_in, C_out, kh, kw).

    This is the adjoint of :func:`conv2d` with the same kernel, stride and
    padding. ``out_hw`` selects the output extent when several are possible
    (the default is ``(n - 1) * stride - 2 * pad + k``).
    """
    x, squeeze = _batched(_lift(x))
    kernel = _lift(kernel, x)
    kh, kw = kernel.shape[2:]

    def bw(g):
        gx = conv2d(g, kernel, stride, pad) if x.requires_grad else None
        gk = conv2d_weight_grad(g, x, (kh, kw), stride, pad) if kernel.requires_grad else None
        return gx, gk
    out = _make("deconv2d", _deconv2d_raw(x.data, kernel.data, stride, pad, out_hw), (x, kernel), bw)
    if bias is not None:
        out = out + reshape(bias, (1, -1, 1, 1))
    return reshape(out, out.shape[1:]) if squeeze else out


def conv2d_weight_grad(x: Tensor, g: Tensor, kernel_hw, stride: int = 1, pad: int = 0) -> Tensor:
    """Kernel gradient of ``conv2d(x, k)`` given output gradient ``g``; bilinear in (x, g)."""
    kh, kw = _pair(kernel_hw)
    in_hw = x.shape[2:]

    def bw(gk):
        gx = deconv2d(g, gk, stride, pad, out_hw=in_hw) if x.requires_grad else None
        gg = conv2d(x, gk, stride, pad) if g.requires_grad else None
        return gx, gg
    return _make("conv2d_weight_grad", _wgrad_raw(x.data, g.data, kh, kw, stride, pad), (x, g), bw)
