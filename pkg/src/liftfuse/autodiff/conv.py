"""Dense 2-D image ops: convolution, max pooling, nearest upsampling.

Feature maps are ``(C, H, W)`` or batched ``(B, C, H, W)``; the output keeps
the rank of the input.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError
from .tensor import Tensor, as_tensor


def _batched(x: Tensor):
    if x.ndim == 3:
        return x.data[None], True
    if x.ndim == 4:
        return x.data, False
    raise ConfigError(f"feature map must be (C,H,W) or (B,C,H,W), got {x.shape}")


def conv2d(x, kernel, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation with a ``(C_out, C_in, k, k)`` kernel (im2col + GEMM)."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    bias = as_tensor(bias) if bias is not None else None
    xd, squeeze = _batched(x)
    if kernel.ndim != 4 or kernel.shape[2] != kernel.shape[3]:
        raise ConfigError(f"kernel must be (C_out, C_in, k, k), got {kernel.shape}")
    if stride < 1 or padding < 0:
        raise ConfigError("stride must be positive and padding nonnegative")
    co, ci, k, _ = kernel.shape
    B, C, H, W = xd.shape
    if C != ci:
        raise ConfigError(f"input has {C} channels, kernel expects {ci}")
    ho = (H + 2 * padding - k) // stride + 1
    wo = (W + 2 * padding - k) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ConfigError("convolution output would be empty")
    if bias is not None and bias.shape != (co,):
        raise ConfigError(f"bias must have shape ({co},)")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # channel-major columns (B, ci*k*k, ho*wo) keep both GEMMs free of output transposes
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(B, ci * k * k, ho * wo)
    wmat = kernel.data.reshape(co, ci * k * k)
    out = np.matmul(wmat, cols)
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(B, co, ho, wo)
    if squeeze:
        out = out[0]

    def bw(g):
        g3 = (g[None] if squeeze else g).reshape(B, co, ho * wo)
        gx = gk = gb = None
        if kernel.requires_grad:
            gk = np.matmul(g3, cols.transpose(0, 2, 1)).sum(axis=0).reshape(kernel.shape)
        if bias is not None and bias.requires_grad:
            gb = g3.sum(axis=(0, 2))
        if x.requires_grad:
            dcols = np.matmul(wmat.T, g3).reshape(B, ci, k, k, ho, wo)
            dxp = np.zeros(xp.shape)
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, :, i, j]
            gx = dxp[:, :, padding:padding + H, padding:padding + W] if padding else dxp
            if squeeze:
                gx = gx[0]
        return (gx, gk, gb) if bias is not None else (gx, gk)

    parents = (x, kernel, bias) if bias is not None else (x, kernel)
    return Tensor(out, parents, bw, op="conv2d")


def max_pool2d(x, factor: int = 2) -> Tensor:
    """Non-overlapping ``factor x factor`` max pool; ties go to the first entry in row-major order."""
    x = as_tensor(x)
    xd, squeeze = _batched(x)
    B, C, H, W = xd.shape
    if H % factor or W % factor:
        raise ConfigError(f"spatial dims {H}x{W} not divisible by {factor}")
    h2, w2 = H // factor, W // factor
    win = xd.reshape(B, C, h2, factor, w2, factor).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, h2, w2, factor * factor)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    if squeeze:
        out = out[0]

    def bw(g):
        g4 = g[None] if squeeze else g
        gw = np.zeros(win.shape)
        np.put_along_axis(gw, arg[..., None], g4[..., None], axis=-1)
        gx = gw.reshape(B, C, h2, w2, factor, factor).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, W)
        return (gx[0] if squeeze else gx,)

    return Tensor(out, (x,), bw, op="max_pool2d")


def upsample_nearest2d(x, factor: int) -> Tensor:
    x = as_tensor(x)
    if factor == 1:
        return x
    xd, squeeze = _batched(x)
    B, C, H, W = xd.shape
    out = np.repeat(np.repeat(xd, factor, axis=2), factor, axis=3)
    if squeeze:
        out = out[0]

    def bw(g):
        g4 = g[None] if squeeze else g
        gx = g4.reshape(B, C, H, factor, W, factor).sum(axis=(3, 5))
        return (gx[0] if squeeze else gx,)

    return Tensor(out, (x,), bw, op="upsample_nearest2d")


def conv1x1(x, weight, bias=None) -> Tensor:
    """Per-pixel linear map with a ``(C_out, C_in)`` weight."""
    weight = as_tensor(weight)
    from . import functional as F

    k = F.reshape(weight, weight.shape + (1, 1))
    return conv2d(x, k, bias, stride=1, padding=0)
