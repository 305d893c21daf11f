"""Convolution, pooling and channel concatenation.

Every op here accepts a single feature map ``(C, H, W)`` or a batch
``(N, C, H, W)``; the output keeps the same rank as the input.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from . import ops
from .tensor import Tensor, as_tensor


def _as_batch(x: Tensor, name: str) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x.data[None], True
    if x.ndim == 4:
        return x.data, False
    raise ShapeError(f"{name}: expected (C,H,W) or (N,C,H,W) input, got {x.shape}")


def conv2d(x, kernels, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding (no kernel flip)."""
    x = as_tensor(x)
    kernels = as_tensor(kernels, dtype=x.dtype)
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: stride must be >= 1 and padding >= 0, got {stride}, {padding}")
    data, single = _as_batch(x, "conv2d")
    if kernels.ndim != 4 or kernels.shape[2] != kernels.shape[3]:
        raise ShapeError(f"conv2d: kernels must be (C_out, C_in, k, k), got {kernels.shape}")
    c_out, c_in, k, _ = kernels.shape
    n, c, h, w = data.shape
    if c != c_in:
        raise ShapeError(f"conv2d: input has {c} channels but kernels {kernels.shape} expect {c_in}")
    if k > h + 2 * padding or k > w + 2 * padding:
        raise ShapeError(
            f"conv2d: kernel {k}x{k} larger than padded input {h + 2 * padding}x{w + 2 * padding}"
        )

    xp = np.pad(data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else data
    h_out = (h + 2 * padding - k) // stride + 1
    w_out = (w + 2 * padding - k) // stride + 1
    # (N, C, H', W', k, k)
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h_out * w_out, c * k * k)
    kmat = kernels.data.reshape(c_out, c * k * k)
    out = (cols @ kmat.T).reshape(n, h_out, w_out, c_out).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)

    def grad_fn(g):
        g = g[None] if single else g
        gmat = g.transpose(0, 2, 3, 1).reshape(n * h_out * w_out, c_out)
        gk = None
        if kernels.requires_grad:
            gk = (gmat.T @ cols).reshape(kernels.shape)
        gx = None
        if x.requires_grad:
            dcols = (gmat @ kmat).reshape(n, h_out, w_out, c, k, k)
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += dcols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            gx = dxp[:, :, padding : padding + h, padding : padding + w]
            gx = gx[0] if single else np.ascontiguousarray(gx)
        return gx, gk

    return Tensor._make(out[0] if single else out, (x, kernels), grad_fn, "conv2d")


def pool2d(kind: str, x, window: int, stride: int) -> Tensor:
    """Max or average pooling over square windows, no padding.

    Max-pool routes each window's gradient to its first (row-major) maximum.
    """
    x = as_tensor(x)
    if kind not in ("max", "avg"):
        raise ValueError(f"pool2d: kind must be 'max' or 'avg', got {kind!r}")
    if window < 1 or stride < 1:
        raise ShapeError(f"pool2d: window and stride must be positive, got {window}, {stride}")
    data, single = _as_batch(x, "pool2d")
    n, c, h, w = data.shape
    if window > h or window > w:
        raise ShapeError(f"pool2d: window {window} exceeds spatial extent {h}x{w}")
    h_out = (h - window) // stride + 1
    w_out = (w - window) // stride + 1
    windows = sliding_window_view(data, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = windows.reshape(n, c, h_out, w_out, window * window)

    if kind == "avg":
        out = flat.mean(axis=-1)
        weights = None
    else:
        arg = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        weights = (np.arange(window * window) == arg[..., None]).astype(data.dtype)

    def grad_fn(g):
        g = g[None] if single else g
        dx = np.zeros_like(data)
        for i in range(window):
            for j in range(window):
                share = g / (window * window) if weights is None else g * weights[..., i * window + j]
                dx[:, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += share
        return (dx[0] if single else dx,)

    return Tensor._make(out[0] if single else out, (x,), grad_fn, f"{kind}_pool2d")


def global_avg_pool(x) -> Tensor:
    """Per-channel spatial mean: (C,H,W) -> (C,) or (N,C,H,W) -> (N,C)."""
    x = as_tensor(x)
    if x.ndim not in (3, 4) or x.shape[-1] < 1 or x.shape[-2] < 1:
        raise ShapeError(f"global_avg_pool: expected (C,H,W) or (N,C,H,W), got {x.shape}")
    return ops.mean(x, axis=(-2, -1))


def global_max_pool(x) -> Tensor:
    """Per-channel spatial max; gradient goes to the first row-major maximum."""
    x = as_tensor(x)
    if x.ndim not in (3, 4):
        raise ShapeError(f"global_max_pool: expected (C,H,W) or (N,C,H,W), got {x.shape}")
    lead = x.shape[:-2]
    flat = x.data.reshape(*lead, -1)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def grad_fn(g):
        d = np.zeros_like(flat)
        np.put_along_axis(d, arg[..., None], g[..., None], axis=-1)
        return (d.reshape(x.shape),)

    return Tensor._make(out, (x,), grad_fn, "global_max_pool")


def concat_channels(a, b) -> Tensor:
    """Stack ``a`` then ``b`` along the channel axis (third from last)."""
    a = as_tensor(a)
    b = as_tensor(b, dtype=a.dtype)
    if a.ndim not in (3, 4) or a.ndim != b.ndim:
        raise ShapeError(f"concat_channels: expected matching (C,H,W)/(N,C,H,W) ranks, got {a.shape}, {b.shape}")
    if a.shape[-3] == 0 or b.shape[-3] == 0:
        raise ShapeError(f"concat_channels: empty channel dimension in {a.shape} or {b.shape}")
    if a.shape[-2:] != b.shape[-2:] or a.shape[:-3] != b.shape[:-3]:
        raise ShapeError(f"concat_channels: spatial/batch mismatch between {a.shape} and {b.shape}")
    return ops.concat([a, b], axis=-3)
