"""Bicubic resampling compatible with the convention the standard
super-resolution benchmarks were produced under.

The kernel is the a = -0.5 cubic:

    f(x) = 1.5|x|^3 - 2.5|x|^2 + 1          for |x| <= 1
         = -0.5|x|^3 + 2.5|x|^2 - 4|x| + 2  for 1 < |x| <= 2

Each output axis is handled separably. Output sample ``i`` (0-based) maps to
the center-aligned source coordinate ``u = (i + 0.5)/scale - 0.5``; the
kernel is evaluated at the surrounding integer taps, the weights are
renormalized to sum to one, and out-of-range taps are clamped to the edge
(replicate boundary). When an axis shrinks, the kernel is stretched by the
inverse scale (``scale * f(scale * x)`` with widened support) so the filter
antialiases. Weights are computed in float64 and the result is returned as
float32.
"""

from __future__ import annotations

import numpy as np

from .tensor import DimensionError, Tensor


def _cubic(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = 1.5 * ax3 - 2.5 * ax2 + 1.0
    far = -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    return np.where(ax <= 1.0, near, np.where(ax <= 2.0, far, 0.0))


def _contributions(in_len: int, out_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-output-sample tap indices and weights for one axis.

    Returns ``(weights, indices)`` of shape ``out_len x taps``; each weight row
    sums to one and indices are clamped into [0, in_len).
    """
    scale = out_len / in_len
    if scale < 1.0:
        kernel_width = 4.0 / scale
        kernel = lambda x: scale * _cubic(scale * x)
    else:
        kernel_width = 4.0
        kernel = _cubic
    u = (np.arange(out_len, dtype=np.float64) + 0.5) / scale - 0.5
    left = np.floor(u - kernel_width / 2.0)
    taps = int(np.ceil(kernel_width)) + 2
    indices = left[:, None] + np.arange(taps, dtype=np.float64)[None, :]
    weights = kernel(u[:, None] - indices)
    weights /= np.sum(weights, axis=1, keepdims=True)
    indices = np.clip(indices, 0, in_len - 1).astype(np.int64)
    # Drop tap columns that are zero for every output sample.
    live = ~np.all(weights == 0.0, axis=0)
    return weights[:, live], indices[:, live]


def _resize_axis(data: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    in_len = data.shape[axis]
    if out_len == in_len:
        return data
    weights, indices = _contributions(in_len, out_len)
    moved = np.moveaxis(data, axis, -1)
    gathered = moved[..., indices]  # (..., out_len, taps)
    out = np.einsum("...ot,ot->...o", gathered, weights)
    return np.moveaxis(out, -1, axis)


def bicubic_resize(t: Tensor, target_h: int, target_w: int) -> Tensor:
    """Resize ``C x H x W`` to ``C x target_h x target_w``.

    Identity when the target equals the source size.
    """
    if t.ndim != 3:
        raise DimensionError(f"bicubic_resize expects C x H x W, got {tuple(t.shape)}")
    if target_h < 1 or target_w < 1:
        raise DimensionError(f"target size {target_h}x{target_w} must be at least 1x1")
    if (target_h, target_w) == t.shape[1:]:
        return t
    data = t.astype(np.float64)
    data = _resize_axis(data, target_h, axis=1)
    data = _resize_axis(data, target_w, axis=2)
    return np.ascontiguousarray(data, dtype=np.float32)
