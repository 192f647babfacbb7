"""Neural building blocks: convolutions, pixel shuffle, patch unfold/fold,
normalization layers, channel gating, and the gated feed-forward network.

Layout conventions
------------------
Spatial features are ``C x H x W``. Patch batches are ``B x C x P*P`` where
patches are ordered row-major over the patch grid and the token axis is
row-major over (row, col) within a patch, so viewing a patch as ``C x P x P``
is a free reinterpretation. ``unfold_patches``/``fold_patches`` are explicit
copies and each bumps the reshape counter by one -- they measure exactly the
data movement that in-place shape reinterpretation avoids.

All convolutions use zero same-padding: for an odd kernel ``k`` with dilation
``d`` the padding is ``d*(k-1)//2`` per side, so spatial size is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .counters import OpCounters
from .tensor import DimensionError, Tensor, gelu, tanh


@dataclass(frozen=True)
class ConvWeights:
    """A 2-D convolution's parameters.

    ``kernel`` is ``C_out x C_in x k x k``; depthwise kernels use ``C_in == 1``
    (one k x k filter per channel). ``bias`` is ``C_out``.
    """

    kernel: Tensor
    bias: Tensor
    dilation: int = 1
    depthwise: bool = False

    def __post_init__(self):
        if self.kernel.ndim != 4:
            raise DimensionError(f"conv kernel must be rank 4, got shape {tuple(self.kernel.shape)}")
        k_h, k_w = self.kernel.shape[2], self.kernel.shape[3]
        if k_h != k_w or k_h % 2 == 0:
            raise DimensionError(f"conv kernel must be square with odd size, got {k_h}x{k_w}")
        if self.dilation < 1:
            raise ValueError("conv dilation must be >= 1")
        if self.depthwise and self.kernel.shape[1] != 1:
            raise DimensionError("depthwise kernel must have a single input channel per group")
        if self.bias.shape != (self.kernel.shape[0],):
            raise DimensionError(
                f"conv bias shape {tuple(self.bias.shape)} does not match {self.kernel.shape[0]} output channels"
            )

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[0] if self.depthwise else self.kernel.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.kernel.shape[2]


def _conv2d_nchw(x: np.ndarray, w: ConvWeights) -> np.ndarray:
    """Same-padded convolution over a batched ``N x C x H x W`` input."""
    n, c, h, wd = x.shape
    k = w.kernel_size
    d = w.dilation
    pad = d * (k - 1) // 2
    if w.in_channels != c:
        raise DimensionError(
            f"conv2d: input has {c} channels but kernel expects {w.in_channels}"
        )
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    if w.depthwise:
        # Dilated tap windows as a zero-copy view, reduced per channel.
        span = (k - 1) * d + 1
        windows = np.lib.stride_tricks.sliding_window_view(xp, (span, span), axis=(2, 3))
        windows = windows[..., ::d, ::d]
        out = np.einsum("nchwij,cij->nchw", windows, w.kernel[:, 0])
    else:
        out = np.zeros((n, w.out_channels, h, wd), dtype=np.float32)
        for i in range(k):
            for j in range(k):
                patch = xp[:, :, i * d:i * d + h, j * d:j * d + wd]
                out += np.einsum("oc,nchw->nohw", w.kernel[:, :, i, j], patch, optimize=True)
    out += w.bias[None, :, None, None]
    return out


def conv2d(x: Tensor, w: ConvWeights) -> Tensor:
    """Convolve a ``C x H x W`` feature map; spatial size is preserved."""
    if x.ndim != 3:
        raise DimensionError(f"conv2d: expected C x H x W input, got shape {tuple(x.shape)}")
    return _conv2d_nchw(x[None], w)[0]


def pixel_shuffle(x: Tensor, s: int) -> Tensor:
    """Rearrange ``(C*s^2) x H x W`` into ``C x (s*H) x (s*W)``.

    out[c][h*s + i][w*s + j] = in[c*s^2 + i*s + j][h][w].
    """
    if x.ndim != 3:
        raise DimensionError(f"pixel_shuffle: expected rank-3 input, got shape {tuple(x.shape)}")
    cs, h, w = x.shape
    if cs % (s * s) != 0:
        raise DimensionError(f"pixel_shuffle: {cs} channels not divisible by s^2 = {s * s}")
    c = cs // (s * s)
    return np.ascontiguousarray(
        x.reshape(c, s, s, h, w).transpose(0, 3, 1, 4, 2).reshape(c, h * s, w * s)
    )


def unfold_patches(f: Tensor, p: int, ctr: OpCounters | None = None) -> Tensor:
    """Cut ``C x H x W`` into ``B x C x P*P`` non-overlapping patch tokens.

    Patches are ordered row-major over the (H/p) x (W/p) grid. This is a copy
    and counts as one reshape operation.
    """
    if f.ndim != 3:
        raise DimensionError(f"unfold_patches: expected C x H x W input, got {tuple(f.shape)}")
    c, h, w = f.shape
    if h % p or w % p:
        raise DimensionError(
            f"unfold_patches: {h}x{w} is not divisible by patch size {p}; pad the input first"
        )
    if ctr is not None:
        ctr.count_unfold()
    hp, wp = h // p, w // p
    return np.ascontiguousarray(
        f.reshape(c, hp, p, wp, p).transpose(1, 3, 0, 2, 4).reshape(hp * wp, c, p * p)
    )


def fold_patches(patches: Tensor, h: int, w: int, p: int, ctr: OpCounters | None = None) -> Tensor:
    """Inverse of :func:`unfold_patches`; also a copy and one reshape operation."""
    if patches.ndim != 3:
        raise DimensionError(f"fold_patches: expected B x C x P*P input, got {tuple(patches.shape)}")
    b, c, pp = patches.shape
    if h % p or w % p:
        raise DimensionError(f"fold_patches: {h}x{w} is not divisible by patch size {p}; pad the input first")
    if pp != p * p or b != (h // p) * (w // p):
        raise DimensionError(
            f"fold_patches: batch {tuple(patches.shape)} does not tile a {h}x{w} map with {p}x{p} patches"
        )
    if ctr is not None:
        ctr.count_fold()
    hp, wp = h // p, w // p
    return np.ascontiguousarray(
        patches.reshape(hp, wp, c, p, p).transpose(2, 0, 3, 1, 4).reshape(c, h, w)
    )


LAYER_NORM = "layer_norm"
TANH_CONV = "tanh_conv"


@dataclass(frozen=True)
class NormParams:
    """Parameters for one normalization layer in either mode.

    ``layer_norm`` standardizes across channels at each position, then applies
    a per-channel gain and bias. ``tanh_conv`` is the deployment substitute:
    tanh bounds the features to [-1, 1] and a learned C x C 1x1 convolution
    plays the affine role. Exactly the active mode's fields are populated.
    """

    mode: str
    gain: Tensor | None = None
    bias: Tensor | None = None
    conv_weight: Tensor | None = None
    conv_bias: Tensor | None = None
    eps: float = 1e-6

    def __post_init__(self):
        if self.mode == LAYER_NORM:
            if self.gain is None or self.bias is None or self.conv_weight is not None or self.conv_bias is not None:
                raise ValueError("layer_norm params require gain and bias only")
        elif self.mode == TANH_CONV:
            if self.conv_weight is None or self.conv_bias is None or self.gain is not None or self.bias is not None:
                raise ValueError("tanh_conv params require conv_weight and conv_bias only")
            if self.conv_weight.ndim != 2 or self.conv_weight.shape[0] != self.conv_weight.shape[1]:
                raise DimensionError(
                    f"tanh_conv weight must be square C x C, got {tuple(self.conv_weight.shape)}"
                )
        else:
            raise ValueError(f"unknown norm mode {self.mode!r}")

    @classmethod
    def layer_norm(cls, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> "NormParams":
        return cls(mode=LAYER_NORM, gain=gain, bias=bias, eps=eps)

    @classmethod
    def tanh_conv(cls, conv_weight: Tensor, conv_bias: Tensor) -> "NormParams":
        return cls(mode=TANH_CONV, conv_weight=conv_weight, conv_bias=conv_bias)


def normalize(x: Tensor, params: NormParams) -> Tensor:
    """Normalize ``(..., C, L)`` across the channel axis at each position.

    layer_norm: per-position standardization over C, then gain/bias.
    tanh_conv: elementwise tanh, then the C x C affine at each position.
    """
    if params.mode == LAYER_NORM:
        mu = np.mean(x, axis=-2, keepdims=True)
        var = np.var(x, axis=-2, keepdims=True)
        n = (x - mu) / np.sqrt(var + np.float32(params.eps))
        return params.gain[:, None] * n + params.bias[:, None]
    bounded = tanh(x)
    out = np.einsum("oc,...cl->...ol", params.conv_weight, bounded, optimize=True)
    return out + params.conv_bias[:, None]


def split_channels(x: Tensor) -> tuple[Tensor, Tensor]:
    """Split ``2C x H x W`` into its first and second channel halves."""
    if x.ndim != 3:
        raise DimensionError(f"split_channels: expected rank-3 input, got {tuple(x.shape)}")
    if x.shape[0] % 2:
        raise DimensionError(f"split_channels: channel count {x.shape[0]} is odd")
    c = x.shape[0] // 2
    return x[:c], x[c:]


@dataclass(frozen=True)
class GdfnWeights:
    """Gated feed-forward parameters.

    ``expand`` is a 1x1 conv C -> 2*h, ``depthwise`` a 3x3 depthwise conv on
    2*h channels, ``project`` a 1x1 conv h -> C, where h = round(expansion*C)
    is the hidden width. The 2*h channels are split in half for the gate.
    """

    expand: ConvWeights
    depthwise: ConvWeights
    project: ConvWeights
    expansion: float

    def __post_init__(self):
        two_h = self.expand.out_channels
        if two_h % 2:
            raise DimensionError(f"gdfn expand must produce an even channel count, got {two_h}")
        h = two_h // 2
        if self.depthwise.out_channels != two_h or not self.depthwise.depthwise:
            raise DimensionError("gdfn depthwise conv must cover both gate halves")
        if self.project.in_channels != h:
            raise DimensionError(
                f"gdfn project expects {h} input channels, got {self.project.in_channels}"
            )
        if self.project.out_channels != self.expand.in_channels:
            raise DimensionError("gdfn project must map back to the expand input width")


def gdfn(x: Tensor, w: GdfnWeights, norm: NormParams, spatial: tuple[int, int]) -> Tensor:
    """Pre-norm residual gated feed-forward block on ``(..., C, L)`` tokens.

    ``spatial = (h, w)`` gives the plane the L axis flattens (h*w == L); the
    3x3 depthwise convolution runs on that plane. Computes
    ``x + Project(gelu(half1) * half2)`` with the halves taken from
    ``Depthwise(Expand(normalize(x)))``.
    """
    *lead, c, length = x.shape
    sh, sw = spatial
    if sh * sw != length:
        raise DimensionError(f"gdfn: spatial {spatial} does not flatten to token length {length}")
    n = normalize(x, norm)
    planes = n.reshape(-1, c, sh, sw)
    e = _conv2d_nchw(planes, w.expand)
    d = _conv2d_nchw(e, w.depthwise)
    half = d.shape[1] // 2
    gated = gelu(d[:, :half]) * d[:, half:]
    p = _conv2d_nchw(gated, w.project)
    return x + p.reshape(x.shape)
