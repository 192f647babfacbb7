"""Inner-patch self-attention in two numerically equivalent implementations.

The attention is single-head and runs across channels: for one patch with
tokens ``t`` of shape ``C x P*P``, the packed projection produces Q, K, V
(each ``C x P*P``), Q and K rows are L2-normalized, the score matrix
``Qn @ Kn.T / alpha`` is ``C x C``, a row softmax turns it into attention
weights A, and the mixed value ``A @ V`` goes through a small output
convolution before the residual add.

Two paths compute this:

* reference -- the plain operator graph. Q, K, V come from three separate
  GEMMs per patch against row slices of the packed weight, and every stage
  (normalized Q, normalized K, raw scores, softmaxed scores, A @ V) is
  materialized as a batch-sized buffer. Cost: 5 GEMM launches per patch and
  scratch that grows linearly with the patch count.
* fused -- one triple-channel GEMM per patch writes Q, K, V at row offsets
  into a per-patch arena, and normalization, scores, softmax, the value
  product, and the output projection all happen inside that arena before
  moving to the next patch. Cost: 3 GEMM launches per patch, zero batch-sized
  intermediates, and scratch independent of the patch count.

Both paths are pure functions of their inputs and bitwise reproducible;
their outputs agree to float32 roundoff (<= 1e-5 max abs difference).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .counters import OpCounters
from .ops import ConvWeights, _conv2d_nchw
from .tensor import (
    DimensionError,
    Tensor,
    _l2_normalize_rows_inplace,
    _softmax_rows_inplace,
    gemm,
    l2_normalize_rows,
    softmax_rows,
)

# Row-norm floor for Q/K normalization; zero rows stay zero instead of NaN.
L2_EPS = 1e-12

PatchBatch = np.ndarray  # B x C x P*P


@dataclass(frozen=True)
class IsaWeights:
    """Packed attention parameters for one layer.

    ``qkv_packed`` is ``3C x C``: rows ``0..C-1`` project Q, ``C..2C-1``
    project K, ``2C..3C-1`` project V, so slicing rows recovers the three
    unfused projections exactly. ``alpha`` is the positive scalar temperature
    dividing the scores before the softmax. ``out_conv`` is the output
    projection applied on the patch plane (1x1 by default).
    """

    qkv_packed: Tensor
    qkv_bias: Tensor
    alpha: float
    out_conv: ConvWeights

    def __post_init__(self):
        rows, c = self.qkv_packed.shape
        if rows != 3 * c:
            raise DimensionError(
                f"qkv_packed must be 3C x C, got {tuple(self.qkv_packed.shape)}"
            )
        if self.qkv_bias.shape != (rows,):
            raise DimensionError(
                f"qkv_bias shape {tuple(self.qkv_bias.shape)} does not match {rows} packed rows"
            )
        if not self.alpha > 0:
            raise ValueError(f"attention temperature must be positive, got {self.alpha}")

    @property
    def channels(self) -> int:
        return self.qkv_packed.shape[1]


def _check_tokens(tokens: PatchBatch, w: IsaWeights) -> tuple[int, int, int]:
    if tokens.ndim != 3:
        raise DimensionError(f"expected B x C x P*P tokens, got shape {tuple(tokens.shape)}")
    b, c, pp = tokens.shape
    if c != w.channels:
        raise DimensionError(f"tokens have {c} channels but weights expect {w.channels}")
    return b, c, pp


def qkv_project_reference(tokens: PatchBatch, w: IsaWeights,
                          ctr: OpCounters) -> tuple[Tensor, Tensor, Tensor]:
    """Project Q, K, V with three serial GEMMs per patch against sliced weights.

    Materializes three separate batch tensors; counts 3*B GEMM calls.
    """
    b, c, pp = _check_tokens(tokens, w)
    wq, wk, wv = w.qkv_packed[:c], w.qkv_packed[c:2 * c], w.qkv_packed[2 * c:]
    bq, bk, bv = w.qkv_bias[:c], w.qkv_bias[c:2 * c], w.qkv_bias[2 * c:]
    q = np.empty((b, c, pp), dtype=np.float32)
    k = np.empty((b, c, pp), dtype=np.float32)
    v = np.empty((b, c, pp), dtype=np.float32)
    ctr.scratch_alloc(q.nbytes + k.nbytes + v.nbytes)
    ctr.count_intermediates(3)
    for i in range(b):
        q[i] = gemm(wq, tokens[i], ctr=ctr) + bq[:, None]
        k[i] = gemm(wk, tokens[i], ctr=ctr) + bk[:, None]
        v[i] = gemm(wv, tokens[i], ctr=ctr) + bv[:, None]
    return q, k, v


def qkv_project_fused(tokens: PatchBatch, w: IsaWeights,
                      ctr: OpCounters) -> tuple[Tensor, Tensor, Tensor]:
    """Project Q, K, V with one triple-channel GEMM per patch.

    The packed product lands in a single ``B x 3C x P*P`` output whose row
    offsets 0, C, 2C are the Q, K, V regions; the returned views alias it.
    Counts B GEMM calls and no intermediates.
    """
    b, c, pp = _check_tokens(tokens, w)
    packed_out = np.empty((b, 3 * c, pp), dtype=np.float32)
    bias_col = w.qkv_bias[:, None]
    for i in range(b):
        np.matmul(w.qkv_packed, tokens[i], out=packed_out[i])
        ctr.count_gemm()
        packed_out[i] += bias_col
    return packed_out[:, :c], packed_out[:, c:2 * c], packed_out[:, 2 * c:]


def _out_project(av: np.ndarray, w: IsaWeights) -> np.ndarray:
    """Output convolution on the patch plane, ``N x C x P*P`` in and out."""
    n, c, pp = av.shape
    if w.out_conv.kernel_size == 1:
        # 1x1 projection is a plain channel map; skip the spatial machinery.
        return np.matmul(w.out_conv.kernel[:, :, 0, 0], av) + w.out_conv.bias[None, :, None]
    p = int(round(pp ** 0.5))
    if p * p != pp:
        raise DimensionError(f"token length {pp} is not a square patch")
    planes = av.reshape(n, c, p, p)
    return _conv2d_nchw(planes, w.out_conv).reshape(n, c, pp)


def attend_reference(tokens: PatchBatch, w: IsaWeights, ctr: OpCounters,
                     attention_probe: Callable[[Tensor], None] | None = None) -> PatchBatch:
    """Pre-residual attention transform via the unfused operator graph.

    Returns ``out_conv(A @ V)``. Five batch-sized intermediates are
    materialized after the projection: normalized Q, normalized K, raw
    scores, softmaxed scores, and ``A @ V``. ``attention_probe``, if given,
    receives each patch's C x C attention matrix (debug hook).
    """
    b, c, pp = _check_tokens(tokens, w)
    q, k, v = qkv_project_reference(tokens, w, ctr)
    qn = l2_normalize_rows(q, L2_EPS)
    kn = l2_normalize_rows(k, L2_EPS)
    raw = np.empty((b, c, c), dtype=np.float32)
    att = np.empty((b, c, c), dtype=np.float32)
    av = np.empty((b, c, pp), dtype=np.float32)
    ctr.scratch_alloc(qn.nbytes + kn.nbytes + raw.nbytes + att.nbytes + av.nbytes)
    ctr.count_intermediates(5)
    inv_alpha = np.float32(1.0 / w.alpha)
    for i in range(b):
        raw[i] = gemm(qn[i], kn[i].T, ctr=ctr) * inv_alpha
        att[i] = softmax_rows(raw[i])
        if attention_probe is not None:
            attention_probe(att[i])
        av[i] = gemm(att[i], v[i], ctr=ctr)
    out = _out_project(av, w)
    ctr.scratch_release(3 * q.nbytes + qn.nbytes + kn.nbytes + raw.nbytes + att.nbytes + av.nbytes)
    return out


def fused_arena_bytes(channels: int, token_len: int) -> int:
    """Scratch footprint of the fused path: packed QKV + scores + two patch planes."""
    floats = 3 * channels * token_len + channels * channels + 2 * channels * token_len
    return 4 * floats


def attend_fused(tokens: PatchBatch, w: IsaWeights, ctr: OpCounters) -> PatchBatch:
    """Pre-residual attention transform with the fused single-pass kernel.

    One packed GEMM per patch writes Q, K, V at row offsets into an arena;
    normalization, scores, softmax, the value product, and the output
    projection complete inside that arena before the next patch starts. The
    arena is reused across patches, so scratch does not grow with the batch
    and no batch-sized intermediates exist.
    """
    b, c, pp = _check_tokens(tokens, w)
    out = np.empty((b, c, pp), dtype=np.float32)
    qkv = np.empty((3 * c, pp), dtype=np.float32)
    scores = np.empty((c, c), dtype=np.float32)
    av = np.empty((c, pp), dtype=np.float32)
    ctr.scratch_alloc(fused_arena_bytes(c, pp))
    bias_col = w.qkv_bias[:, None]
    inv_alpha = np.float32(1.0 / w.alpha)
    for i in range(b):
        np.matmul(w.qkv_packed, tokens[i], out=qkv)
        ctr.count_gemm()
        qkv += bias_col
        qn = _l2_normalize_rows_inplace(qkv[:c], L2_EPS)
        kn = _l2_normalize_rows_inplace(qkv[c:2 * c], L2_EPS)
        np.matmul(qn, kn.T, out=scores)
        ctr.count_gemm()
        scores *= inv_alpha
        _softmax_rows_inplace(scores)
        np.matmul(scores, qkv[2 * c:], out=av)
        ctr.count_gemm()
        out[i] = _out_project(av[None], w)[0]
    ctr.scratch_release(fused_arena_bytes(c, pp))
    return out


def isa_reference(patch_tokens: PatchBatch, w: IsaWeights, ctr: OpCounters,
                  attention_probe: Callable[[Tensor], None] | None = None) -> PatchBatch:
    """Residual attention layer, reference path: ``tokens + out_conv(A @ V)``."""
    return patch_tokens + attend_reference(patch_tokens, w, ctr, attention_probe)


def isa_fused(patch_tokens: PatchBatch, w: IsaWeights, ctr: OpCounters) -> PatchBatch:
    """Residual attention layer, fused path; matches the reference within 1e-5."""
    return patch_tokens + attend_fused(patch_tokens, w, ctr)
