"""Dense-tensor primitives shared by every layer.

All features and weights are float32 numpy arrays in row-major (C) order;
the last axis is fastest. Reinterpreting a contiguous array's shape is free,
while patch unfold/fold (see :mod:`ditn.ops`) are explicit copies -- that
split is what makes the reshape accounting meaningful.

Every operation here is a pure function over immutable inputs and is
deterministic: repeated calls on identical inputs produce bitwise-identical
results.
"""

from __future__ import annotations

import numpy as np

from .counters import OpCounters

Tensor = np.ndarray


class DimensionError(ValueError):
    """Raised when tensor shapes do not conform to an operation's contract."""


class NumericError(ValueError):
    """Raised when an input is numerically invalid (e.g. NaN where finite data is required)."""


def as_tensor(data) -> Tensor:
    """Coerce to a contiguous float32 array."""
    return np.ascontiguousarray(data, dtype=np.float32)


def gemm(a: Tensor, b: Tensor, accumulate_into: Tensor | None = None,
         ctr: OpCounters | None = None) -> Tensor:
    """Matrix product ``a (M x K) @ b (K x N)``.

    With ``accumulate_into`` the product is added onto the prior values of
    that M x N tensor, which is also returned. Passing a counter records one
    GEMM call.
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"gemm: inner dimensions do not match for {tuple(a.shape)} @ {tuple(b.shape)}"
        )
    if ctr is not None:
        ctr.count_gemm()
    out = np.matmul(a, b)
    if accumulate_into is not None:
        if accumulate_into.shape != out.shape:
            raise DimensionError(
                f"gemm: accumulator shape {tuple(accumulate_into.shape)} "
                f"!= product shape {tuple(out.shape)}"
            )
        accumulate_into += out
        return accumulate_into
    return out


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction so large logits cannot overflow."""
    if np.isnan(a).any():
        raise NumericError("softmax_rows: input contains NaN")
    shifted = a - np.max(a, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def _softmax_rows_inplace(a: Tensor) -> Tensor:
    # Arena-resident variant: same arithmetic as softmax_rows, no allocation.
    a -= np.max(a, axis=-1, keepdims=True)
    np.exp(a, out=a)
    a /= np.sum(a, axis=-1, keepdims=True)
    return a


def l2_normalize_rows(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale each row to unit L2 norm; rows with norm below ``eps`` are divided by ``eps``."""
    if eps <= 0:
        raise ValueError("l2_normalize_rows: eps must be positive")
    norms = np.sqrt(np.sum(a * a, axis=-1, keepdims=True))
    return a / np.maximum(norms, np.float32(eps))


def _l2_normalize_rows_inplace(a: Tensor, eps: float = 1e-12) -> Tensor:
    norms = np.sqrt(np.sum(a * a, axis=-1, keepdims=True))
    a /= np.maximum(norms, np.float32(eps))
    return a


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two equal-shape tensors."""
    _check_same_shape("add", a, b)
    return a + b


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product of two equal-shape tensors."""
    _check_same_shape("mul", a, b)
    return a * b


def tanh(a: Tensor) -> Tensor:
    """Elementwise tanh; output lies in [-1, 1]."""
    return np.tanh(a)


_GELU_C = np.float32(np.sqrt(2.0 / np.pi))
_GELU_A = np.float32(0.044715)


def gelu(a: Tensor) -> Tensor:
    """Gaussian error linear unit, tanh form: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    a = np.asarray(a, dtype=np.float32)
    return np.float32(0.5) * a * (np.float32(1.0) + np.tanh(_GELU_C * (a + _GELU_A * a * a * a)))
