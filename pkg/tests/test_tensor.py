import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ditn.tensor import (
    DimensionError,
    NumericError,
    add,
    as_tensor,
    gelu,
    gemm,
    l2_normalize_rows,
    mul,
    softmax_rows,
    tanh,
)


def gemm_oracle(a, b):
    """Triple-loop matrix product with a fixed ascending reduction order."""
    m, kk = a.shape
    _, n = b.shape
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for k in range(kk):
                acc += float(a[i, k]) * float(b[k, j])
            out[i, j] = acc
    return out


class TestGemm:
    def test_identity(self):
        a = np.eye(2, dtype=np.float32)
        b = as_tensor([[1, 2], [3, 4]])
        assert np.array_equal(gemm(a, b), b)

    def test_dot_product(self):
        out = gemm(as_tensor([[1, 2]]), as_tensor([[3], [4]]))
        assert out.shape == (1, 1)
        assert out[0, 0] == 11.0

    def test_matches_triple_loop_oracle(self, rng):
        a = rng.standard_normal((7, 5)).astype(np.float32)
        b = rng.standard_normal((5, 3)).astype(np.float32)
        assert np.max(np.abs(gemm(a, b) - gemm_oracle(a, b))) <= 1e-6

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            gemm(np.zeros((2, 3), np.float32), np.zeros((2, 2), np.float32))

    def test_accumulate(self, rng):
        a = rng.standard_normal((3, 4)).astype(np.float32)
        b = rng.standard_normal((4, 2)).astype(np.float32)
        prior = rng.standard_normal((3, 2)).astype(np.float32)
        expected = prior + a @ b
        acc = prior.copy()
        out = gemm(a, b, accumulate_into=acc)
        assert out is acc
        assert np.allclose(acc, expected, atol=1e-6)

    def test_accumulator_shape_checked(self):
        with pytest.raises(DimensionError):
            gemm(np.zeros((2, 2), np.float32), np.zeros((2, 2), np.float32),
                 accumulate_into=np.zeros((3, 2), np.float32))

    def test_deterministic(self, rng):
        a = rng.standard_normal((33, 61)).astype(np.float32)
        b = rng.standard_normal((61, 17)).astype(np.float32)
        assert np.array_equal(gemm(a, b), gemm(a, b))


class TestSoftmaxRows:
    def test_symmetry(self):
        assert np.allclose(softmax_rows(as_tensor([[0.0, 0.0]])), [[0.5, 0.5]])

    def test_large_logits_no_overflow(self):
        out = softmax_rows(as_tensor([[1000.0, 1000.0, 1000.0]]))
        assert np.all(np.isfinite(out))
        assert np.allclose(out, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-6)

    def test_rows_sum_to_one(self, rng):
        out = softmax_rows(rng.standard_normal((4, 6)).astype(np.float32))
        assert np.all(np.abs(out.sum(axis=1) - 1.0) <= 1e-6)

    def test_nan_rejected(self):
        with pytest.raises(NumericError):
            softmax_rows(as_tensor([[0.0, np.nan]]))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(-10, 10))
    def test_shift_invariance(self, seed, shift):
        # Shift range keeps float32 logit rounding below the 1e-6 contract.
        a = np.random.default_rng(seed).standard_normal((3, 5)).astype(np.float32)
        shifted = a + np.float32(shift)
        assert np.max(np.abs(softmax_rows(a) - softmax_rows(shifted))) <= 1e-6


class TestL2NormalizeRows:
    def test_three_four_five(self):
        assert np.allclose(l2_normalize_rows(as_tensor([[3.0, 4.0]])), [[0.6, 0.8]])

    def test_zero_row_stays_zero(self):
        out = l2_normalize_rows(np.zeros((1, 4), np.float32), eps=1e-12)
        assert np.array_equal(out, np.zeros((1, 4), np.float32))

    def test_unit_norm(self, rng):
        out = l2_normalize_rows(rng.standard_normal((5, 9)).astype(np.float32))
        assert np.all(np.abs(np.linalg.norm(out, axis=1) - 1.0) <= 1e-6)

    def test_eps_must_be_positive(self):
        with pytest.raises(ValueError):
            l2_normalize_rows(np.ones((1, 2), np.float32), eps=0.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_idempotent(self, seed):
        a = np.random.default_rng(seed).standard_normal((4, 7)).astype(np.float32)
        once = l2_normalize_rows(a)
        twice = l2_normalize_rows(once)
        assert np.max(np.abs(once - twice)) <= 1e-6


class TestElementwise:
    def test_mul(self):
        assert np.array_equal(mul(as_tensor([1.0, 2.0]), as_tensor([3.0, 4.0])), [3.0, 8.0])

    def test_add_zero_is_identity(self, rng):
        x = rng.standard_normal(17).astype(np.float32)
        assert np.array_equal(add(x, np.zeros_like(x)), x)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            add(np.zeros(2, np.float32), np.zeros(3, np.float32))
        with pytest.raises(DimensionError):
            mul(np.zeros((2, 2), np.float32), np.zeros(4, np.float32))

    def test_tanh_saturation(self):
        assert tanh(as_tensor([0.0]))[0] == 0.0
        out = tanh(as_tensor([50.0, -50.0]))
        assert abs(out[0] - 1.0) <= 1e-6 and abs(out[1] + 1.0) <= 1e-6
        assert np.all(np.abs(tanh(as_tensor(np.linspace(-9, 9, 101)))) <= 1.0)

    def test_gelu_basics(self):
        assert gelu(as_tensor([0.0]))[0] == 0.0
        # Large positive inputs pass through, large negative die out.
        assert abs(gelu(as_tensor([10.0]))[0] - 10.0) <= 1e-5
        assert abs(gelu(as_tensor([-10.0]))[0]) <= 1e-5
