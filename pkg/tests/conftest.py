"""Shared builders for randomized layer weights."""

import numpy as np
import pytest

from ditn.attention import IsaWeights
from ditn.ops import ConvWeights, GdfnWeights, NormParams


def rand_conv(rng, c_out, c_in, k=1, dilation=1, depthwise=False, zero_bias=False):
    a = np.sqrt(1.0 / (c_in * k * k))
    return ConvWeights(
        kernel=rng.uniform(-a, a, size=(c_out, 1 if depthwise else c_in, k, k)).astype(np.float32),
        bias=(np.zeros(c_out, dtype=np.float32) if zero_bias
              else rng.uniform(-0.1, 0.1, size=c_out).astype(np.float32)),
        dilation=dilation,
        depthwise=depthwise,
    )


def rand_isa(rng, c, alpha=None, k_out=1):
    a = np.sqrt(1.0 / c)
    return IsaWeights(
        qkv_packed=rng.uniform(-a, a, size=(3 * c, c)).astype(np.float32),
        qkv_bias=rng.uniform(-0.1, 0.1, size=3 * c).astype(np.float32),
        alpha=float(rng.uniform(0.5, 2.0)) if alpha is None else alpha,
        out_conv=rand_conv(rng, c, c, k=k_out),
    )


def rand_layer_norm(rng, c):
    return NormParams.layer_norm(
        gain=rng.uniform(0.5, 1.5, size=c).astype(np.float32),
        bias=rng.uniform(-0.2, 0.2, size=c).astype(np.float32),
    )


def rand_gdfn(rng, c, expansion=1.5):
    h = int(round(c * expansion))
    return GdfnWeights(
        expand=rand_conv(rng, 2 * h, c),
        depthwise=rand_conv(rng, 2 * h, 2 * h, k=3, depthwise=True),
        project=rand_conv(rng, c, h),
        expansion=expansion,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
