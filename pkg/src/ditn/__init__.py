"""CPU inference engine for the DITN super-resolution transformer family.

The package provides the UFONE-based network in three stock configurations
(ditn, ditn-tiny, ditn-real), two numerically equivalent attention
implementations (a plain reference operator graph and a fused
single-pass path), operator-level instrumentation, bit-exact weight
serialization, and evaluation utilities (MATLAB-convention bicubic
resampling, luma PSNR/SSIM).
"""

from .attention import IsaWeights, isa_fused, isa_reference, qkv_project_fused, qkv_project_reference
from .counters import OpCounters
from .image_io import ImageU8, UnsupportedImageError, load_image, rgb_to_y, save_image, to_float, to_u8
from .metrics import EvalResult, psnr_y, ssim_y
from .model import (
    FUSED,
    REFERENCE,
    ConfigError,
    Model,
    ModelConfig,
    count_params,
    count_params_breakdown,
    ditn_forward,
    estimate_flops,
    estimate_flops_breakdown,
)
from .ops import ConvWeights, GdfnWeights, NormParams, conv2d, fold_patches, gdfn, normalize, pixel_shuffle, split_channels, unfold_patches
from .resize import bicubic_resize
from .tensor import DimensionError, NumericError, Tensor, gemm, l2_normalize_rows, softmax_rows
from .weights import WeightFormatError, WeightStore, load_weights, random_init, save_weights, zero_init

__all__ = [
    "ConfigError",
    "ConvWeights",
    "DimensionError",
    "EvalResult",
    "FUSED",
    "GdfnWeights",
    "ImageU8",
    "IsaWeights",
    "Model",
    "ModelConfig",
    "NormParams",
    "NumericError",
    "OpCounters",
    "REFERENCE",
    "Tensor",
    "UnsupportedImageError",
    "WeightFormatError",
    "WeightStore",
    "bicubic_resize",
    "conv2d",
    "count_params",
    "count_params_breakdown",
    "ditn_forward",
    "estimate_flops",
    "estimate_flops_breakdown",
    "fold_patches",
    "gdfn",
    "gemm",
    "isa_fused",
    "isa_reference",
    "l2_normalize_rows",
    "load_image",
    "load_weights",
    "normalize",
    "pixel_shuffle",
    "psnr_y",
    "qkv_project_fused",
    "qkv_project_reference",
    "random_init",
    "rgb_to_y",
    "save_image",
    "save_weights",
    "softmax_rows",
    "split_channels",
    "ssim_y",
    "to_float",
    "to_u8",
    "unfold_patches",
    "zero_init",
]

__version__ = "0.1.0"
