"""PSNR and SSIM on the luma channel with border cropping.

Both metrics follow the standard super-resolution evaluation protocol:
convert to the [16, 235] luma channel, shave ``crop`` pixels from every
border (conventionally the scale factor), and compare on the [0, 255] scale.
SSIM is the single-scale reference definition: 11x11 Gaussian window with
sigma 1.5, K1 = 0.01, K2 = 0.03, L = 255, valid-mode windowing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .image_io import ImageU8, rgb_to_y
from .tensor import DimensionError

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_L = 255.0


@dataclass
class EvalResult:
    """Aggregate metrics over an image set."""

    psnr_db: float
    ssim: float
    n_images: int
    per_image: list[tuple[str, float, float]] = field(default_factory=list)

    def summary_lines(self) -> list[str]:
        return [
            f"metric.psnr_y = {self.psnr_db:.4f}",
            f"metric.ssim_y = {self.ssim:.6f}",
            f"metric.n_images = {self.n_images}",
        ]


def _cropped_luma_pair(a: ImageU8, b: ImageU8, crop: int) -> tuple[np.ndarray, np.ndarray]:
    if a.shape != b.shape:
        raise DimensionError(f"image shapes {a.shape} and {b.shape} differ")
    ya = rgb_to_y(a).astype(np.float64)
    yb = rgb_to_y(b).astype(np.float64)
    if crop:
        if 2 * crop >= min(ya.shape):
            raise DimensionError(f"crop {crop} leaves no pixels in a {ya.shape} image")
        ya = ya[crop:-crop, crop:-crop]
        yb = yb[crop:-crop, crop:-crop]
    return ya, yb


def psnr_from_y(ya: np.ndarray, yb: np.ndarray) -> float:
    """PSNR in dB between two luma planes on the [0, 255] scale."""
    if ya.shape != yb.shape:
        raise DimensionError(f"luma shapes {ya.shape} and {yb.shape} differ")
    mse = float(np.mean((np.asarray(ya, dtype=np.float64) - np.asarray(yb, dtype=np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def psnr_y(a: ImageU8, b: ImageU8, crop: int = 0) -> float:
    """Luma PSNR with ``crop`` border pixels shaved; +inf for identical images."""
    ya, yb = _cropped_luma_pair(a, b, crop)
    return psnr_from_y(ya, yb)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Valid-mode 2-D correlation via a sliding-window view."""
    k = window.shape[0]
    view = np.lib.stride_tricks.sliding_window_view(img, (k, k))
    return np.einsum("ijkl,kl->ij", view, window)


def ssim_y(a: ImageU8, b: ImageU8, crop: int = 0) -> float:
    """Mean structural similarity of the cropped luma planes; 1.0 for identical images."""
    ya, yb = _cropped_luma_pair(a, b, crop)
    if min(ya.shape) < _SSIM_WINDOW:
        raise DimensionError(
            f"image of size {ya.shape} after crop is smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} SSIM window"
        )
    window = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = (_SSIM_K1 * _SSIM_L) ** 2
    c2 = (_SSIM_K2 * _SSIM_L) ** 2
    mu_a = _filter_valid(ya, window)
    mu_b = _filter_valid(yb, window)
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = _filter_valid(ya * ya, window) - mu_aa
    var_b = _filter_valid(yb * yb, window) - mu_bb
    cov = _filter_valid(ya * yb, window) - mu_ab
    ssim_map = ((2.0 * mu_ab + c1) * (2.0 * cov + c2)) / ((mu_aa + mu_bb + c1) * (var_a + var_b + c2))
    return float(np.mean(ssim_map))
