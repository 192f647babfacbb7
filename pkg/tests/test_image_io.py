import numpy as np
import pytest
from PIL import Image

from ditn.image_io import UnsupportedImageError, load_image, rgb_to_y, save_image, to_float, to_u8
from ditn.tensor import DimensionError


class TestPngIO:
    def test_single_red_pixel_roundtrip(self, tmp_path):
        img = np.array([[[255, 0, 0]]], dtype=np.uint8)
        path = tmp_path / "red.png"
        save_image(img, path)
        assert np.array_equal(load_image(path), img)

    def test_rgb_roundtrip_lossless(self, tmp_path, rng):
        img = rng.integers(0, 256, (9, 13, 3), dtype=np.uint8)
        path = tmp_path / "noise.png"
        save_image(img, path)
        assert np.array_equal(load_image(path), img)

    def test_gray_replicated_to_three_channels(self, tmp_path, rng):
        gray = rng.integers(0, 256, (6, 7), dtype=np.uint8)
        path = tmp_path / "gray.png"
        Image.fromarray(gray, mode="L").save(path)
        loaded = load_image(path)
        assert loaded.shape == (6, 7, 3)
        for ch in range(3):
            assert np.array_equal(loaded[:, :, ch], gray)

    def test_alpha_dropped(self, tmp_path, rng):
        rgba = rng.integers(0, 256, (4, 5, 4), dtype=np.uint8)
        path = tmp_path / "rgba.png"
        Image.fromarray(rgba, mode="RGBA").save(path)
        assert np.array_equal(load_image(path), rgba[:, :, :3])

    def test_sixteen_bit_rejected(self, tmp_path):
        deep = (np.arange(12, dtype=np.uint16).reshape(3, 4) * 5000)
        path = tmp_path / "deep.png"
        Image.fromarray(deep).save(path)  # written as a 16-bit grayscale PNG
        with pytest.raises(UnsupportedImageError, match="16-bit"):
            load_image(path)

    def test_non_png_rejected(self, tmp_path):
        path = tmp_path / "fake.png"
        path.write_bytes(b"definitely not a png")
        with pytest.raises(UnsupportedImageError):
            load_image(path)


class TestFloatConversion:
    def test_extremes(self):
        img = np.array([[[255, 255, 255]], [[0, 0, 0]]], dtype=np.uint8)
        t = to_float(img)
        assert t.shape == (3, 2, 1)
        assert t.max() == 1.0 and t.min() == 0.0
        assert np.array_equal(to_u8(t), img)

    def test_half_rounds_away_from_zero(self):
        t = np.full((3, 1, 1), 0.5, dtype=np.float32)
        assert to_u8(t)[0, 0, 0] == 128

    def test_roundtrip_exhaustive(self):
        values = np.arange(256, dtype=np.uint8)
        img = np.stack([values] * 3, axis=-1)[None]  # 1 x 256 x 3
        assert np.array_equal(to_u8(to_float(img)), img)

    def test_out_of_range_clamped(self):
        t = np.array([[[-0.25]], [[1.5]], [[0.5]]], dtype=np.float32)
        out = to_u8(t)
        assert out[0, 0, 0] == 0 and out[0, 0, 1] == 255

    def test_shape_validation(self):
        with pytest.raises(DimensionError):
            to_float(np.zeros((3, 4, 4), np.uint8))
        with pytest.raises(DimensionError):
            to_u8(np.zeros((4, 4, 3), np.float32))


class TestLuma:
    def test_black(self):
        img = np.zeros((2, 2, 3), dtype=np.uint8)
        assert np.allclose(rgb_to_y(img), 16.0)

    def test_white(self):
        img = np.full((2, 2, 3), 255, dtype=np.uint8)
        assert np.allclose(rgb_to_y(img), 235.0, atol=1e-3)

    def test_pure_red(self):
        img = np.zeros((1, 1, 3), dtype=np.uint8)
        img[0, 0, 0] = 255
        assert abs(float(rgb_to_y(img)[0, 0]) - 81.481) <= 1e-3

    def test_range(self, rng):
        img = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
        y = rgb_to_y(img)
        assert y.min() >= 16.0 - 1e-4 and y.max() <= 235.0 + 1e-4
