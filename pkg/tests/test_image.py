import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semidirect.image import (IntensityImage, build_pyramid, load_image,
                              sample_bilinear, save_png)


def make_image(arr):
    return IntensityImage(np.asarray(arr, dtype=float))


class TestPyramid:
    def test_constant_image_all_levels_constant(self):
        pyr = build_pyramid(make_image(np.full((64, 64), 41.0)), 2)
        for lvl in range(2):
            assert np.allclose(pyr.levels[lvl], 41.0)
            assert np.allclose(pyr.grad_x[lvl], 0.0)
            assert np.allclose(pyr.grad_y[lvl], 0.0)

    def test_level_sizes_halve(self):
        pyr = build_pyramid(make_image(np.zeros((128, 128))), 3)
        assert [l.shape for l in pyr.levels] == [(128, 128), (64, 64), (32, 32)]

    def test_linear_ramp_gradient(self):
        x = np.tile(np.arange(64, dtype=float), (64, 1))
        pyr = build_pyramid(make_image(x), 1)
        assert np.allclose(pyr.grad_x[0][1:-1, 1:-1], 1.0)
        assert np.allclose(pyr.grad_y[0][1:-1, 1:-1], 0.0)

    def test_too_small_raises(self):
        with pytest.raises(ValueError):
            build_pyramid(make_image(np.zeros((40, 40))), 2)

    def test_mean_preserved_even_sizes(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 255, size=(128, 96))
        pyr = build_pyramid(make_image(img), 2)
        assert abs(pyr.levels[1].mean() - img.mean()) < 1e-9


class TestBilinear:
    def setup_method(self):
        rng = np.random.default_rng(1)
        self.grid = rng.uniform(0, 255, size=(48, 64))
        self.pyr = build_pyramid(make_image(self.grid), 1)

    def test_integer_position_exact(self):
        val, _, _ = sample_bilinear(self.pyr, 0, 7.0, 5.0)
        assert val == pytest.approx(self.grid[5, 7], abs=1e-12)

    def test_midpoint(self):
        grid = np.full((40, 40), 10.0)
        grid[:, 20:] = 20.0
        pyr = build_pyramid(make_image(grid), 1)
        val, _, _ = sample_bilinear(pyr, 0, 19.5, 10.0)
        assert val == pytest.approx(15.0)

    def test_out_of_bounds_returns_none(self):
        assert sample_bilinear(self.pyr, 0, 0.5, 10.0) is None
        assert sample_bilinear(self.pyr, 0, 10.0, 46.5) is None

    @given(st.floats(1.0, 62.0), st.floats(1.0, 46.0))
    @settings(max_examples=200, deadline=None)
    def test_matches_direct_formula(self, x, y):
        out = sample_bilinear(self.pyr, 0, x, y)
        assert out is not None
        x0, y0 = min(int(x), 61), min(int(y), 45)
        fx, fy = x - x0, y - y0
        expected = (self.grid[y0, x0] * (1 - fx) * (1 - fy)
                    + self.grid[y0, x0 + 1] * fx * (1 - fy)
                    + self.grid[y0 + 1, x0] * (1 - fx) * fy
                    + self.grid[y0 + 1, x0 + 1] * fx * fy)
        assert out[0] == pytest.approx(expected, abs=1e-12)

    def test_continuity(self):
        max_grad = max(np.abs(self.pyr.grad_x[0]).max(),
                       np.abs(self.pyr.grad_y[0]).max())
        rng = np.random.default_rng(2)
        for _ in range(100):
            x, y = rng.uniform(2, 45, size=2)
            eps = 1e-3
            a = sample_bilinear(self.pyr, 0, x, y)[0]
            b = sample_bilinear(self.pyr, 0, x + eps, y + eps)[0]
            assert abs(a - b) <= 2 * eps * max_grad * 4 + 1e-9


class TestIO:
    def test_png_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        img = make_image(np.rint(rng.uniform(0, 255, size=(36, 48))))
        path = tmp_path / "img.png"
        save_png(img, path)
        loaded = load_image(path)
        assert np.array_equal(loaded.intensities, img.intensities)

    def test_pgm_p5(self, tmp_path):
        data = np.arange(48, dtype=np.uint8).reshape(6, 8)
        path = tmp_path / "img.pgm"
        with open(path, "wb") as f:
            f.write(b"P5\n8 6\n255\n" + data.tobytes())
        loaded = load_image(path)
        assert np.array_equal(loaded.intensities, data.astype(float))

    def test_color_luminance_average(self, tmp_path):
        from PIL import Image

        arr = np.zeros((4, 4, 3), dtype=np.uint8)
        arr[..., 0] = 30
        arr[..., 1] = 60
        arr[..., 2] = 90
        path = tmp_path / "color.png"
        Image.fromarray(arr, mode="RGB").save(path)
        loaded = load_image(path)
        assert np.allclose(loaded.intensities, 60.0)

    def test_invalid_image_rejected(self):
        with pytest.raises(ValueError):
            IntensityImage(np.array([[np.nan, 1.0]]))
        with pytest.raises(ValueError):
            IntensityImage(np.zeros((4, 4)), exposure_t=0.0)
