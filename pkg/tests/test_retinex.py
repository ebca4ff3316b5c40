import numpy as np
import pytest

from nightweather.core import ImageRgb, InvalidInput, Plane, SeededRng
from nightweather.retinex import decompose, prior_pyramid

from conftest import bilinear_oracle, gaussian_blur_oracle, random_image


class TestDecompose:
    def test_constant_gray(self):
        img = ImageRgb(np.full((8, 8, 3), 0.5))
        pair = decompose(img, blur_sigma=2.0, eps=1e-3)
        np.testing.assert_allclose(pair.illumination.data, 0.5, atol=1e-12)
        np.testing.assert_allclose(pair.reflectance.data, 1.0, atol=1e-12)

    def test_black_clamps_to_eps(self):
        img = ImageRgb(np.zeros((6, 6, 3)))
        pair = decompose(img, blur_sigma=2.0, eps=1e-3)
        np.testing.assert_allclose(pair.illumination.data, 1e-3, atol=1e-15)
        np.testing.assert_array_equal(pair.reflectance.data, 0.0)

    def test_ramp_matches_blur_divide_oracle(self):
        h, w = 8, 8
        ramp = np.tile(np.linspace(0.1, 0.9, w), (h, 1))
        img = ImageRgb(np.stack([ramp, ramp * 0.8, ramp * 0.6], axis=-1))
        pair = decompose(img, blur_sigma=2.0, eps=1e-3)
        illum_expected = np.clip(gaussian_blur_oracle(ramp, 2.0), 1e-3, 1.0)
        np.testing.assert_allclose(pair.illumination.data, illum_expected, atol=1e-9)
        np.testing.assert_allclose(
            pair.reflectance.data, img.data / illum_expected[:, :, None], atol=1e-9
        )
        recon = pair.reflectance.data * pair.illumination.data[:, :, None]
        unclamped = (pair.illumination.data > 1e-3) & (pair.illumination.data < 1.0)
        assert np.max(np.abs(recon - img.data)[unclamped]) <= 1e-6

    def test_reconstruction_on_random_images(self):
        for seed in range(5):
            img = random_image(seed, 12, 12)
            pair = decompose(img)
            i = pair.illumination.data
            mask = (i > 1e-3) & (i < 1.0)
            recon = pair.reflectance.data * i[:, :, None]
            assert np.max(np.abs(recon - img.data)[mask]) <= 1e-6

    def test_brightening_monotone(self):
        img = random_image(3, 10, 10)
        brighter = ImageRgb(np.minimum(1.0, img.data + 0.1))
        i0 = decompose(img).illumination.data
        i1 = decompose(brighter).illumination.data
        assert np.all(i1 >= i0 - 1e-12)

    def test_invalid_eps(self):
        with pytest.raises(InvalidInput):
            decompose(random_image(0), eps=0.5)


class TestPriorPyramid:
    def test_constant_levels(self):
        pyr = prior_pyramid(Plane(np.full((8, 8), 0.3)))
        for level in pyr.levels:
            np.testing.assert_allclose(level.data, 0.3, atol=1e-12)
            assert level.data.var() == 0.0

    def test_dims_halve(self):
        pyr = prior_pyramid(Plane(np.zeros((8, 8))))
        assert pyr.level1.data.shape == (8, 8)
        assert pyr.level2.data.shape == (4, 4)
        assert pyr.level3.data.shape == (2, 2)

    def test_odd_dims_ceil(self):
        pyr = prior_pyramid(Plane(np.zeros((7, 5))))
        assert pyr.level2.data.shape == (4, 3)
        assert pyr.level3.data.shape == (2, 2)

    def test_checkerboard_level2_matches_oracle(self):
        checker = np.indices((4, 4)).sum(axis=0) % 2
        pyr = prior_pyramid(Plane(checker.astype(np.float64)))
        np.testing.assert_allclose(
            pyr.level2.data, bilinear_oracle(checker.astype(np.float64), 2, 2), atol=1e-12
        )

    def test_too_small_rejected(self):
        with pytest.raises(InvalidInput):
            prior_pyramid(Plane(np.zeros((3, 8))))
