import numpy as np
import pytest

from nightweather.core import DimensionMismatch, ImageRgb, InvalidInput, Kernel2d, Plane
from nightweather.flare import (
    LIGHT_FLOOR,
    FlareParams,
    apply_flare,
    apsf_kernel,
    extract_light_sources,
)

from conftest import conv_oracle, gaussian_blur_oracle, random_image


class TestExtractLightSources:
    def test_all_black(self):
        img = ImageRgb(np.zeros((8, 8, 3)))
        np.testing.assert_array_equal(extract_light_sources(img).data, 0.0)

    def test_dim_image_below_floor(self):
        img = ImageRgb(np.full((8, 8, 3), 0.3))
        np.testing.assert_array_equal(extract_light_sources(img).data, 0.0)

    def test_single_saturated_pixel_is_maximal(self):
        data = np.full((9, 9, 3), 0.05)
        data[4, 4] = 1.0
        light = extract_light_sources(ImageRgb(data), tau=99.0, feather_radius=2.0).data
        assert light[4, 4] > 0.0
        assert light[4, 4] == light.max()

    def test_bright_patch_matches_threshold_feather_oracle(self):
        data = np.full((16, 16, 3), 0.1)
        data[6:8, 6:8] = 1.0
        img = ImageRgb(data)
        light = extract_light_sources(img, tau=99.0, feather_radius=2.0).data

        lum = 0.2126 * data[:, :, 0] + 0.7152 * data[:, :, 1] + 0.0722 * data[:, :, 2]
        thresh = max(float(np.percentile(lum, 99.0)), LIGHT_FLOOR)
        hard = (lum >= thresh).astype(np.float64)
        soft = gaussian_blur_oracle(hard, 1.0)
        expected = np.clip(np.maximum(hard, soft * np.minimum(lum / thresh, 1.0)), 0.0, 1.0)
        np.testing.assert_allclose(light, expected, atol=1e-9)

    def test_invalid_percentile(self):
        with pytest.raises(InvalidInput):
            extract_light_sources(random_image(0), tau=100.0)


class TestApsfKernel:
    @pytest.mark.parametrize("size,sigma,gamma", [(5, 1.0, 2.0), (9, 2.5, 1.5), (21, 3.0, 2.5)])
    def test_normalized(self, size, sigma, gamma):
        assert abs(apsf_kernel(size, sigma, gamma).weights.sum() - 1.0) < 1e-9

    def test_radially_non_increasing(self):
        k = apsf_kernel(9, 2.0, 2.0).weights
        c = 4
        coords = [(y, x) for y in range(9) for x in range(9)]
        radii = {(y, x): np.hypot(y - c, x - c) for y, x in coords}
        for p1 in coords:
            for p2 in coords:
                if radii[p1] < radii[p2]:
                    assert k[p1] >= k[p2] - 1e-15

    def test_center_weight_direct_summation(self):
        k = apsf_kernel(5, 1.0, 2.0)
        total = 0.0
        for y in range(5):
            for x in range(5):
                r = np.hypot(y - 2, x - 2)
                total += (1.0 + r) ** -2.0
        np.testing.assert_allclose(k.weights[2, 2], 1.0 / total, atol=1e-12)

    def test_even_size_rejected(self):
        with pytest.raises(InvalidInput):
            apsf_kernel(4, 1.0, 2.0)


class TestApplyFlare:
    def test_no_light_preserves_scaled_base(self):
        img = random_image(0)
        out, beta = apply_flare(img, Plane(np.zeros((16, 16))), apsf_kernel(5, 1.0, 2.0), FlareParams())
        assert beta == 0.0
        np.testing.assert_array_equal(out.data, 0.995 * img.data)

    def test_identity_kernel_full_light_closed_form(self):
        img = random_image(1)
        # rho = 1, so beta = beta_base; pick beta_base to land at 0.005
        params = FlareParams(alpha=0.995, beta_base=0.005, rho_ref=0.5)
        identity = Kernel2d(np.array([[1.0]]))
        out, beta = apply_flare(img, Plane(np.ones((16, 16))), identity, params)
        assert abs(beta - 0.005) < 1e-15
        np.testing.assert_allclose(out.data, np.clip(0.995 * img.data + 0.005, 0, 1), atol=1e-12)

    def test_four_bright_pixels_beta_and_glow_oracle(self):
        img = random_image(2, 16, 16)
        light = np.zeros((16, 16))
        light[3, 3] = light[3, 12] = light[12, 3] = light[12, 12] = 1.0
        params = FlareParams(alpha=0.995, beta_base=0.3, rho_ref=1.0 / 64.0)
        kernel = apsf_kernel(5, 1.0, 2.0)
        out, beta = apply_flare(img, Plane(light), kernel, params)
        assert abs(beta - 0.3 * min(1.0, (4 / 256) / (1 / 64))) < 1e-15
        glow = conv_oracle(light, kernel.weights)
        expected = np.clip(0.995 * img.data + beta * glow[:, :, None], 0, 1)
        np.testing.assert_allclose(out.data, expected, atol=1e-9)

    def test_never_darkens_below_preserved_base(self):
        img = random_image(3)
        light = (random_image(4).data[:, :, 0] > 0.3).astype(np.float64)
        out, _ = apply_flare(img, Plane(light), apsf_kernel(7, 2.0, 2.0), FlareParams())
        floor = np.minimum(0.995 * img.data, 1.0)
        assert np.all(out.data >= floor - 1e-6)

    def test_beta_monotone_in_light_fraction(self):
        img = random_image(5)
        kernel = apsf_kernel(5, 1.0, 2.0)
        params = FlareParams(beta_base=0.3, rho_ref=1.0 / 64.0)
        betas = []
        for n_bright in (0, 2, 4, 8, 16):
            light = np.zeros((16, 16))
            light.ravel()[:n_bright] = 1.0
            _, beta = apply_flare(img, Plane(light), kernel, params)
            betas.append(beta)
        assert all(b1 <= b2 + 1e-15 for b1, b2 in zip(betas, betas[1:]))

    def test_alpha_one_no_light_is_identity(self):
        img = random_image(6)
        params = FlareParams(alpha=1.0)
        out, _ = apply_flare(img, Plane(np.zeros((16, 16))), apsf_kernel(5, 1.0, 2.0), params)
        np.testing.assert_array_equal(out.data, img.data)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            apply_flare(random_image(7), Plane(np.zeros((4, 4))), apsf_kernel(5, 1.0, 2.0), FlareParams())
