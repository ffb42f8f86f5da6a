import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import rgbdiff as rd
from rgbdiff.exceptions import DataError
from rgbdiff.pano import (
    PANO_PREFIX_ALT,
    PANO_PREFIX_MAIN,
    load_hdr,
    pano_augmentation_params,
)


def random_pano(seed, h=16):
    rng = np.random.default_rng(seed)
    rgb = rng.uniform(-1, 1, (3, h, 2 * h)).astype(np.float32)
    depth = rng.uniform(-1, 1, (1, h, 2 * h)).astype(np.float32)
    return rd.Panorama(rgbd=rd.RgbdSample(rgb=rgb, depth=depth))


class TestTonemap:
    def test_zero_radiance_maps_to_minus_one(self):
        hdr = np.zeros((3, 8, 8), np.float32)
        assert np.all(rd.tonemap_hdr(hdr) == -1.0)

    def test_unit_exposure_fixed_point(self):
        # exposure * v = 1 saturates to +1 for any gamma
        hdr = np.full((3, 8, 8), 2.0, np.float32)
        for gamma in (1.0, 2.2, 2.6):
            out = rd.tonemap_hdr(hdr, exposure=0.5, gamma=gamma)
            assert np.allclose(out, 1.0)

    def test_quarter_radiance_gamma22(self):
        # 0.25^(1/2.2) = 0.5325205... -> ldr 0.0650410...
        hdr = np.full((3, 4, 4), 0.25, np.float32)
        out = rd.tonemap_hdr(hdr, exposure=1.0, gamma=2.2)
        expected = 0.25 ** (1 / 2.2) * 2 - 1
        assert out[0, 0, 0] == pytest.approx(expected, abs=1e-6)
        assert expected == pytest.approx(0.06504, abs=1e-4)

    def test_monotone(self):
        rng = np.random.default_rng(0)
        v1 = rng.uniform(0, 3, (3, 8, 8)).astype(np.float32)
        v2 = v1 + rng.uniform(0, 1, (3, 8, 8)).astype(np.float32)
        out1 = rd.tonemap_hdr(v1, exposure=0.7, gamma=2.2)
        out2 = rd.tonemap_hdr(v2, exposure=0.7, gamma=2.2)
        assert np.all(out2 >= out1)

    def test_rejects_negative_radiance(self):
        hdr = np.full((3, 4, 4), -0.1, np.float32)
        with pytest.raises(DataError):
            rd.tonemap_hdr(hdr)


class TestRoll:
    def test_fraction_zero_identity(self):
        p = random_pano(1)
        rolled = rd.roll_pano(p, 0.0)
        assert np.array_equal(rolled.rgbd.rgb, p.rgbd.rgb)

    def test_half_roll_involution(self):
        p = random_pano(2)
        twice = rd.roll_pano(rd.roll_pano(p, 0.5), 0.5)
        assert np.array_equal(twice.rgbd.rgb, p.rgbd.rgb)
        assert np.array_equal(twice.rgbd.depth, p.rgbd.depth)

    def test_composition_law_on_exact_shifts(self):
        p = random_pano(3)
        w = p.rgbd.width
        a, b = 5 / w, 11 / w  # integral shifts, so rounding is exact
        left = rd.roll_pano(rd.roll_pano(p, a), b)
        right = rd.roll_pano(p, (a + b) % 1.0)
        assert np.array_equal(left.rgbd.rgb, right.rgbd.rgb)

    def test_lossless_and_norm_preserving(self):
        p = random_pano(4)
        rolled = rd.roll_pano(p, 0.3)
        assert np.sum(np.abs(rolled.rgbd.rgb)) == pytest.approx(
            np.sum(np.abs(p.rgbd.rgb)), rel=0, abs=0
        )
        back = rd.roll_pano(rolled, 1.0 - (round(0.3 * p.rgbd.width) / p.rgbd.width) % 1.0)
        assert np.array_equal(back.rgbd.rgb, p.rgbd.rgb)

    def test_rejects_bad_fraction(self):
        with pytest.raises(DataError):
            rd.roll_pano(random_pano(5), 1.0)


class TestSeam:
    def test_constant_image_zero(self):
        rgb = np.full((3, 8, 16), 0.3, np.float32)
        depth = np.full((1, 8, 16), -0.2, np.float32)
        p = rd.Panorama(rgbd=rd.RgbdSample(rgb=rgb, depth=depth))
        assert rd.seam_discontinuity(p) == 0.0

    def test_hard_seam_value(self):
        # smooth interior, column 0 at -1 and column W-1 at +1: the wrap gap
        # of 2.0 dominates every interior gap
        rgb = np.zeros((3, 8, 16), np.float32)
        depth = np.zeros((1, 8, 16), np.float32)
        rgb[:, :, 0] = -1.0
        rgb[:, :, -1] = 1.0
        depth[:, :, 0] = -1.0
        depth[:, :, -1] = 1.0
        p = rd.Panorama(rgbd=rd.RgbdSample(rgb=rgb, depth=depth))
        assert rd.seam_discontinuity(p) == pytest.approx(2.0)

    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.999))
    @settings(max_examples=25, deadline=None)
    def test_roll_invariance_property(self, seed, fraction):
        p = random_pano(seed % 1000)
        assert rd.seam_discontinuity(rd.roll_pano(p, fraction)) == rd.seam_discontinuity(p)

    def test_roll_invariance_exact_on_random_panos(self):
        for seed in range(5):
            p = random_pano(seed)
            base = rd.seam_discontinuity(p)
            for fraction in (0.1, 0.25, 0.5, 0.77):
                assert rd.seam_discontinuity(rd.roll_pano(p, fraction)) == base

    def test_rejects_non_2to1(self):
        with pytest.raises(DataError):
            rd.Panorama(rgbd=rd.RgbdSample(rgb=np.zeros((3, 16, 16), np.float32),
                                           depth=np.zeros((1, 16, 16), np.float32)))


class TestCaption:
    def test_deterministic(self):
        assert rd.make_pano_caption("a field", 3) == rd.make_pano_caption("a field", 3)

    def test_no_double_prefixing(self):
        for seed in range(20):
            once = rd.make_pano_caption("a city street", seed)
            assert rd.make_pano_caption(once, seed) == once

    def test_prefix_frequencies(self):
        # ~70% "360 view of", ~4% "panoramic view of" over 10^4 seeded draws
        n = 10_000
        main = alt = 0
        for i in range(n):
            c = rd.make_pano_caption(f"caption number {i}", seed=0)
            if c.startswith(PANO_PREFIX_MAIN):
                main += 1
            elif c.startswith(PANO_PREFIX_ALT):
                alt += 1
        assert abs(main / n - 0.70) <= 0.02
        assert abs(alt / n - 0.04) <= 0.01

    def test_rejects_empty(self):
        with pytest.raises(DataError):
            rd.make_pano_caption("", 0)


class TestHdrIo:
    def test_load_hdr_accepts_hwc_and_chw(self, tmp_path):
        arr = np.random.default_rng(0).uniform(0, 4, (8, 16, 3)).astype(np.float32)
        np.save(tmp_path / "a.npy", arr)
        chw = load_hdr(tmp_path / "a.npy")
        assert chw.shape == (3, 8, 16)
        np.save(tmp_path / "b.npy", chw)
        assert np.array_equal(load_hdr(tmp_path / "b.npy"), chw)

    def test_load_hdr_rejects_negative(self, tmp_path):
        arr = -np.ones((3, 8, 16), np.float32)
        np.save(tmp_path / "bad.npy", arr)
        with pytest.raises(DataError):
            load_hdr(tmp_path / "bad.npy")

    def test_augmentation_params_deterministic(self):
        a = pano_augmentation_params(1, "scene", 0)
        b = pano_augmentation_params(1, "scene", 0)
        assert a == b
        c = pano_augmentation_params(1, "scene", 1)
        assert c != a
