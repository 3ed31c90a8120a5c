import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import DATA
from primephase import ConfigError
from primephase.imaging import (PSNR_CAP, GrayImage, assemble_patches, capped_psnr, extract_patches,
                                load_image, psnr, read_pgm, ssim, synthetic_texture, to_grayscale,
                                write_pgm)


def direct_ssim(a, b, win=8, peak=1.0):
    # plain double loop over every window, two-pass statistics
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    vals = []
    for i in range(a.shape[0] - win + 1):
        for j in range(a.shape[1] - win + 1):
            wa, wb = a[i:i + win, j:j + win], b[i:i + win, j:j + win]
            ma, mb = wa.mean(), wb.mean()
            va, vb = ((wa - ma) ** 2).mean(), ((wb - mb) ** 2).mean()
            cov = ((wa - ma) * (wb - mb)).mean()
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


class TestPatches:
    def test_single_patch(self, rng):
        img = rng.random((8, 8))
        g = extract_patches(img)
        assert g.n_patches == 1
        assert np.array_equal(g.patch_matrix[:, 0], img.ravel())

    def test_count_16(self, rng):
        assert extract_patches(rng.random((16, 16))).n_patches == 4

    def test_512_round_trip(self, rng):
        img = rng.random((512, 512))
        g = extract_patches(img)
        assert g.n_patches == 4096
        assert np.array_equal(assemble_patches(g, 512, 512).pixels, img)

    def test_constant_overlap(self):
        img = np.full((24, 24), 0.37)
        out = assemble_patches(extract_patches(img, stride=4), 24, 24).pixels
        assert np.allclose(out, 0.37, atol=1e-15)

    def test_overlap_round_trip(self, rng):
        img = rng.random((32, 40))
        out = assemble_patches(extract_patches(img, stride=4), 40, 32).pixels
        assert np.max(np.abs(out - img)) <= 1e-12

    def test_truncation(self, rng):
        img = rng.random((20, 19))
        g = extract_patches(img)
        assert (g.rows, g.cols) == (2, 2)
        out = assemble_patches(g, 19, 20).pixels
        assert np.array_equal(out[:16, :16], img[:16, :16])
        assert not np.any(out[16:]) and not np.any(out[:, 16:])

    def test_golden_layout(self):
        golden = json.loads((DATA / "ramp16_layout.json").read_text())
        ramp = (16 * np.arange(16)[:, None] + np.arange(16)[None, :]) / 255.0
        for lay in golden["layouts"]:
            g = extract_patches(ramp, lay["patch_w"], lay["patch_h"], lay["stride"])
            assert np.array_equal(g.patch_matrix.real.T, np.array(lay["columns"]))
            assert not np.any(g.patch_matrix.imag)

    def test_mismatched_size(self, rng):
        g = extract_patches(rng.random((16, 16)))
        with pytest.raises(ConfigError):
            assemble_patches(g, 24, 16)

    def test_patch_too_large(self):
        with pytest.raises(ConfigError):
            extract_patches(np.zeros((4, 4)))

    @given(st.integers(8, 40), st.integers(8, 40), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_exact_tiling_round_trip(self, h, w, stride, seed):
        img = np.random.default_rng(seed).random((h, w))
        g = extract_patches(img, stride=stride)
        out = assemble_patches(g, w, h).pixels
        ch, cw = (g.rows - 1) * stride + 8, (g.cols - 1) * stride + 8
        assert np.max(np.abs(out[:ch, :cw] - img[:ch, :cw])) <= 1e-12


class TestMetrics:
    def test_identical_capped(self, rng):
        img = rng.random((16, 16))
        assert psnr(img, img) == np.inf
        assert capped_psnr(img, img) == PSNR_CAP == 200.0

    def test_psnr_formula(self):
        a = np.zeros((10, 10))
        b = np.full((10, 10), 0.1)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-12)

    def test_checkerboard(self):
        cb = (np.indices((8, 8)).sum(0) % 2).astype(float)
        assert psnr(cb, 1 - cb) == pytest.approx(0.0, abs=1e-12)

    def test_ssim_identical(self, rng):
        img = rng.random((16, 16))
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_ssim_against_direct_sum(self, rng):
        ref = rng.random((24, 20))
        const = np.full_like(ref, 0.5)
        assert abs(ssim(ref, const) - direct_ssim(ref, const)) <= 1e-10
        other = rng.random((24, 20))
        assert abs(ssim(ref, other) - direct_ssim(ref, other)) <= 1e-10

    def test_ssim_inverted(self, rng):
        ref = rng.random((32, 32))
        assert ssim(1 - ref, ref) < 0.3

    @given(st.integers(0, 2**32 - 1))
    def test_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.random((12, 12)), rng.random((12, 12))
        assert psnr(a, b) == psnr(b, a)
        assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12

    def test_size_mismatch(self):
        with pytest.raises(ConfigError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))
        with pytest.raises(ConfigError):
            ssim(np.zeros((4, 4)), np.zeros((4, 4)))


class TestIO:
    def test_pgm_round_trip(self, tmp_path, rng):
        img = np.round(rng.random((7, 11)) * 255) / 255
        write_pgm(tmp_path / "a.pgm", img)
        back = read_pgm(tmp_path / "a.pgm")
        assert np.array_equal(back.pixels, img)
        assert load_image(tmp_path / "a.pgm").pixels.shape == (7, 11)

    def test_pgm_comment_header(self, tmp_path):
        (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
        assert np.array_equal(read_pgm(tmp_path / "c.pgm").pixels, [[0.0, 1.0]])

    def test_png_through_pillow(self, tmp_path):
        Image = pytest.importorskip("PIL.Image")
        rgb = np.zeros((4, 5, 3), dtype=np.uint8)
        rgb[..., 0] = 255
        Image.fromarray(rgb).save(tmp_path / "r.png")
        assert np.allclose(load_image(tmp_path / "r.png").pixels, 0.299)

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")

    def test_grayscale_weights(self):
        px = np.array([[[1.0, 1.0, 1.0], [0.0, 1.0, 0.0]]])
        assert np.allclose(to_grayscale(px), [[1.0, 0.587]])

    def test_texture(self):
        t = synthetic_texture(64, 3)
        assert t.pixels.min() == 0 and t.pixels.max() == 1
        assert np.array_equal(t.pixels, synthetic_texture(64, 3).pixels)

    def test_invalid_image(self):
        with pytest.raises(ConfigError):
            GrayImage(np.array([[np.nan]]))
