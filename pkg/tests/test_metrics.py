"""PSNR/SSIM: closed-form cases, symmetry, component behavior."""

import numpy as np
import pytest

from flowrestore.corpus import generate_image
from flowrestore.metrics import gaussian_window, psnr, ssim, ssim_parts
from flowrestore.numerics import RngStream


def _pattern(size=64, seed=0):
    return generate_image("smooth-blobs", size, RngStream(seed).derive("m"))


def test_psnr_identical_is_inf():
    img = _pattern()
    assert psnr(img, img) == float("inf")


def test_psnr_constant_offset_exact():
    img = np.full((32, 32), 0.5)
    assert psnr(img, img + 0.1) == pytest.approx(20.0, abs=1e-12)


def test_psnr_gaussian_noise_twenty_db():
    # sigma = 0.1 on a [0,1] image: MSE ~ 0.01, PSNR ~ 20 dB
    rng = RngStream(3).derive("noise")
    vals = []
    for i in range(10):
        img = generate_image("filtered-noise", 64, rng)
        noisy = img + 0.1 * rng.normal(img.shape)
        vals.append(psnr(img, noisy))
    assert np.mean(vals) == pytest.approx(20.0, abs=0.3)


def test_psnr_symmetry():
    a = _pattern(seed=1)
    b = np.clip(a + 0.02 * RngStream(2).normal(a.shape), 0, 1)
    assert psnr(a, b) == psnr(b, a)


def test_psnr_rejects_mismatch_and_out_of_range():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(ValueError):
        psnr(np.full((4, 4), 1.5), np.zeros((4, 4)))


def test_ssim_identical_is_one():
    img = _pattern()
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_ssim_negative_image_low():
    # stripes span [0.05, 0.95]; the negative anticorrelates every window
    img = generate_image("stripes", 64, RngStream(5).derive("s"))
    assert ssim(img, 1.0 - img) < 0.2


def test_ssim_constant_shift_components():
    img = _pattern(seed=7)
    shifted = img + 0.05
    lum, cs = ssim_parts(img, shifted)
    assert cs == pytest.approx(1.0, abs=1e-9)  # covariance unchanged
    assert lum < 1.0
    val = ssim(img, shifted)
    assert 0.5 < val < 1.0


def test_ssim_symmetry():
    a = _pattern(seed=8)
    b = np.clip(a + 0.05 * RngStream(9).normal(a.shape), 0, 1)
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-12


def test_ssim_color_is_channel_mean():
    rng = RngStream(10).derive("c")
    a = rng.uniform((16, 16, 3))
    b = np.clip(a + 0.03 * rng.normal(a.shape), 0, 1)
    per_channel = [ssim(a[..., c], b[..., c]) for c in range(3)]
    assert ssim(a, b) == pytest.approx(np.mean(per_channel), abs=1e-14)


def test_ssim_rejects_small_images():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_ssim_in_valid_range_on_noise_pairs():
    rng = RngStream(11).derive("rng")
    for _ in range(5):
        a = rng.uniform((24, 24))
        b = rng.uniform((24, 24))
        v = ssim(a, b)
        assert -1.0 <= v <= 1.0


def test_gaussian_window_normalized():
    w = gaussian_window()
    assert w.shape == (11, 11)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert w[5, 5] == w.max()
    assert np.allclose(w, w.T)
    with pytest.raises(ValueError):
        gaussian_window(10)
