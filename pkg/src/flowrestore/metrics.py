"""PSNR and SSIM for images with values in [0, 1].

SSIM uses the field-standard formulation: 11x11 Gaussian window with std
1.5, C1 = (0.01 L)^2, C2 = (0.03 L)^2, L = 1, computed over valid window
positions only (no padding). Color images score as the mean over channels.
"""

from __future__ import annotations

import numpy as np

_C1 = 0.01 ** 2
_C2 = 0.03 ** 2


def _check_pair(reference: np.ndarray, candidate: np.ndarray) -> None:
    if reference.shape != candidate.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs "
                         f"{candidate.shape}")
    if reference.size == 0:
        raise ValueError("empty image")
    if np.min(reference) < 0.0 or np.max(reference) > 1.0:
        raise ValueError("reference values must lie in [0, 1]")


def psnr(reference: np.ndarray, candidate: np.ndarray) -> float:
    """10 log10(1 / MSE) in dB; identical inputs give +inf."""
    reference = np.asarray(reference, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    _check_pair(reference, candidate)
    mse = float(np.mean((reference - candidate) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def gaussian_window(size: int = 11, std: float = 1.5) -> np.ndarray:
    """Normalized 2-D Gaussian weighting window."""
    if size < 1 or size % 2 == 0:
        raise ValueError("window size must be odd and positive")
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2.0 * std ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _windowed_moments(img: np.ndarray, window: np.ndarray):
    view = np.lib.stride_tricks.sliding_window_view(img, window.shape)
    mu = np.tensordot(view, window, axes=((2, 3), (0, 1)))
    sq = np.tensordot(view * view, window, axes=((2, 3), (0, 1)))
    return view, mu, sq - mu * mu


def ssim_parts(reference: np.ndarray, candidate: np.ndarray,
               window_size: int = 11, window_std: float = 1.5
               ) -> tuple[float, float]:
    """Mean luminance term and mean contrast-structure term over windows."""
    reference = np.asarray(reference, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    _check_pair(reference, candidate)
    if reference.ndim == 3:
        parts = [ssim_parts(reference[..., c], candidate[..., c],
                            window_size, window_std)
                 for c in range(reference.shape[2])]
        return (float(np.mean([p[0] for p in parts])),
                float(np.mean([p[1] for p in parts])))
    if reference.ndim != 2:
        raise ValueError("images must be (H, W) or (H, W, 3)")
    if min(reference.shape) < window_size:
        raise ValueError("image smaller than the SSIM window")
    w = gaussian_window(window_size, window_std)
    vx, mx, varx = _windowed_moments(reference, w)
    vy, my, vary = _windowed_moments(candidate, w)
    cov = np.tensordot(vx * vy, w, axes=((2, 3), (0, 1))) - mx * my
    lum = (2.0 * mx * my + _C1) / (mx * mx + my * my + _C1)
    cs = (2.0 * cov + _C2) / (varx + vary + _C2)
    return float(lum.mean()), float(cs.mean())


def ssim(reference: np.ndarray, candidate: np.ndarray,
         window_size: int = 11, window_std: float = 1.5) -> float:
    """Mean local SSIM over valid window positions, in [-1, 1]."""
    reference = np.asarray(reference, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    _check_pair(reference, candidate)
    if reference.ndim == 3:
        return float(np.mean([ssim(reference[..., c], candidate[..., c],
                                   window_size, window_std)
                              for c in range(reference.shape[2])]))
    if reference.ndim != 2:
        raise ValueError("images must be (H, W) or (H, W, 3)")
    if min(reference.shape) < window_size:
        raise ValueError("image smaller than the SSIM window")
    w = gaussian_window(window_size, window_std)
    vx, mx, varx = _windowed_moments(reference, w)
    vy, my, vary = _windowed_moments(candidate, w)
    cov = np.tensordot(vx * vy, w, axes=((2, 3), (0, 1))) - mx * my
    num = (2.0 * mx * my + _C1) * (2.0 * cov + _C2)
    den = (mx * mx + my * my + _C1) * (varx + vary + _C2)
    return float(np.mean(num / den))
