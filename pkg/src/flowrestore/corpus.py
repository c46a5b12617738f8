"""Seeded procedural image corpus.

Four generator families (smooth blobs, oriented stripes, checkerboards,
low-pass-filtered noise) at any square size, every pixel in [0, 1], fully
determined by (kind, size, seed). Keeps datasets out of the test path.
"""

from __future__ import annotations

import numpy as np

from .degrade import gaussian_kernel
from .numerics import RngStream, conv2d_circular

KINDS = ("smooth-blobs", "stripes", "checkerboard", "filtered-noise")


def _normalize(img: np.ndarray) -> np.ndarray:
    lo, hi = float(img.min()), float(img.max())
    if hi - lo < 1e-12:
        return np.full_like(img, 0.5)
    return (img - lo) / (hi - lo)


def _smooth_blobs(size: int, rng: RngStream) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    img = np.zeros((size, size))
    for _ in range(4):
        ci, cj = rng.uniform((2,)) * size
        width = size * (0.125 + 0.125 * rng.uniform())
        amp = 0.5 + 0.5 * rng.uniform()
        img += amp * np.exp(-((ii - ci) ** 2 + (jj - cj) ** 2)
                            / (2.0 * width ** 2))
    return _normalize(img)


def _stripes(size: int, rng: RngStream) -> np.ndarray:
    theta = rng.uniform() * np.pi
    freq = (1.5 + 2.5 * rng.uniform()) / size
    phase = rng.uniform() * 2.0 * np.pi
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    wave = np.sin(2.0 * np.pi * freq
                  * (np.cos(theta) * ii + np.sin(theta) * jj) + phase)
    return 0.5 + 0.45 * wave


def _checkerboard(size: int, rng: RngStream) -> np.ndarray:
    cell = int(2 ** rng.integers(1, 4))  # 2, 4, or 8
    oi, oj = int(rng.integers(0, cell)), int(rng.integers(0, cell))
    low = 0.2 * rng.uniform()
    high = 0.8 + 0.2 * rng.uniform()
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    board = (((ii + oi) // cell + (jj + oj) // cell) % 2).astype(np.float64)
    return low + (high - low) * board


def _filtered_noise(size: int, rng: RngStream) -> np.ndarray:
    noise = rng.normal((size, size))
    kernel = gaussian_kernel(size=min(9, size - 1 + size % 2), std=2.0)
    return _normalize(conv2d_circular(noise, kernel))


_GENERATORS = {
    "smooth-blobs": _smooth_blobs,
    "stripes": _stripes,
    "checkerboard": _checkerboard,
    "filtered-noise": _filtered_noise,
}


def generate_image(kind: str, size: int, rng: RngStream) -> np.ndarray:
    """One procedural image of the given kind, values in [0, 1]."""
    try:
        gen = _GENERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown corpus kind: {kind!r}; "
                         f"expected one of {KINDS}") from None
    if size < 4:
        raise ValueError("size must be >= 4")
    return gen(size, rng)


def make_corpus(count: int, size: int, seed: int,
                kinds: tuple[str, ...] = KINDS) -> list[np.ndarray]:
    """`count` images cycling through `kinds`, deterministic in (seed, i)."""
    base = RngStream(seed)
    return [generate_image(kinds[i % len(kinds)], size,
                           base.derive("corpus", i))
            for i in range(count)]
