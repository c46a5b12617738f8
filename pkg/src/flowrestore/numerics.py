"""Float64 tensor helpers, counter-based RNG streams, and circular convolution.

Tensors are contiguous float64 numpy arrays. Binary operations demand exactly
matching shapes: silent broadcasting has no place in code whose outputs feed
exponential bound certificates. Every stochastic quantity in the package is
drawn from an :class:`RngStream`, so any run is replayable from one master
seed and independent work units (images, paths, probes) get independent
substreams.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(h: int) -> int:
    h = (h + _GOLDEN) & _MASK64
    z = h
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_stream_id(*parts: int | str) -> int:
    """Mix integers and string tags into a single 64-bit stream id.

    Chained splitmix64 over the parts; string tags are folded in as their
    UTF-8 bytes so `derive_stream_id(seed, "observe", i)` gives well-spread,
    collision-resistant ids for per-purpose substreams.
    """
    h = 0
    for part in parts:
        if isinstance(part, str):
            for chunk in part.encode("utf-8"):
                h = _splitmix64(h ^ chunk)
        else:
            h = _splitmix64(h ^ (int(part) & _MASK64))
    return h


class RngStream:
    """Seeded, replayable source of randomness.

    The pair (master_seed, stream_id) keys a counter-based Philox generator,
    so it fully determines the sample sequence; :meth:`reset` rewinds to the
    beginning. Distinct stream ids under the same master seed yield
    statistically independent streams. Single-owner: do not share one stream
    across threads.
    """

    def __init__(self, master_seed: int, stream_id: int = 0):
        self.master_seed = int(master_seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self.reset()

    def reset(self) -> None:
        """Rewind to the start of the stream."""
        bitgen = np.random.Philox(key=np.array(
            [self.master_seed, self.stream_id], dtype=np.uint64))
        self._gen = np.random.Generator(bitgen)

    def derive(self, *parts: int | str) -> "RngStream":
        """A fresh stream under the same master seed, keyed by `parts`.

        The current stream_id is folded in, so derivation chains stay
        collision-resistant.
        """
        return RngStream(self.master_seed,
                         derive_stream_id(self.stream_id, *parts))

    def normal(self, shape: Iterable[int] | int = ()) -> np.ndarray | float:
        """Standard normal draws of the given shape (scalar for shape ())."""
        out = self._gen.standard_normal(size=tuple(np.atleast_1d(shape)))
        return out if out.ndim else float(out)

    def uniform(self, shape: Iterable[int] | int = ()) -> np.ndarray | float:
        """Uniform [0, 1) draws of the given shape."""
        out = self._gen.random(size=tuple(np.atleast_1d(shape)))
        return out if out.ndim else float(out)

    def integers(self, low: int, high: int,
                 shape: Iterable[int] | int = ()) -> np.ndarray | int:
        """Uniform integers in [low, high)."""
        out = self._gen.integers(low, high, size=tuple(np.atleast_1d(shape)))
        return out if out.ndim else int(out)


def gaussian_sample(rng: RngStream, shape: Iterable[int]) -> np.ndarray:
    """I.i.d. standard normal tensor of the given (non-empty) shape."""
    shape = tuple(shape)
    if len(shape) == 0:
        raise ValueError("gaussian_sample requires a non-empty shape")
    return rng.normal(shape)


def tensor(values, shape: Iterable[int] | None = None) -> np.ndarray:
    """Build a contiguous float64 tensor, rejecting NaN/Inf input."""
    arr = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
    if shape is not None:
        arr = np.ascontiguousarray(arr.reshape(tuple(shape)))
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor input contains non-finite values")
    return arr


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise a + b; shapes must match exactly."""
    _check_same_shape(a, b)
    return a + b


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise a - b; shapes must match exactly."""
    _check_same_shape(a, b)
    return a - b


def scale(a: np.ndarray, c: float) -> np.ndarray:
    """Scalar multiple c * a."""
    return a * float(c)


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Full inner product over all entries; shapes must match exactly."""
    _check_same_shape(a, b)
    return float(np.vdot(a, b))


def norm_l2(a: np.ndarray) -> float:
    """Euclidean norm over all entries."""
    return float(np.linalg.norm(a.ravel()))


def map_elementwise(fn: Callable[[np.ndarray], np.ndarray],
                    a: np.ndarray) -> np.ndarray:
    """Apply a vectorized elementwise function, preserving shape."""
    out = np.asarray(fn(a), dtype=np.float64)
    _check_same_shape(out, a)
    return out


def _check_kernel(image: np.ndarray, kernel: np.ndarray) -> None:
    if image.ndim != 2 or kernel.ndim != 2:
        raise ValueError("conv2d_circular expects 2-D image and kernel")
    kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel sides must be odd, got {kernel.shape}")
    if kh > image.shape[0] or kw > image.shape[1]:
        raise ValueError("kernel larger than image")


def _conv2d_direct(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape
    ch, cw = kh // 2, kw // 2
    out = np.zeros_like(image)
    for a in range(kh):
        for b in range(kw):
            out += kernel[a, b] * np.roll(image, (a - ch, b - cw),
                                          axis=(0, 1))
    return out


def _conv2d_fft(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape
    kpad = np.zeros_like(image)
    kpad[:kh, :kw] = kernel
    # Shift so the kernel center sits at index (0, 0) of the padded grid.
    kpad = np.roll(kpad, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    spec = np.fft.rfft2(image) * np.fft.rfft2(kpad)
    return np.fft.irfft2(spec, s=image.shape)


def conv2d_circular(image: np.ndarray, kernel: np.ndarray,
                    method: str = "fft") -> np.ndarray:
    """Circular (periodic) 2-D convolution; output shape equals input shape.

    Parameters
    ----------
    image : 2-D array.
    kernel : 2-D array with odd side lengths, centered on its middle entry.
    method : "fft" (diagonalized, default) or "direct" (explicit shifted
        sums). The two paths agree to 1e-10 and tests hold them to it.
    """
    _check_kernel(image, kernel)
    if method == "direct":
        return _conv2d_direct(image, kernel)
    if method == "fft":
        return _conv2d_fft(image, kernel)
    raise ValueError(f"unknown convolution method: {method!r}")
