"""Degradation operators, noisy observations, and the quadratic data fidelity.

Design rules
------------
* Every operator is an exact linear map with an exact adjoint: the pair
  (apply, adjoint) satisfies <A x, y> == <x, A^T y> up to roundoff, which the
  tests enforce with random inner-product probes.
* Operators are immutable after construction and pure; randomness (mask
  layout, observation noise) enters only through explicit seeds/streams.
* Images are 2-D arrays; color data is handled channelwise by callers.
"""

from __future__ import annotations

import numpy as np

from .numerics import RngStream, conv2d_circular


def gaussian_kernel(size: int = 9, std: float = 1.0) -> np.ndarray:
    """Normalized 2-D Gaussian kernel with odd side `size`."""
    if size % 2 == 0 or size < 1:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    r = np.arange(size) - size // 2
    g = np.exp(-(r ** 2) / (2.0 * std ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _check_shape(arr: np.ndarray, shape: tuple[int, int]) -> None:
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")


class IdentityNoise:
    """A = Id; degradation is additive noise only."""

    kind = "identity-noise"

    def __init__(self, image_shape: tuple[int, int], noise_std: float = 0.0):
        self.image_shape = tuple(image_shape)
        self.noise_std = float(noise_std)

    def out_shape(self) -> tuple[int, int]:
        return self.image_shape

    def apply(self, x: np.ndarray) -> np.ndarray:
        _check_shape(x, self.image_shape)
        return x.copy()

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        _check_shape(y, self.image_shape)
        return y.copy()


class GaussianBlur:
    """Circular convolution with a normalized Gaussian kernel.

    Circular boundary keeps the operator diagonal in Fourier space, so the
    adjoint is exactly the convolution with the flipped kernel.
    """

    kind = "gaussian-blur"

    def __init__(self, image_shape: tuple[int, int], noise_std: float = 0.0,
                 kernel_std: float = 1.0, kernel_size: int = 9,
                 conv_method: str = "fft"):
        self.image_shape = tuple(image_shape)
        self.noise_std = float(noise_std)
        self.kernel = gaussian_kernel(kernel_size, kernel_std)
        self.conv_method = conv_method

    def out_shape(self) -> tuple[int, int]:
        return self.image_shape

    def apply(self, x: np.ndarray) -> np.ndarray:
        _check_shape(x, self.image_shape)
        return conv2d_circular(x, self.kernel, self.conv_method)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        _check_shape(y, self.image_shape)
        return conv2d_circular(y, self.kernel[::-1, ::-1], self.conv_method)


class Downsample:
    """Non-overlapping block averaging by an integer factor.

    The adjoint spreads each low-res value uniformly over its block scaled by
    1/factor^2, the exact transpose of block averaging.
    """

    kind = "downsample"

    def __init__(self, image_shape: tuple[int, int], noise_std: float = 0.0,
                 factor: int = 2):
        H, W = image_shape
        if H % factor or W % factor:
            raise ValueError(
                f"image shape {image_shape} not divisible by factor {factor}")
        self.image_shape = (H, W)
        self.factor = int(factor)
        self.noise_std = float(noise_std)

    def out_shape(self) -> tuple[int, int]:
        m = self.factor
        return (self.image_shape[0] // m, self.image_shape[1] // m)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if x.shape != self.image_shape:
            raise ValueError(f"expected shape {self.image_shape}, got {x.shape}")
        m = self.factor
        H, W = self.image_shape
        return x.reshape(H // m, m, W // m, m).mean(axis=(1, 3))

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        if y.shape != self.out_shape():
            raise ValueError(f"expected shape {self.out_shape()}, got {y.shape}")
        m = self.factor
        return np.kron(y, np.ones((m, m))) / m ** 2


class PixelMask:
    """Self-adjoint projection onto a kept pixel set (zero elsewhere)."""

    def __init__(self, image_shape: tuple[int, int], mask: np.ndarray,
                 noise_std: float = 0.0):
        if mask.shape != tuple(image_shape):
            raise ValueError("mask shape must match image shape")
        self.image_shape = tuple(image_shape)
        self.mask = mask.astype(np.float64)
        self.noise_std = float(noise_std)

    def out_shape(self) -> tuple[int, int]:
        return self.image_shape

    def apply(self, x: np.ndarray) -> np.ndarray:
        if x.shape != self.image_shape:
            raise ValueError(f"expected shape {self.image_shape}, got {x.shape}")
        return x * self.mask

    adjoint = apply


class RandomMask(PixelMask):
    """Random pixel dropout; the kept set is fixed by mask_seed at build time."""

    kind = "random-mask"

    def __init__(self, image_shape: tuple[int, int], noise_std: float = 0.0,
                 drop_fraction: float = 0.7, mask_seed: int = 0):
        if not 0.0 <= drop_fraction < 1.0:
            raise ValueError("drop_fraction must lie in [0, 1)")
        H, W = image_shape
        rng = RngStream(mask_seed).derive("random-mask")
        n_drop = int(round(drop_fraction * H * W))
        order = np.argsort(rng.uniform((H * W,)), kind="stable")
        mask = np.ones(H * W)
        mask[order[:n_drop]] = 0.0
        super().__init__(image_shape, mask.reshape(H, W), noise_std)
        self.drop_fraction = float(drop_fraction)
        self.mask_seed = int(mask_seed)


class BoxMask(PixelMask):
    """Centered square occlusion covering `area_fraction` of the image."""

    kind = "box-mask"

    def __init__(self, image_shape: tuple[int, int], noise_std: float = 0.0,
                 area_fraction: float = 1.0 / 16.0):
        if not 0.0 < area_fraction < 1.0:
            raise ValueError("area_fraction must lie in (0, 1)")
        H, W = image_shape
        side_h = max(1, int(round(H * area_fraction ** 0.5)))
        side_w = max(1, int(round(W * area_fraction ** 0.5)))
        top, left = (H - side_h) // 2, (W - side_w) // 2
        mask = np.ones((H, W))
        mask[top:top + side_h, left:left + side_w] = 0.0
        super().__init__(image_shape, mask, noise_std)
        self.area_fraction = float(area_fraction)
        self.box = (top, left, side_h, side_w)


_OPERATORS = {
    cls.kind: cls
    for cls in (IdentityNoise, GaussianBlur, Downsample, RandomMask, BoxMask)
}


def make_operator(kind: str, image_shape: tuple[int, int],
                  noise_std: float = 0.0, **params):
    """Build a degradation operator by kind name."""
    try:
        cls = _OPERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown operator kind: {kind!r}") from None
    return cls(image_shape, noise_std, **params)


def degrade_observe(op, clean: np.ndarray, rng: RngStream) -> np.ndarray:
    """Observation A(clean) + noise_std * N(0, I); clean must lie in [0, 1]."""
    if clean.min() < -1e-9 or clean.max() > 1.0 + 1e-9:
        raise ValueError("clean image must lie in [0, 1]")
    omega = op.apply(clean)
    if op.noise_std > 0.0:
        omega = omega + op.noise_std * rng.normal(omega.shape)
    return omega


class FidelityProblem:
    """Quadratic data fidelity f(x) = 0.5 ||A x - omega||^2.

    Carries the smoothness constants used by the bound certificates:
    `lipschitz_constant` estimates L_f = ||A^T A||_2 by power iteration and
    `grad_bound` reports the largest gradient norm over supplied states.
    """

    def __init__(self, operator, observation: np.ndarray):
        if observation.shape != operator.out_shape():
            raise ValueError(
                f"observation shape {observation.shape} does not match "
                f"operator output {operator.out_shape()}")
        self.operator = operator
        self.observation = observation
        self._lipschitz: float | None = None

    def value(self, x: np.ndarray) -> float:
        r = self.operator.apply(x) - self.observation
        return 0.5 * float(np.vdot(r, r))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.operator.adjoint(self.operator.apply(x) - self.observation)

    def lipschitz_constant(self, rng: RngStream | None = None,
                           n_iters: int = 50) -> float:
        """Power-iteration estimate of ||A^T A||_2 (cached)."""
        if self._lipschitz is None:
            rng = rng or RngStream(0).derive("power-iteration")
            v = rng.normal(self.operator.image_shape)
            v /= np.linalg.norm(v)
            lam = 0.0
            for _ in range(n_iters):
                w = self.operator.adjoint(self.operator.apply(v))
                lam = float(np.vdot(v, w))
                norm = np.linalg.norm(w)
                if norm == 0.0:
                    break
                v = w / norm
            self._lipschitz = abs(lam)
        return self._lipschitz

    def grad_bound(self, states) -> float:
        """Empirical M_f: max gradient norm over an iterable of states."""
        return max(float(np.linalg.norm(self.grad(x))) for x in states)


def fidelity_value(problem: FidelityProblem, x: np.ndarray) -> float:
    return problem.value(x)


def fidelity_grad(problem: FidelityProblem, x: np.ndarray) -> np.ndarray:
    return problem.grad(x)
