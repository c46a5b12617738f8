"""Conditional flow-matching training with an optional Jacobian-norm penalty.

The regression target is the straight-line conditional field: for endpoints
x0 ~ N(0, I), x1 ~ data and t ~ U[0, 1], the field is fitted to x1 - x0 at
x_t = (1 - t) x0 + t x1. The penalty is the Hutchinson estimate of the
squared Jacobian Frobenius norm at the same (t, x_t) points, differentiated
in the parameters through the forward-mode probe (reverse over forward).
Training is bit-deterministic given the seed: data, endpoint, and probe
draws come from fixed derived streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import corpus as corpus_mod
from .flowfield import MlpField
from .netpbm import read_netpbm
from .numerics import RngStream


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; lipschitz_coeff == 0 disables the penalty path
    entirely (no probe draws, no penalty arithmetic)."""

    epochs: int = 2000
    batch_size: int = 256
    learning_rate: float = 1e-3
    lipschitz_coeff: float = 0.1
    probes_per_batch: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be > 0")
        if self.lipschitz_coeff < 0.0:
            raise ValueError("lipschitz_coeff must be >= 0")
        if self.probes_per_batch < 1:
            raise ValueError("probes_per_batch must be >= 1")


class GaussianToy:
    """Samples x1 ~ N(mean, std^2 I)."""

    kind = "gaussian-toy"

    def __init__(self, mean, std: float):
        if std <= 0.0:
            raise ValueError("std must be > 0")
        self.mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        self.std = float(std)
        self.dim = self.mean.size

    def sample(self, rng: RngStream, n: int) -> np.ndarray:
        return self.mean + self.std * rng.normal((n, self.dim))


class SyntheticImages:
    """Flattened procedural images; generator is a corpus kind or "mixed"."""

    kind = "synthetic-images"

    def __init__(self, size: int, generator: str = "mixed"):
        self.size = int(size)
        self.generator = generator
        if generator == "mixed":
            self.kinds = corpus_mod.KINDS
        elif generator in corpus_mod.KINDS:
            self.kinds = (generator,)
        else:
            raise ValueError(f"unknown generator id: {generator!r}")
        self.dim = self.size * self.size

    def sample(self, rng: RngStream, n: int) -> np.ndarray:
        batch = np.empty((n, self.dim))
        for i in range(n):
            kind = self.kinds[int(rng.integers(0, len(self.kinds)))]
            batch[i] = corpus_mod.generate_image(kind, self.size,
                                                 rng).reshape(-1)
        return batch


class FileCorpus:
    """Flattened grayscale images from a directory of PGM/PPM files."""

    kind = "file-corpus"

    def __init__(self, path):
        from pathlib import Path
        root = Path(path)
        self.paths = sorted(p for p in root.iterdir()
                            if p.suffix.lower() in (".pgm", ".ppm"))
        if not self.paths:
            raise ValueError(f"no PGM/PPM files under {root}")
        self.images = []
        for p in self.paths:
            img = read_netpbm(p)
            if img.ndim == 3:
                img = img.mean(axis=2)
            self.images.append(img.reshape(-1))
        self.dim = self.images[0].size
        if any(im.size != self.dim for im in self.images):
            raise ValueError("corpus images must share one size")

    def sample(self, rng: RngStream, n: int) -> np.ndarray:
        idx = rng.integers(0, len(self.images), (n,))
        return np.stack([self.images[i] for i in idx])


def make_data_source(kind: str, **params):
    sources = {cls.kind: cls for cls in (GaussianToy, SyntheticImages,
                                         FileCorpus)}
    try:
        cls = sources[kind]
    except KeyError:
        raise ValueError(f"unknown data source kind: {kind!r}") from None
    return cls(**params)


def cfm_loss(field: MlpField, x1: np.ndarray, rng: RngStream | None = None,
             x0: np.ndarray | None = None, t: np.ndarray | None = None,
             return_points: bool = False):
    """Conditional flow-matching loss and its parameter gradient.

    Mean over the batch of ||u_t(x_t; theta) - (x1 - x0)||^2 with x0 and t
    drawn from `rng` unless supplied. With return_points the sampled (t, x_t)
    are returned as well, so the penalty can reuse them.
    """
    if x1.ndim != 2 or x1.shape[0] < 1:
        raise ValueError("x1 must be a non-empty (B, dim) batch")
    if rng is None and (x0 is None or t is None):
        raise ValueError("rng is required unless x0 and t are both given")
    B = x1.shape[0]
    if x0 is None:
        x0 = rng.normal(x1.shape)
    if t is None:
        t = rng.uniform((B,))
    xt = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    U, _, tape = field.apply_with_tape(t, xt)
    resid = U - (x1 - x0)
    loss = float(np.vdot(resid, resid)) / B
    grad, _ = field.backward(tape, 2.0 * resid / B)
    if return_points:
        return loss, grad, t, xt
    return loss, grad


def lipschitz_penalty(field: MlpField, t: np.ndarray, X: np.ndarray,
                      rng: RngStream, probes: int = 1
                      ) -> tuple[float, np.ndarray]:
    """Hutchinson penalty and its parameter gradient at points (t, X).

    Mean over batch and probes of ||(d u_t / d x) eps||^2 with standard
    normal probes; the gradient flows through the forward-mode tangent.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    B = X.shape[0]
    value = 0.0
    grad = np.zeros_like(field.theta)
    for _ in range(probes):
        eps = rng.normal(X.shape)
        _, dU, tape = field.apply_with_tape(t, X, probe=eps)
        value += float(np.vdot(dU, dU)) / B
        g, _ = field.backward(tape, np.zeros_like(dU),
                              du_bar=2.0 * dU / B)
        grad += g
    return value / probes, grad / probes


@dataclass(frozen=True)
class TrainRecord:
    step: int
    cfm_loss: float
    penalty: float
    total: float


def train(field: MlpField, data, cfg: TrainConfig
          ) -> tuple[MlpField, list[TrainRecord]]:
    """Adam-optimize the field on conditional flow matching.

    One epoch = one optimizer step on one freshly sampled batch (the data
    sources are distributions, not finite sets). Deterministic given
    cfg.seed and the field's initial parameters. Raises FloatingPointError
    if the loss leaves the finite range.
    """
    if data.dim != field.dim:
        raise ValueError(f"data dim {data.dim} != field dim {field.dim}")
    rng_data = RngStream(cfg.seed).derive("train-data")
    rng_pair = RngStream(cfg.seed).derive("train-pair")
    rng_probe = RngStream(cfg.seed).derive("train-probe")
    beta1, beta2, eps_adam = 0.9, 0.999, 1e-8
    m = np.zeros_like(field.theta)
    v = np.zeros_like(field.theta)
    history: list[TrainRecord] = []
    for step in range(cfg.epochs):
        x1 = data.sample(rng_data, cfg.batch_size)
        if cfg.lipschitz_coeff != 0.0:
            loss, grad, t, xt = cfm_loss(field, x1, rng_pair,
                                         return_points=True)
            pen, gpen = lipschitz_penalty(field, t, xt, rng_probe,
                                          cfg.probes_per_batch)
            grad = grad + cfg.lipschitz_coeff * gpen
            total = loss + cfg.lipschitz_coeff * pen
        else:
            loss, grad = cfm_loss(field, x1, rng_pair)
            pen = 0.0
            total = loss
        if not np.isfinite(total) or not np.all(np.isfinite(grad)):
            raise FloatingPointError(
                f"non-finite training loss at step {step}: "
                f"cfm={loss!r} penalty={pen!r}")
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        mhat = m / (1.0 - beta1 ** (step + 1))
        vhat = v / (1.0 - beta2 ** (step + 1))
        field.theta[...] -= (cfg.learning_rate * mhat
                             / (np.sqrt(vhat) + eps_adam))
        history.append(TrainRecord(step, loss, pen, total))
    return field, history


def write_loss_history(path, history: list[TrainRecord]) -> None:
    """Loss history as CSV: step, cfm_loss, penalty, total."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("step,cfm_loss,penalty,total\n")
        for rec in history:
            fh.write(f"{rec.step},{rec.cfm_loss!r},{rec.penalty!r},"
                     f"{rec.total!r}\n")


def cfm_loss_floor(reference_field, data, rng: RngStream,
                   n: int = 20000) -> float:
    """Monte-Carlo estimate of the irreducible CFM loss at a given field:
    E ||(x1 - x0) - u_t(x_t)||^2 over endpoint pairs and uniform t."""
    x1 = data.sample(rng, n)
    x0 = rng.normal(x1.shape)
    t = rng.uniform((n,))
    xt = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    total = 0.0
    for i in range(n):
        diff = (x1[i] - x0[i]) - reference_field.eval_field(t[i], xt[i])
        total += float(np.vdot(diff, diff))
    return total / n


def gaussian_toy_grid(mean, std: float, nx: int = 10,
                      ts=(0.1, 0.3, 0.5, 0.7, 0.9), radius: float = 2.5
                      ) -> list[tuple[float, np.ndarray]]:
    """Evaluation points for the Gaussian toy: per time t, a uniform
    nx x nx grid over the marginal box t*mean +- radius*c_t with
    c_t^2 = (1-t)^2 + (t*std)^2, i.e. where the interpolant path lives."""
    mean = np.asarray(mean, dtype=np.float64).reshape(-1)
    points = []
    for t in ts:
        c = float(np.hypot(1.0 - t, t * std))
        axes = [np.linspace(t * mean[d] - radius * c,
                            t * mean[d] + radius * c, nx)
                for d in range(mean.size)]
        grids = np.meshgrid(*axes, indexing="ij")
        X = np.stack([g.reshape(-1) for g in grids], axis=1)
        points.append((float(t), X))
    return points


def field_mse(field, reference, points) -> float:
    """Mean squared field mismatch over (t, X-batch) evaluation points."""
    total, count = 0.0, 0
    for t, X in points:
        diff = field.eval_field(t, X) - reference.eval_field(t, X)
        total += float(np.vdot(diff, diff))
        count += X.shape[0]
    return total / count


def mean_jacobian_norm(field, points, rng: RngStream,
                       n_probes: int = 16) -> float:
    """Hutchinson estimate of ||J_x u_t||_F^2 averaged over the points."""
    total, count = 0.0, 0
    for t, X in points:
        for _ in range(n_probes):
            eps = rng.normal(X.shape)
            dU = field.jvp(t, X, eps)
            total += float(np.vdot(dU, dU))
        count += X.shape[0] * n_probes
    return total / count
