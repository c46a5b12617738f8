"""Time-dependent vector fields and the flow-matching denoiser.

Fields are duck-typed: anything with eval_field(t, x), jvp(t, x, eps) and
vjp_x(t, x, u_bar) works everywhere a field is consumed. The trainable field
is a small tanh MLP with hand-rolled autodiff: reverse mode over parameters
(training), forward mode over the input (Jacobian probes), and reverse over
the forward tangent (so the Hutchinson penalty itself is differentiable in
the parameters). The analytic GaussianField is the exact marginal field of
the straight-line path from N(0, I) to N(mean, std^2 I) under independent
endpoint coupling and serves as ground truth in tests and certificates.
"""

from __future__ import annotations

import math

import numpy as np

from .numerics import RngStream

TIME_FEATURES = 5


def time_features(t) -> np.ndarray:
    """Map times in [0, 1] to [t, sin 2pi t, cos 2pi t, sin 4pi t, cos 4pi t].

    Accepts a scalar or a (B,) vector; returns (B, 5).
    """
    tv = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if tv.min() < 0.0 or tv.max() > 1.0:
        raise ValueError(f"t must lie in [0, 1], got range "
                         f"[{tv.min()}, {tv.max()}]")
    two_pi = 2.0 * math.pi
    return np.stack([tv, np.sin(two_pi * tv), np.cos(two_pi * tv),
                     np.sin(2 * two_pi * tv), np.cos(2 * two_pi * tv)],
                    axis=1)


class MlpTape:
    """Saved forward state: activations and, when a probe rode along,
    the tangent stream needed by the second-order backward pass."""

    __slots__ = ("t_vec", "activations", "tangents", "pre_tangents",
                 "tangent_out")

    def __init__(self, t_vec, activations, tangents=None, pre_tangents=None,
                 tangent_out=None):
        self.t_vec = t_vec
        self.activations = activations      # [a_0 .. a_{L-1}]
        self.tangents = tangents            # [da_0 .. da_{L-1}]
        self.pre_tangents = pre_tangents    # [dz_1 .. dz_{L-1}]
        self.tangent_out = tangent_out      # dU


class MlpField:
    """Tanh MLP u_t(x; theta): input (x, time features), output a field value.

    Parameters live in one flat float64 vector `theta`; per-layer weight and
    bias views alias into it so optimizer updates are in place. Evaluation is
    deterministic and smooth in (t, x, theta).
    """

    activation = "tanh"
    time_embedding = "fourier5"

    def __init__(self, dim: int, hidden: tuple[int, ...] = (128, 128),
                 seed: int = 0):
        if dim < 1 or any(w < 1 for w in hidden):
            raise ValueError("dim and hidden widths must be positive")
        self.dim = int(dim)
        self.hidden = tuple(int(w) for w in hidden)
        self.widths = (self.dim + TIME_FEATURES, *self.hidden, self.dim)
        self.theta = np.zeros(self.param_count())
        self._build_views()
        self._init_params(seed)

    def param_count(self) -> int:
        return sum((fan_in + 1) * fan_out
                   for fan_in, fan_out in zip(self.widths, self.widths[1:]))

    def _build_views(self) -> None:
        self._layers = []
        offset = 0
        for fan_in, fan_out in zip(self.widths, self.widths[1:]):
            W = self.theta[offset:offset + fan_in * fan_out]
            W = W.reshape(fan_out, fan_in)
            offset += fan_in * fan_out
            b = self.theta[offset:offset + fan_out]
            offset += fan_out
            self._layers.append((W, b))

    def _init_params(self, seed: int) -> None:
        # Fan-in-scaled uniform init keeps the initial field small, so the
        # induced denoiser starts near the identity.
        rng = RngStream(seed).derive("mlp-init")
        for W, b in self._layers:
            bound = 1.0 / math.sqrt(W.shape[1])
            W[...] = (2.0 * rng.uniform(W.shape) - 1.0) * bound
            b[...] = (2.0 * rng.uniform(b.shape) - 1.0) * bound

    def set_theta(self, values: np.ndarray) -> None:
        if values.shape != self.theta.shape:
            raise ValueError("parameter vector has wrong length")
        self.theta[...] = values

    def _as_batch(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        if x.ndim == 2 and x.shape[1] == self.dim:
            return x, True
        if x.size == self.dim:
            return x.reshape(1, self.dim), False
        raise ValueError(f"state with {x.size} entries does not fit "
                         f"field dimension {self.dim}")

    def apply_with_tape(self, t, X: np.ndarray, probe: np.ndarray | None = None
                        ) -> tuple[np.ndarray, np.ndarray | None, MlpTape]:
        """Batch forward pass, optionally carrying a forward-mode probe.

        Parameters
        ----------
        t : scalar or (B,) times in [0, 1].
        X : (B, dim) batch.
        probe : optional (B, dim) tangent direction for the input.

        Returns (U, dU, tape): field values, the Jacobian-vector product
        dU = (d u / d x) probe (None without a probe), and the tape for
        :meth:`backward`.
        """
        B = X.shape[0]
        tf = time_features(t)
        if tf.shape[0] == 1 and B > 1:
            tf = np.repeat(tf, B, axis=0)
        if tf.shape[0] != B:
            raise ValueError("t and X batch sizes disagree")
        a = np.concatenate([X, tf], axis=1)
        activations = [a]
        tangents = None
        pre_tangents = None
        da = None
        if probe is not None:
            if probe.shape != X.shape:
                raise ValueError("probe must be shaped like X")
            da = np.concatenate([probe, np.zeros((B, TIME_FEATURES))], axis=1)
            tangents = [da]
            pre_tangents = []
        for W, b in self._layers[:-1]:
            z = a @ W.T + b
            a = np.tanh(z)
            activations.append(a)
            if probe is not None:
                dz = da @ W.T
                pre_tangents.append(dz)
                da = (1.0 - a * a) * dz
                tangents.append(da)
        W, b = self._layers[-1]
        U = a @ W.T + b
        dU = None if probe is None else da @ W.T
        tape = MlpTape(t, activations, tangents, pre_tangents, dU)
        return U, dU, tape

    def backward(self, tape: MlpTape, u_bar: np.ndarray,
                 du_bar: np.ndarray | None = None
                 ) -> tuple[np.ndarray, np.ndarray]:
        """Reverse pass: adjoints of the output (and of the JVP output).

        Parameters
        ----------
        u_bar : (B, dim) adjoint of U. Pass zeros when only the JVP output
            enters the loss.
        du_bar : optional (B, dim) adjoint of dU; requires a probed forward.

        Returns (grad_theta, x_bar): the flat parameter gradient summed over
        the batch and the adjoint of the input X.
        """
        if du_bar is not None and tape.tangents is None:
            raise ValueError("du_bar given but the forward pass had no probe")
        grad = np.zeros_like(self.theta)
        g_offset = self.param_count()
        z_bar = u_bar
        dz_bar = du_bar
        for i in range(len(self._layers) - 1, -1, -1):
            W, b = self._layers[i]
            size_w, size_b = W.size, b.size
            g_offset -= size_w + size_b
            gW = grad[g_offset:g_offset + size_w].reshape(W.shape)
            gb = grad[g_offset + size_w:g_offset + size_w + size_b]
            a_prev = tape.activations[i]
            gW += z_bar.T @ a_prev
            gb += z_bar.sum(axis=0)
            a_bar = z_bar @ W
            if dz_bar is not None:
                gW += dz_bar.T @ tape.tangents[i]
                da_bar = dz_bar @ W
            if i == 0:
                x_bar = a_bar[:, :self.dim].copy()
                if dz_bar is not None:
                    # The probe adjoint is not propagated further; the
                    # penalty never differentiates with respect to it.
                    pass
                return grad, x_bar
            # a_prev = tanh(z_prev); fold the activation derivative in,
            # including the curvature term from the tangent stream.
            a_i = tape.activations[i]
            phi1 = 1.0 - a_i * a_i
            z_bar_next = a_bar * phi1
            if dz_bar is not None:
                phi2 = -2.0 * a_i * phi1
                z_bar_next = z_bar_next + da_bar * phi2 * tape.pre_tangents[i - 1]
                dz_bar = da_bar * phi1
            z_bar = z_bar_next
        raise AssertionError("unreachable")

    def eval_field(self, t: float, x: np.ndarray) -> np.ndarray:
        """u_t(x); accepts any x with dim entries (or a (B, dim) batch)."""
        X, batched = self._as_batch(np.asarray(x, dtype=np.float64))
        U, _, _ = self.apply_with_tape(t, X)
        return U if batched else U.reshape(x.shape)

    def jvp(self, t: float, x: np.ndarray, eps: np.ndarray) -> np.ndarray:
        """(d u_t / d x)(x) eps by forward-mode propagation (machine exact)."""
        if eps.shape != x.shape:
            raise ValueError("probe must be shaped like x")
        X, batched = self._as_batch(np.asarray(x, dtype=np.float64))
        E = eps.reshape(X.shape)
        _, dU, _ = self.apply_with_tape(t, X, probe=E)
        return dU if batched else dU.reshape(x.shape)

    def vjp_x(self, t: float, x: np.ndarray, u_bar: np.ndarray) -> np.ndarray:
        """(d u_t / d x)(x)^T u_bar via the tape's input adjoint."""
        X, batched = self._as_batch(np.asarray(x, dtype=np.float64))
        Ub = u_bar.reshape(X.shape)
        _, _, tape = self.apply_with_tape(t, X)
        _, x_bar = self.backward(tape, Ub)
        return x_bar if batched else x_bar.reshape(x.shape)


class GaussianField:
    """Exact marginal field carrying N(0, I) to N(mean, std^2 I) on straight
    lines with independently coupled endpoints.

    With c_t^2 = (1-t)^2 + t^2 s^2 the field is
        u_t(x) = mean + ((t s^2 - (1-t)) / c_t^2) (x - t mean),
    i.e. E[x1 - x0 | x_t = x]. At t=0 it reduces to mean - x, at t=1 to x.
    """

    def __init__(self, mean, std: float):
        if std <= 0.0:
            raise ValueError("std must be > 0")
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = float(std)

    def coefficient(self, t: float) -> float:
        """The linear coefficient (t s^2 - (1-t)) / ((1-t)^2 + t^2 s^2)."""
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {t}")
        s2 = self.std ** 2
        c2 = (1.0 - t) ** 2 + t ** 2 * s2
        return (t * s2 - (1.0 - t)) / c2

    def _check_state(self, x: np.ndarray) -> None:
        if x.shape != self.mean.shape and x.shape[1:] != self.mean.shape:
            raise ValueError(f"state shape {x.shape} does not match mean "
                             f"shape {self.mean.shape}")

    def eval_field(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        self._check_state(x)
        return self.mean + self.coefficient(t) * (x - t * self.mean)

    def jvp(self, t: float, x: np.ndarray, eps: np.ndarray) -> np.ndarray:
        return self.coefficient(t) * eps

    vjp_x = jvp  # the Jacobian is a scalar multiple of the identity


class ConstantField:
    """u_t(x) = value for all t, x (diagnostic field)."""

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)

    def eval_field(self, t: float, x: np.ndarray) -> np.ndarray:
        if x.shape == self.value.shape:
            return self.value.copy()
        if x.shape[1:] == self.value.shape:
            return np.broadcast_to(self.value, x.shape).copy()
        raise ValueError(f"state shape {x.shape} does not match field "
                         f"value shape {self.value.shape}")

    def jvp(self, t: float, x: np.ndarray, eps: np.ndarray) -> np.ndarray:
        return np.zeros_like(eps)

    vjp_x = jvp


class ZeroField:
    """u_t(x) = 0 (diagnostic field)."""

    def eval_field(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(x)

    def jvp(self, t: float, x: np.ndarray, eps: np.ndarray) -> np.ndarray:
        return np.zeros_like(eps)

    vjp_x = jvp


class LinearField:
    """u_t(x) = M x + offset on flat states (diagnostic field)."""

    def __init__(self, matrix, offset=None):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n):
            raise ValueError("matrix must be square")
        self.offset = (np.zeros(n) if offset is None
                       else np.asarray(offset, dtype=np.float64))

    def eval_field(self, t: float, x: np.ndarray) -> np.ndarray:
        if x.ndim == 2:
            return x @ self.matrix.T + self.offset
        return self.matrix @ x + self.offset

    def jvp(self, t: float, x: np.ndarray, eps: np.ndarray) -> np.ndarray:
        return self.matrix @ eps if eps.ndim == 1 else eps @ self.matrix.T

    def vjp_x(self, t: float, x: np.ndarray, u_bar: np.ndarray) -> np.ndarray:
        return self.matrix.T @ u_bar if u_bar.ndim == 1 else u_bar @ self.matrix


class Denoiser:
    """Field-induced endpoint estimate D_t(x) = x + (1 - t) u_t(x)."""

    def __init__(self, field):
        self.field = field

    def denoise(self, t: float, x: np.ndarray) -> np.ndarray:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {t}")
        return x + (1.0 - t) * self.field.eval_field(t, x)


def eval_field(field, t: float, x: np.ndarray) -> np.ndarray:
    return field.eval_field(t, x)


def denoise(d: Denoiser, t: float, x: np.ndarray) -> np.ndarray:
    return d.denoise(t, x)


def jvp(field, t: float, x: np.ndarray, eps: np.ndarray) -> np.ndarray:
    return field.jvp(t, x, eps)


def estimate_jacobian_norm(field, t: float, x: np.ndarray, rng: RngStream,
                           n_probes: int) -> float:
    """Hutchinson estimate of ||d u_t / d x||_F^2 at (t, x).

    Mean over standard-normal probes eps of ||jvp(t, x, eps)||^2; unbiased
    because E[eps^T J^T J eps] = Trace(J^T J).
    """
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    total = 0.0
    for _ in range(n_probes):
        eps = rng.normal(x.shape)
        d = field.jvp(t, x, eps)
        total += float(np.vdot(d, d))
    return total / n_probes


def estimate_spectral_norm(field, t: float, x: np.ndarray, rng: RngStream,
                           n_iters: int = 20) -> float:
    """Power-iteration lower bound on ||d u_t / d x||_2 at (t, x).

    Iterates v <- J^T (J v); returns ||J v|| for the final unit v. The
    Frobenius estimate from :func:`estimate_jacobian_norm` upper-bounds the
    square of this.
    """
    v = rng.normal(x.shape)
    v /= max(np.linalg.norm(v), 1e-300)
    jv = field.jvp(t, x, v)
    for _ in range(n_iters):
        w = field.vjp_x(t, x, jv)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        jv = field.jvp(t, x, v)
    return float(np.linalg.norm(jv))


def field_lipschitz_estimate(field, ts, xs, rng: RngStream,
                             n_iters: int = 20) -> float:
    """Empirical field Lipschitz constant: sup of spectral-norm estimates
    over the sampled (t, x) set."""
    best = 0.0
    for t in ts:
        for x in xs:
            best = max(best, estimate_spectral_norm(field, t, x, rng,
                                                    n_iters))
    return best


_CHECKPOINT_TAG = "flowfield"
_CHECKPOINT_VERSION = 1


def save_field(field: MlpField, path) -> None:
    """Write a versioned checkpoint: ASCII header line + little-endian
    float64 parameters."""
    header = (f"{_CHECKPOINT_TAG} {_CHECKPOINT_VERSION} dim={field.dim} "
              f"hidden={','.join(map(str, field.hidden))} "
              f"activation={field.activation} "
              f"time_embedding={field.time_embedding}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(field.theta.astype("<f8").tobytes())


def load_field(path) -> MlpField:
    """Read a checkpoint written by :func:`save_field`, validating the
    header and the parameter count."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        blob = fh.read()
    parts = header.split()
    if len(parts) != 6 or parts[0] != _CHECKPOINT_TAG:
        raise ValueError(f"not a field checkpoint: header {header!r}")
    if parts[1] != str(_CHECKPOINT_VERSION):
        raise ValueError(f"unsupported checkpoint version {parts[1]!r}")
    fields = dict(p.split("=", 1) for p in parts[2:])
    if fields.get("activation") != "tanh":
        raise ValueError(f"unsupported activation {fields.get('activation')!r}")
    if fields.get("time_embedding") != "fourier5":
        raise ValueError("unsupported time embedding "
                         f"{fields.get('time_embedding')!r}")
    dim = int(fields["dim"])
    hidden = tuple(int(w) for w in fields["hidden"].split(","))
    field = MlpField(dim, hidden)
    expected = field.param_count() * 8
    if len(blob) != expected:
        raise ValueError(f"checkpoint has {len(blob)} parameter bytes, "
                         f"expected {expected}")
    field.set_theta(np.frombuffer(blob, dtype="<f8"))
    return field
