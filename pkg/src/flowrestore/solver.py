"""Restoration iterations driven by a flow-matching field.

Baseline update (one iteration k at level l = l_k, step gamma_k):

    z = x - gamma_k grad f(x)
    y = (1 - l) xi + l z,   xi ~ N(0, I)
    x_next = y + (1 - l) u_l(y)

The extrapolated variant replaces x with w = x + h (x - x_prev) throughout.
The last line is the denoiser D_l applied to y. All updates are computed in
a fixed operation order so equal seeds give bit-identical runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .degrade import FidelityProblem
from .metrics import psnr as psnr_metric, ssim as ssim_metric
from .numerics import RngStream
from .schedule import Schedule

_DIVERGENCE_GUARD = 1e6
_INIT_MODES = ("observation-adjoint", "zeros", "gaussian")


@dataclass(frozen=True)
class SolverConfig:
    """Restoration run settings.

    h is the extrapolation coefficient; max_extrapolation is the hard cap
    zeta < 1 (a necessary condition for the momentum recursion to stay
    summable). allow_unsafe_h lifts the cap for divergence demonstrations.
    """

    schedule: Schedule
    N: int = 100
    K: int = 80
    h: float = 0.0
    h_ramp: int = 0
    max_extrapolation: float = 0.99
    noise_draws_per_step: int = 1
    seed: int = 0
    init: str = "observation-adjoint"
    allow_unsafe_h: bool = False

    def h_at(self, k: int) -> float:
        """h_k: the cap h, ramped up linearly over the first h_ramp steps
        (momentum is harmful while the state is mostly noise)."""
        if self.h_ramp <= 0:
            return self.h
        return self.h * min(k / self.h_ramp, 1.0)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not 0 <= self.K <= self.N:
            raise ValueError("K must lie in [0, N]")
        if self.h_ramp < 0:
            raise ValueError("h_ramp must be >= 0")
        if not 0.0 < self.max_extrapolation < 1.0:
            raise ValueError("max_extrapolation must lie in (0, 1)")
        if self.h < 0.0:
            raise ValueError("h must be >= 0")
        if self.h > self.max_extrapolation and not self.allow_unsafe_h:
            raise ValueError(
                f"h={self.h} exceeds the extrapolation cap "
                f"{self.max_extrapolation}; pass allow_unsafe_h to override")
        if self.noise_draws_per_step < 1:
            raise ValueError("noise_draws_per_step must be >= 1")
        if self.init not in _INIT_MODES:
            raise ValueError(f"init must be one of {_INIT_MODES}")


@dataclass
class TrajectoryRecord:
    k: int
    level: float
    x: np.ndarray
    psnr: float
    ssim: float
    fidelity: float
    step_norm: float    # ||x_{k+1} - x_k||, nan on the last record
    driver_norm: float  # ||xi - x + u(y)|| + ||grad f(w)||, nan on the last


@dataclass
class Trajectory:
    records: list[TrajectoryRecord] = dataclass_field(default_factory=list)
    diverged: bool = False
    config: SolverConfig | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records],
                        dtype=np.float64)

    @property
    def final_state(self) -> np.ndarray:
        return self.records[-1].x


def _step(x, x_prev, k, field, problem, schedule, h, rng, noise_draws):
    """One extrapolated update; returns (x_next, driver_norm).

    driver_norm = ||xi - x + u(y)|| + ||grad f(w)|| (max over draws).  With
    gamma_k clamped to 1 - l_k the update satisfies
    ||x_next - x|| <= (1 - l_k) driver_norm + h ||x - x_prev||,
    the recursion behind cauchy_diagnostic.
    """
    lk = schedule.level(k)
    gamma = schedule.gamma(k)
    w = x + h * (x - x_prev)
    if problem is not None:
        grad = problem.grad(w)
        grad_norm = float(np.sqrt(np.vdot(grad, grad).real))
        z = w - gamma * grad
    else:
        grad_norm = 0.0
        z = w
    draws = []
    driver = 0.0
    for _ in range(noise_draws):
        xi = rng.normal(x.shape)
        y = (1.0 - lk) * xi + lk * z
        u = field.eval_field(lk, y)
        draws.append(y + (1.0 - lk) * u)
        dev = xi - x + u
        driver = max(driver,
                     float(np.sqrt(np.vdot(dev, dev).real)) + grad_norm)
    x_next = draws[0] if noise_draws == 1 else np.mean(draws, axis=0)
    if not np.all(np.isfinite(x_next)):
        raise FloatingPointError(f"non-finite state after iteration {k}")
    return x_next, driver


def pnpflow_step(x, k, field, problem, schedule, rng,
                 noise_draws: int = 1) -> np.ndarray:
    """Baseline update x_k -> x_{k+1}."""
    x_next, _ = _step(x, x, k, field, problem, schedule, 0.0, rng,
                      noise_draws)
    return x_next


def ipnpflow_step(x, x_prev, k, field, problem, schedule, h, rng,
                  noise_draws: int = 1) -> np.ndarray:
    """Extrapolated update; h=0 or x == x_prev reduces to pnpflow_step."""
    x_next, _ = _step(x, x_prev, k, field, problem, schedule, h, rng,
                      noise_draws)
    return x_next


def _metrics(x, reference):
    if reference is None:
        return float("nan"), float("nan")
    p = psnr_metric(reference, x)
    s = float("nan")
    if reference.ndim in (2, 3) and min(reference.shape[:2]) >= 11:
        s = ssim_metric(reference, x)
    return p, s


def restore(problem: FidelityProblem, field, cfg: SolverConfig,
            reference: np.ndarray | None = None
            ) -> tuple[np.ndarray, Trajectory]:
    """Run cfg.N iterations from the configured initializer.

    Deterministic given cfg.seed. A state with sup-norm above 1e6 stops the
    run and flags the trajectory as diverged; a non-finite state raises.
    """
    field_dim = getattr(field, "dim", None)
    state_size = int(np.prod(problem.operator.image_shape))
    if field_dim is not None and field_dim != state_size:
        raise ValueError(f"field dim {field_dim} != state size {state_size}")
    rng = RngStream(cfg.seed).derive("restore")
    if cfg.init == "observation-adjoint":
        x = problem.operator.adjoint(problem.observation)
    elif cfg.init == "zeros":
        x = np.zeros(problem.operator.image_shape)
    else:
        x = rng.normal(problem.operator.image_shape)
    x_prev = x
    traj = Trajectory(config=cfg)
    for k in range(cfg.N):
        x_next, driver = _step(x, x_prev, k, field, problem, cfg.schedule,
                               cfg.h_at(k), rng, cfg.noise_draws_per_step)
        step_norm = float(np.sqrt(np.vdot(x_next - x, x_next - x).real))
        p, s = _metrics(x, reference)
        traj.records.append(TrajectoryRecord(
            k, cfg.schedule.level(k), x, p, s, problem.value(x),
            step_norm, driver))
        x_prev, x = x, x_next
        if np.max(np.abs(x)) > _DIVERGENCE_GUARD:
            traj.diverged = True
            break
    k_last = traj.records[-1].k + 1 if traj.records else 0
    p, s = _metrics(x, reference)
    traj.records.append(TrajectoryRecord(
        k_last, cfg.schedule.level(k_last), x, p, s, problem.value(x),
        float("nan"), float("nan")))
    return x, traj


def cauchy_diagnostic(traj: Trajectory, zeta: float | None = None
                      ) -> tuple[np.ndarray, bool]:
    """Running sums of ||x_{k+1} - x_k|| and a boundedness verdict.

    The verdict checks the sums against the momentum envelope
    M * cumsum(1 - l_k) / (1 - zeta) with M the largest recorded driver
    norm; the envelope holds whenever gamma_k <= 1 - l_k and h <= zeta.
    """
    if len(traj.records) < 2:
        raise ValueError("trajectory needs at least 2 records")
    if zeta is None:
        if traj.config is None:
            raise ValueError("no zeta given and trajectory has no config")
        zeta = traj.config.max_extrapolation
    steps = traj.column("step_norm")[:-1]
    levels = traj.column("level")[:-1]
    drivers = traj.column("driver_norm")[:-1]
    sums = np.cumsum(steps)
    M = float(np.max(drivers)) if drivers.size else 0.0
    envelope = M * np.cumsum(1.0 - levels) / (1.0 - zeta)
    bounded = bool(np.all(sums <= envelope * (1.0 + 1e-9) + 1e-12))
    return sums, bounded


def cauchy_envelope(traj: Trajectory, zeta: float | None = None
                    ) -> np.ndarray:
    """The envelope curve used by cauchy_diagnostic, for reporting."""
    if zeta is None:
        zeta = traj.config.max_extrapolation
    levels = traj.column("level")[:-1]
    drivers = traj.column("driver_norm")[:-1]
    M = float(np.max(drivers)) if drivers.size else 0.0
    return M * np.cumsum(1.0 - levels) / (1.0 - zeta)


def _fmt(v: float) -> str:
    if np.isnan(v):
        return "nan"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Per-iteration diagnostics; PSNR +inf is serialized as "inf"."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("k,level,psnr,ssim,fidelity,step_norm\n")
        for r in traj.records:
            fh.write(f"{r.k},{_fmt(r.level)},{_fmt(r.psnr)},{_fmt(r.ssim)},"
                     f"{_fmt(r.fidelity)},{_fmt(r.step_norm)}\n")
