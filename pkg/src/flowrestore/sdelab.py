"""Continuous-limit laboratory.

Euler-Maruyama simulation of the surrogate diffusion
    dX = b_t(X) dt + sigma(t) dW,   b_t(x) = -x - beta(t) grad f(x) + u_t(x),
its rescaled form (drift and diffusion divided by 1 - alpha(t)), coupled
error paths for perturbation bounds, discrete-vs-continuous trajectory
comparison, and empirical convergence certificates.

Conventions. Process time is pseudo-time t accumulated from the step
schedule (t_k = sum of 1 - l_i); sigma and beta are anchored at the grid
values sqrt(1 - l_k) and beta_k and interpolated linearly in between, a
choice flagged in every emitted report. Fields are evaluated at the level
corresponding to t via the same interpolation.
"""

from dataclasses import dataclass, replace
import math

import numpy as np

from .degrade import FidelityProblem
from .numerics import RngStream
from .schedule import (BoundInputs, Schedule, accel_bound_terms, alpha_k,
                       beta_k, gronwall_error_bound, partial_pseudo_time,
                       pseudo_time_grid, sigma_k)
from .solver import SolverConfig, restore

_SIGMA_INTERP_NOTE = "sigma(t) linear between sqrt(1-l_k) anchors"
_VALIDATION_SAMPLES = 129


def _as_fn(value):
    """Coefficient spec -> callable: None means 0, floats are constant."""
    if value is None:
        return lambda t: 0.0
    if isinstance(value, (int, float)):
        c = float(value)
        return lambda t: c
    return value


@dataclass(frozen=True)
class SdeProcess:
    """Drift -x - beta(t) grad_f(x) + u.eval_field(t, x), diffusion
    sigma(t), optional rescale alpha(t) in [0, 1), horizon [t0, T].

    beta, sigma, alpha accept None (zero), a constant, or a callable of t.
    """

    n: int
    t0: float
    T: float
    u: object
    grad_f: object = None
    beta: object = None
    sigma: object = None
    alpha: object = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.T > self.t0:
            raise ValueError("horizon must satisfy T > t0")
        if self.beta is not None and self.grad_f is None:
            raise ValueError("beta without grad_f has no gradient to weight")
        sig, alp = _as_fn(self.sigma), _as_fn(self.alpha)
        prev = None
        for i in range(_VALIDATION_SAMPLES):
            t = self.t0 + (self.T - self.t0) * i / (_VALIDATION_SAMPLES - 1)
            a = alp(t)
            if not 0.0 <= a < 1.0:
                raise ValueError(f"alpha(t) must lie in [0, 1); got {a}")
            s = sig(t)
            if s < 0.0:
                raise ValueError(f"sigma(t) must be >= 0; got {s}")
            if prev is not None and s > prev + 1e-12:
                raise ValueError("sigma(t) must be non-increasing")
            prev = s

    def drift(self, t: float, x: np.ndarray) -> np.ndarray:
        b = -x + self.u.eval_field(t, x)
        bt = _as_fn(self.beta)(t)
        if bt != 0.0:
            b = b - bt * self.grad_f(x)
        return b

    def sigma_at(self, t: float) -> float:
        return _as_fn(self.sigma)(t)

    def alpha_at(self, t: float) -> float:
        return _as_fn(self.alpha)(t)


@dataclass
class PathEnsemble:
    """M paths on a shared grid, with the Wiener increments retained so a
    coupled simulation can be replayed."""

    grid: np.ndarray    # (J+1,)
    states: np.ndarray  # (M, J+1, n)
    increments: np.ndarray  # (M, J, n)

    def __post_init__(self):
        m, j1, n = self.states.shape
        if self.increments.shape != (m, j1 - 1, n):
            raise ValueError("increments shape does not match states")
        if self.grid.shape != (j1,):
            raise ValueError("grid length does not match states")

    @property
    def terminal(self) -> np.ndarray:
        return self.states[:, -1, :]


def _check_grid(process: SdeProcess, grid: np.ndarray) -> None:
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must be a 1-d array of at least 2 times")
    if grid[0] != process.t0:
        raise ValueError(f"grid must start at t0={process.t0}")
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must be strictly increasing")
    if grid[-1] > process.T + 1e-12:
        raise ValueError("grid extends past the horizon T")


def _em(process: SdeProcess, x0: np.ndarray, grid: np.ndarray,
        increments: np.ndarray) -> np.ndarray:
    """Core update X_{j+1} = X_j + dt b/(1-a) + sigma/(1-a) dW_j."""
    x = np.array(x0, dtype=np.float64)
    out = np.empty((len(grid),) + x.shape)
    out[0] = x
    for j in range(len(grid) - 1):
        t = float(grid[j])
        dt = float(grid[j + 1] - grid[j])
        scale = 1.0 / (1.0 - process.alpha_at(t))
        x = (x + dt * scale * process.drift(t, x)
             + process.sigma_at(t) * scale * increments[j])
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at t={grid[j + 1]}")
        out[j + 1] = x
    return out


def euler_maruyama(process: SdeProcess, x0, grid, rng: RngStream
                   ) -> np.ndarray:
    """One path on the grid; returns states of shape (len(grid), n)."""
    grid = np.asarray(grid, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    _check_grid(process, grid)
    if x0.size != process.n:
        raise ValueError(f"x0 has {x0.size} entries, process.n={process.n}")
    xi = rng.normal((len(grid) - 1,) + x0.shape)
    increments = np.sqrt(np.diff(grid)).reshape(
        (-1,) + (1,) * x0.ndim) * xi
    return _em(process, x0, grid, increments)


def simulate_ensemble(process: SdeProcess, x0, grid, rng: RngStream,
                      paths: int = 1000) -> PathEnsemble:
    """Independent paths from a shared start; per-path derived RNG streams,
    reductions later run in fixed path order."""
    grid = np.asarray(grid, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    _check_grid(process, grid)
    if x0.size != process.n:
        raise ValueError(f"x0 has {x0.size} entries, process.n={process.n}")
    if paths < 1:
        raise ValueError("paths must be >= 1")
    j = len(grid) - 1
    sqdt = np.sqrt(np.diff(grid))[:, None]
    states = np.empty((paths, j + 1, process.n))
    increments = np.empty((paths, j, process.n))
    for i in range(paths):
        increments[i] = sqdt * rng.derive(f"path-{i}").normal((j, process.n))
        states[i] = _em(process, x0, grid, increments[i])
    return PathEnsemble(grid=grid, states=states, increments=increments)


# ------------------------------------------------------------ coupled errors

@dataclass
class ErrorCurve:
    """Monte-Carlo estimate of E||X_t - X~_t|| on a grid."""

    grid: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    paths: int
    note: str = _SIGMA_INTERP_NOTE


def coupled_error_paths(process_a: SdeProcess, process_b: SdeProcess,
                        x0, grid, rng: RngStream, paths: int = 1000
                        ) -> ErrorCurve:
    """Simulate both processes under the SAME Wiener increments and return
    the Monte-Carlo mean of ||X_t - X~_t|| per grid point."""
    grid = np.asarray(grid, dtype=np.float64)
    if process_a.n != process_b.n:
        raise ValueError("processes have different state dimension")
    if process_a.t0 != process_b.t0 or process_a.T != process_b.T:
        raise ValueError("processes have different horizons")
    for t in grid:
        if process_a.sigma_at(float(t)) != process_b.sigma_at(float(t)):
            raise ValueError("processes must share sigma on the grid")
    _check_grid(process_a, grid)
    x0 = np.asarray(x0, dtype=np.float64)
    sqdt = np.sqrt(np.diff(grid)).reshape((-1,) + (1,) * x0.ndim)
    norms = np.empty((paths, len(grid)))
    for i in range(paths):
        increments = sqdt * rng.derive(f"path-{i}").normal(
            (len(grid) - 1,) + x0.shape)
        xa = _em(process_a, x0, grid, increments)
        xb = _em(process_b, x0, grid, increments)
        diff = (xa - xb).reshape(len(grid), -1)
        norms[i] = np.sqrt(np.sum(diff * diff, axis=1))
    mean = norms.mean(axis=0)
    se = (norms.std(axis=0, ddof=1) / math.sqrt(paths) if paths > 1
          else np.zeros(len(grid)))
    return ErrorCurve(grid=grid, mean=mean, se=se, paths=paths)


def gronwall_certificate(curve: ErrorCurve, inputs: BoundInputs,
                         panels: int = 1024
                         ) -> tuple[np.ndarray, int]:
    """Exponential envelope per grid point and the count of points where
    the measured mean exceeds it beyond 3 standard errors."""
    bounds = np.array([
        gronwall_error_bound(replace(inputs, t=float(t)), panels=panels)
        for t in curve.grid])
    violations = int(np.sum(curve.mean > bounds + 3.0 * curve.se))
    return bounds, violations


# ----------------------------------------------------- schedule-tied process

class LevelMappedField:
    """Adapter: evaluate a flow field at the level matching pseudo-time t,
    linearly interpolated between the schedule's (t_k, l_k) anchors."""

    def __init__(self, inner, ts, levels):
        self.inner = inner
        self.ts = np.asarray(ts, dtype=np.float64)
        self.levels = np.asarray(levels, dtype=np.float64)
        if self.ts.shape != self.levels.shape or self.ts.ndim != 1:
            raise ValueError("anchor arrays must be 1-d and equal length")

    def eval_field(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.inner.eval_field(float(np.interp(t, self.ts, self.levels)),
                                     x)


def process_from_schedule(schedule: Schedule, K: int, N: int, field,
                          grad_f=None, rescale: bool = False,
                          dim: int = None) -> tuple:
    """(SdeProcess, anchor grid) for the window k in [K, N].

    sigma anchors are sqrt(1 - l_k), beta anchors l_k gamma_k / (1 - l_k),
    alpha anchors (when rescale is set) the schedule's extrapolation
    rescale factor; all linear between anchors. The grid is the pseudo-time
    of the iterates x_K .. x_N. dim defaults to the field's own dimension.
    """
    if not 0 <= K < N:
        raise ValueError("need 0 <= K < N")
    t0 = partial_pseudo_time(schedule, K)
    ts = t0 + np.asarray(pseudo_time_grid(schedule, K, N))
    ks = list(range(K, N + 1))
    levels = [schedule.level(k) for k in ks]
    sigmas = np.array([sigma_k(schedule, k) for k in ks])
    betas = np.array([beta_k(schedule, k) for k in ks])
    alphas = None
    if rescale:
        alphas = np.array([alpha_k(schedule, max(k, 1)) for k in ks])

    def sigma(t: float) -> float:
        return float(np.interp(t, ts, sigmas))

    def beta(t: float) -> float:
        return float(np.interp(t, ts, betas))

    alpha = None
    if alphas is not None:
        def alpha(t: float) -> float:
            return float(np.interp(t, ts, alphas))

    size = dim if dim is not None else getattr(field, "dim", None)
    if size is None:
        raise ValueError("state dimension unknown; pass dim explicitly")
    process = SdeProcess(
        n=int(size), t0=float(ts[0]), T=float(ts[-1]),
        u=LevelMappedField(field, ts, levels),
        grad_f=grad_f,
        beta=beta if grad_f is not None else None,
        sigma=sigma, alpha=alpha)
    return process, ts


# ------------------------------------------------- discrete vs SDE contrast

class _ReplayNoise:
    """Duck-typed RngStream that plays back a fixed list of draws."""

    def __init__(self, draws):
        self._draws = list(draws)
        self._i = 0

    def normal(self, shape) -> np.ndarray:
        xi = self._draws[self._i]
        self._i += 1
        if xi.shape != tuple(shape):
            raise ValueError("replayed draw has the wrong shape")
        return xi


class _ZeroNoise:
    """Duck-typed RngStream returning zeros (sigma-forced-0 runs)."""

    def normal(self, shape) -> np.ndarray:
        return np.zeros(shape)


@dataclass
class DiscrepancyReport:
    """Solver-vs-integrator comparison over the window k in [K, N].

    matched policy: both evolve from x_K on the iterate grid under coupled
    noise; per_step[j] is the state discrepancy at t_{K+j+1}. refined
    policy: the integrator is re-anchored at the solver state each step and
    substepped, so per_step[j] is the local (one-step) error.
    """

    ts: np.ndarray
    per_step: np.ndarray
    relative: np.ndarray
    sup: float
    sup_relative: float
    policy: str
    note: str = _SIGMA_INTERP_NOTE


def _state_norm(x: np.ndarray) -> float:
    return float(np.sqrt(np.vdot(x, x).real))


def discrete_vs_sde(problem: FidelityProblem, field, cfg: SolverConfig,
                    policy: str = "matched", refine: int = 64,
                    noise_free: bool = False) -> DiscrepancyReport:
    """Compare solver iterates x_k with the surrogate SDE from the t0
    anchor X(t0) = x_K (taken from a real solver run).

    Matched noise couples xi_k with the Wiener increment sqrt(dt) xi_k;
    since sigma(t_k) = sqrt(1 - l_k) = sqrt(dt_k), the injected noise is
    identical on both sides. The refined policy substeps each interval and
    requires noise_free (it measures the deterministic Taylor remainder).
    """
    if policy not in ("matched", "refined"):
        raise ValueError(f"unknown policy: {policy!r}")
    if policy == "refined" and not noise_free:
        raise ValueError("refined policy compares deterministic flows; "
                         "pass noise_free=True")
    if refine < 1:
        raise ValueError("refine must be >= 1")
    K, N = cfg.K, cfg.N
    t0 = partial_pseudo_time(cfg.schedule, K)
    if K == N:
        return DiscrepancyReport(
            ts=np.array([t0]), per_step=np.array([]), relative=np.array([]),
            sup=float("nan"), sup_relative=float("nan"), policy=policy)

    _, traj = restore(problem, field, cfg)
    x_anchor = traj.records[K].x
    x_prev = traj.records[K - 1].x if K >= 1 else x_anchor

    process, ts = process_from_schedule(cfg.schedule, K, N, field,
                                        grad_f=problem.grad,
                                        dim=x_anchor.size)
    shape = x_anchor.shape
    steps = N - K
    if noise_free:
        draws = [np.zeros(shape) for _ in range(steps)]
    else:
        rng = RngStream(cfg.seed).derive("compare")
        draws = [rng.normal(shape) for _ in range(steps)]

    # Solver side: replay the window from the anchor with the fixed draws.
    from .solver import ipnpflow_step  # local import; solver imports nothing here
    xs = [x_anchor]
    replay = _ReplayNoise(draws)
    x, xp = x_anchor, x_prev
    for j, k in enumerate(range(K, N)):
        x_next = ipnpflow_step(x, xp, k, field, problem, cfg.schedule,
                               cfg.h_at(k), replay)
        xs.append(x_next)
        xp, x = x, x_next

    per_step = np.empty(steps)
    relative = np.empty(steps)
    if policy == "matched":
        dts = np.diff(ts)
        increments = np.array([math.sqrt(dts[j]) * draws[j]
                               for j in range(steps)])
        em_states = _em(process, x_anchor, ts, increments)
        for j in range(steps):
            gap = _state_norm(xs[j + 1] - em_states[j + 1])
            per_step[j] = gap
            ref = _state_norm(xs[j + 1])
            relative[j] = gap / ref if ref > 0.0 else float("nan")
    else:
        zero_inc = np.zeros((refine,) + shape)
        for j in range(steps):
            sub = np.linspace(ts[j], ts[j + 1], refine + 1)
            local = _em(process, xs[j], sub, zero_inc)[-1]
            gap = _state_norm(xs[j + 1] - local)
            per_step[j] = gap
            ref = _state_norm(xs[j])
            relative[j] = gap / ref if ref > 0.0 else float("nan")

    return DiscrepancyReport(
        ts=ts, per_step=per_step, relative=relative,
        sup=float(np.max(per_step)),
        sup_relative=float(np.nanmax(relative)) if steps else float("nan"),
        policy=policy)


# -------------------------------------------------- convergence certificate

@dataclass
class ConvergenceReport:
    """Per-t check of the pre-Gronwall inequality
    E||X_t - X_T||^2 <= A(t) + 2 E[int B(s)/(1-alpha) ||X_s - X_T||^2 ds],
    checked literally (not a closed-form rate). X_T is each path's terminal
    state; the start term of A is measured post hoc from the ensemble.
    """

    ts: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray
    se: np.ndarray
    violations: int
    case: str
    start_msq: float
    note: str = _SIGMA_INTERP_NOTE


def convergence_certificate(ensemble: PathEnsemble, inputs: BoundInputs,
                            alpha=None, panels: int = 1024
                            ) -> ConvergenceReport:
    """Estimate both sides of the inequality by Monte-Carlo + trapezoid.

    Margins carry per-path standard errors: each path contributes
    m_i(t) = ||X_t0 - X_T||^2 + D(t) + 2 int B/(1-a) ||X_s - X_T||^2 ds
             - ||X_t - X_T||^2
    with D(t) the deterministic drive integral of A; margin = mean_i m_i.
    With alpha None or identically zero this is the unrescaled certificate
    (divisions by exactly 1.0), bit-equal to the plain variant.
    """
    grid = ensemble.grid
    m = ensemble.states.shape[0]
    terminal = ensemble.terminal  # (M, n)
    diff = ensemble.states - terminal[:, None, :]
    sq = np.sum(diff * diff, axis=2)  # (M, J+1) per-path ||X_t - X_T||^2

    start = replace(inputs, t0=float(grid[0]), t=float(grid[-1]),
                    start_msq=float(sq[:, 0].mean()))
    _, integrand = accel_bound_terms(start, alpha=alpha, panels=panels)
    weights = np.array([integrand(float(t)) for t in grid])

    # Per-path cumulative trapezoid of B(s)/(1-alpha(s)) ||X_s - X_T||^2.
    y = sq * weights[None, :]
    dt = np.diff(grid)[None, :]
    panelsum = 0.5 * (y[:, 1:] + y[:, :-1]) * dt
    integral = np.concatenate([np.zeros((m, 1)), np.cumsum(panelsum, axis=1)],
                              axis=1)

    drive = np.array([
        accel_bound_terms(replace(start, t=float(t)), alpha=alpha,
                          panels=panels)[0] - start.start_msq
        for t in grid])

    per_path = sq[:, :1] + drive[None, :] + 2.0 * integral - sq
    margin = per_path.mean(axis=0)
    se = (per_path.std(axis=0, ddof=1) / math.sqrt(m) if m > 1
          else np.zeros(len(grid)))
    lhs = sq.mean(axis=0)
    rhs = margin + lhs
    violations = int(np.sum(margin < -3.0 * se))
    return ConvergenceReport(
        ts=grid, lhs=lhs, rhs=rhs, margin=margin, se=se,
        violations=violations, case=start.case, start_msq=start.start_msq)


# ------------------------------------------------------------------ reports

def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def write_error_curve_csv(path, curve: ErrorCurve) -> None:
    rows = ["t,mean,se"]
    for j in range(len(curve.grid)):
        rows.append(f"{_fmt(curve.grid[j])},{_fmt(curve.mean[j])},"
                    f"{_fmt(curve.se[j])}")
    rows.append(f"# paths={curve.paths}; {curve.note}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def write_certificate_csv(path, report: ConvergenceReport) -> None:
    rows = ["t,lhs,rhs,margin,se"]
    for j in range(len(report.ts)):
        rows.append(",".join(_fmt(v) for v in (
            report.ts[j], report.lhs[j], report.rhs[j], report.margin[j],
            report.se[j])))
    rows.append(f"# case={report.case}; violations={report.violations}; "
                f"{report.note}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def write_discrepancy_csv(path, report: DiscrepancyReport) -> None:
    rows = ["t,per_step,relative"]
    for j in range(len(report.per_step)):
        rows.append(f"{_fmt(report.ts[j + 1])},{_fmt(report.per_step[j])},"
                    f"{_fmt(report.relative[j])}")
    rows.append(f"# policy={report.policy}; sup={_fmt(report.sup)}; "
                f"sup_relative={_fmt(report.sup_relative)}; {report.note}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
