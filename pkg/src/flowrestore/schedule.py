"""Iteration schedules and analytic error/convergence certificates.

A Schedule owns the interpolation levels l_k in [0, 1] walked by the solver,
the gradient step sizes gamma_k (tied to 1 - l_k or constant, always capped
at 1 - l_k), and the extrapolation coefficients h_k. The derived sequences
beta_k, sigma_k, alpha_k are what the continuous-limit lab consumes. The
certificate functions evaluate the exponential error envelope and the
convergence-inequality coefficients from caller-supplied samplers.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field


class Schedule:
    """Level / step-size / extrapolation sequences for the solver.

    kind "geometric": l_k = 1 - lam^k, summable pseudo-time (the sum of
    1 - l_k over all k is 1/(1-lam)). kind "linear": l_k = k/N, the divergent
    baseline kept for ablation. gamma is either the string "tied" (gamma_k =
    1 - l_k) or a constant, capped at 1 - l_k so the gradient step never
    outruns the remaining pseudo-time.
    """

    def __init__(self, kind: str, N: int, lam: float | None = None,
                 gamma: float | str = "tied", h: float = 0.0,
                 h_policy: str = "constant", ramp_len: int = 0):
        if kind not in ("geometric", "linear"):
            raise ValueError(f"unknown schedule kind: {kind!r}")
        if N < 1:
            raise ValueError("N must be positive")
        if kind == "geometric":
            if lam is None or not 0.0 < lam < 1.0:
                raise ValueError("geometric schedule needs lam in (0, 1)")
        elif lam is not None:
            raise ValueError("linear schedule takes no lam")
        if isinstance(gamma, str):
            if gamma != "tied":
                raise ValueError(f"gamma must be 'tied' or a number, got {gamma!r}")
        elif gamma < 0.0:
            raise ValueError("constant gamma must be >= 0")
        if h < 0.0:
            raise ValueError("h must be >= 0")
        if h_policy not in ("constant", "ramp"):
            raise ValueError(f"unknown h policy: {h_policy!r}")
        if h_policy == "ramp" and ramp_len < 1:
            raise ValueError("ramp policy needs ramp_len >= 1")
        self.kind = kind
        self.N = int(N)
        self.lam = None if lam is None else float(lam)
        self.gamma_mode = gamma if isinstance(gamma, str) else float(gamma)
        self.h_max = float(h)
        self.h_policy = h_policy
        self.ramp_len = int(ramp_len)

    @classmethod
    def geometric(cls, lam: float, N: int, **kwargs) -> "Schedule":
        return cls("geometric", N, lam=lam, **kwargs)

    @classmethod
    def linear(cls, N: int, **kwargs) -> "Schedule":
        return cls("linear", N, **kwargs)

    def level(self, k: int) -> float:
        """Interpolation level l_k, non-decreasing, in [0, 1]."""
        if k < 0:
            raise ValueError("k must be >= 0")
        if self.kind == "geometric":
            return 1.0 - self.lam ** k
        return min(k / self.N, 1.0)

    def gamma(self, k: int) -> float:
        """Gradient step size gamma_k <= 1 - l_k."""
        remaining = 1.0 - self.level(k)
        if self.gamma_mode == "tied":
            return remaining
        return min(self.gamma_mode, remaining)

    def h(self, k: int) -> float:
        """Extrapolation coefficient h_k (constant or linear ramp 0 -> h)."""
        if k < 0:
            raise ValueError("k must be >= 0")
        if self.h_policy == "ramp":
            return self.h_max * min(k / self.ramp_len, 1.0)
        return self.h_max


def beta_k(schedule: Schedule, k: int) -> float:
    """Fidelity weight per unit pseudo-time: l_k gamma_k / (1 - l_k)."""
    lk = schedule.level(k)
    if lk >= 1.0:
        raise ValueError(f"level is 1 at k={k}; beta undefined")
    return lk * schedule.gamma(k) / (1.0 - lk)


def sigma_k(schedule: Schedule, k: int) -> float:
    """Noise scale sqrt(1 - l_k)."""
    return math.sqrt(1.0 - schedule.level(k))


def alpha_k(schedule: Schedule, k: int) -> float:
    """Extrapolation rescale factor l_k h_k (1 - l_{k-1}) / (1 - l_k)."""
    if k < 1:
        raise ValueError("alpha_k needs k >= 1")
    lk = schedule.level(k)
    if lk >= 1.0:
        raise ValueError(f"level is 1 at k={k}; alpha undefined")
    return lk * schedule.h(k) * (1.0 - schedule.level(k - 1)) / (1.0 - lk)


def partial_pseudo_time(schedule: Schedule, N: int) -> float:
    """Partial sum of pseudo-time increments: sum_{k<N} (1 - l_k)."""
    return sum(1.0 - schedule.level(k) for k in range(N))


def pseudo_time_grid(schedule: Schedule, start_k: int, end_k: int) -> list[float]:
    """Grid t_j with t[0] = 0 and increments 1 - l_k for k in [start_k, end_k).

    Returns end_k - start_k + 1 points: the pseudo-time coordinates of the
    iterates x_{start_k} .. x_{end_k}.
    """
    if end_k < start_k:
        raise ValueError("end_k must be >= start_k")
    t = [0.0]
    for k in range(start_k, end_k):
        t.append(t[-1] + (1.0 - schedule.level(k)))
    return t


@dataclass(frozen=True)
class BoundInputs:
    """Constants and samplers feeding the certificate formulas.

    approx_error(s) is the mean field mismatch E||u_s - u~_s|| along the
    horizon; beta/sigma are the continuous schedule coefficients; start_msq
    is the mean squared distance of the start state to the limit state,
    measured post hoc from a simulated ensemble.
    """

    t0: float
    t: float
    eta: float = 1.0
    eps0: float = 0.0
    approx_error: Callable[[float], float] = field(default=lambda s: 0.0)
    L_u: float = 0.0
    L_f: float = 0.0
    M_f: float = 0.0
    mu_f: float = 0.0
    beta: Callable[[float], float] = field(default=lambda s: 0.0)
    sigma: Callable[[float], float] = field(default=lambda s: 0.0)
    dim: int = 1
    start_msq: float = 0.0
    case: str = "convex"

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ValueError("eta must be > 0")
        if self.t < self.t0:
            raise ValueError("t must be >= t0")
        if self.eps0 < 0.0:
            raise ValueError("eps0 must be >= 0")


def _trapezoid(fn: Callable[[float], float], a: float, b: float,
               panels: int) -> float:
    if b <= a:
        return 0.0
    xs = [a + (b - a) * i / panels for i in range(panels + 1)]
    ys = [fn(x) for x in xs]
    hstep = (b - a) / panels
    return hstep * (0.5 * ys[0] + sum(ys[1:-1]) + 0.5 * ys[-1])


def gronwall_error_bound(inputs: BoundInputs, panels: int = 1024) -> float:
    """Exponential error envelope C * exp(B) on E||Z_t||.

    C = eps0 + integral of the field approximation error, B = integral of
    (1 + beta(s) L_f + L_u), both over [t0, t] by composite trapezoid.
    """
    C = inputs.eps0 + _trapezoid(inputs.approx_error, inputs.t0, inputs.t,
                                 panels)
    B = _trapezoid(lambda s: 1.0 + inputs.beta(s) * inputs.L_f + inputs.L_u,
                   inputs.t0, inputs.t, panels)
    return C * math.exp(B)


_CASES = ("lipschitz", "convex", "strongly-convex")


def case_B(case: str, L_u: float, L_f: float, mu_f: float, beta_s: float,
           eta: float) -> float:
    """Per-case coefficient B(s) of the convergence inequality.

    lipschitz:        -1 + L_u + beta L_f + eta beta / 2
    convex:           -1 + L_u + eta beta / 2
    strongly-convex:  -1 + L_u - beta mu_f + eta beta / 2
    """
    if eta <= 0.0:
        raise ValueError("eta must be > 0")
    if case == "lipschitz":
        return -1.0 + L_u + beta_s * L_f + eta * beta_s / 2.0
    if case == "convex":
        return -1.0 + L_u + eta * beta_s / 2.0
    if case == "strongly-convex":
        return -1.0 + L_u - beta_s * mu_f + eta * beta_s / 2.0
    raise ValueError(f"unknown case: {case!r}; expected one of {_CASES}")


def accel_bound_terms(inputs: BoundInputs,
                      alpha: Callable[[float], float] | None = None,
                      panels: int = 1024
                      ) -> tuple[float, Callable[[float], float]]:
    """Constant term A_alpha and integrand B(s)/(1 - alpha(s)).

    With alpha None (or identically zero) this is exactly the unaccelerated
    bound: every division is by 1.0, so the reduction is bit-exact.
    """
    if alpha is None:
        alpha = lambda s: 0.0
    for i in range(panels + 1):
        s = inputs.t0 + (inputs.t - inputs.t0) * i / panels
        a = alpha(s)
        if not 0.0 <= a < 1.0:
            raise ValueError(f"alpha(s) must lie in [0, 1); got {a} at s={s}")

    def drive(s: float) -> float:
        raw = (inputs.dim * inputs.sigma(s) ** 2
               + inputs.M_f ** 2 * inputs.beta(s) / (2.0 * inputs.eta))
        return raw / (1.0 - alpha(s)) ** 2

    A_alpha = inputs.start_msq + _trapezoid(drive, inputs.t0, inputs.t, panels)

    def integrand(s: float) -> float:
        B = case_B(inputs.case, inputs.L_u, inputs.L_f, inputs.mu_f,
                   inputs.beta(s), inputs.eta)
        return B / (1.0 - alpha(s))

    return A_alpha, integrand
