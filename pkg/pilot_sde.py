"""Pilot for sdelab test numbers."""
import math
import numpy as np

from flowrestore.degrade import FidelityProblem, IdentityNoise, degrade_observe
from flowrestore.flowfield import (ConstantField, GaussianField, ZeroField,
                                   field_lipschitz_estimate)
from flowrestore.numerics import RngStream
from flowrestore.schedule import (BoundInputs, Schedule, gronwall_error_bound)
from flowrestore.sdelab import (SdeProcess, convergence_certificate,
                                coupled_error_paths, discrete_vs_sde,
                                euler_maruyama, gronwall_certificate,
                                process_from_schedule, simulate_ensemble)
from flowrestore.solver import SolverConfig

rng = RngStream(0)

# ---- 1. EM decay oracle
n = 6
x0 = rng.derive("x0").normal((n,))
proc = SdeProcess(n=n, t0=0.0, T=2.0, u=ZeroField())
grid = np.linspace(0.0, 2.0, 10_001)
path = euler_maruyama(proc, x0, grid, rng.derive("em"))
exact = x0 * math.exp(-2.0)
rel = np.linalg.norm(path[-1] - exact) / np.linalg.norm(exact)
print(f"decay oracle rel err: {rel:.2e}")

mu = rng.derive("mu").normal((n,))
proc2 = SdeProcess(n=n, t0=0.0, T=2.0, u=ConstantField(mu))
path2 = euler_maruyama(proc2, x0, grid, rng.derive("em2"))
exact2 = mu + (x0 - mu) * math.exp(-2.0)
rel2 = np.linalg.norm(path2[-1] - exact2) / np.linalg.norm(exact2)
print(f"affine oracle rel err: {rel2:.2e}")

# ---- 2. slope test (refined, noise-free, zero field, gamma=0)
shape = (4, 4)
op = IdentityNoise(shape, noise_std=0.0)
obs = np.zeros(shape)
problem = FidelityProblem(op, obs)
logs_d, logs_e = [], []
for lam, span in ((0.9, 80), (0.95, 160), (0.99, 800)):
    sched = Schedule.geometric(lam, span + 1, gamma=0.0)
    cfg = SolverConfig(schedule=sched, N=span + 1, K=1, seed=3)
    rep = discrete_vs_sde(problem, ZeroField(), cfg, policy="refined",
                          refine=64, noise_free=True)
    dts = np.diff(rep.ts)
    logs_d.append(np.log(dts))
    logs_e.append(np.log(rep.relative))
    ok = np.all(rep.per_step <= 0.5 * dts ** 2 * np.array(
        [np.linalg.norm(x) for x in [rep]]) + 1e-30) if False else None
    bound_ok = np.all(rep.relative <= 0.5 * dts ** 2 + 1e-15)
    print(f"lam={lam}: steps={span}, sup_rel={rep.sup_relative:.3e}, "
          f"rel<=dt^2/2: {bound_ok}")
ld = np.concatenate(logs_d)
le = np.concatenate(logs_e)
slope = np.polyfit(ld, le, 1)[0]
print(f"pooled slope: {slope:.4f}  (points={len(ld)})")
# per-lambda slopes
for (d, e, lam) in zip(logs_d, logs_e, (0.9, 0.95, 0.99)):
    print(f"  lam={lam} slope={np.polyfit(d, e, 1)[0]:.4f}")

# ---- 3. matched-noise lambda comparison (tail window, W=2)
mean_img = rng.derive("mean").normal(shape) * 0.2 + 0.5
gf = GaussianField(mean_img, 0.7)
sups = {}
for lam in (0.9, 0.95, 0.99):
    W = 2.0
    K = math.ceil(math.log(W * (1 - lam)) / math.log(lam))
    span = math.ceil(math.log(20.0) / -math.log(lam))
    N = K + span
    sched = Schedule.geometric(lam, N, gamma=0.0)
    cfg = SolverConfig(schedule=sched, N=N, K=K, seed=5)
    rep = discrete_vs_sde(problem, gf, cfg, policy="matched")
    sups[lam] = rep.sup
    t_window = rep.ts[-1] - rep.ts[0]
    print(f"lam={lam}: K={K} N={N} window={t_window:.3f} sup={rep.sup:.4e} "
          f"sup_rel={rep.sup_relative:.4e}")
print("ordering 0.9 > 0.95 > 0.99:",
      sups[0.9] > sups[0.95] > sups[0.99])

# ---- 4. Gronwall certificate: coupled gaussian-oracle SDEs
n2 = 8
mu2 = np.linspace(-0.5, 1.5, n2)
u_true = GaussianField(mu2, 0.5)

class _Perturbed:
    def __init__(self, inner, delta):
        self.inner, self.delta = inner, delta
    def eval_field(self, t, x):
        return self.inner.eval_field(t, x) + self.delta

delta = 1e-2
u_pert = _Perturbed(u_true, delta)
t0, T = 0.0, 0.9
sig = lambda t: math.sqrt(1.0 - t)
pa = SdeProcess(n=n2, t0=t0, T=T, u=u_true, sigma=sig)
pb = SdeProcess(n=n2, t0=t0, T=T, u=u_pert, sigma=sig)
grid2 = np.linspace(t0, T, 65)
x0b = rng.derive("x0b").normal((n2,))
curve = coupled_error_paths(pa, pb, x0b, grid2, rng.derive("cpl"), paths=200)
xs_probe = [rng.derive(f"probe{i}").normal((n2,)) for i in range(4)]
L_u = field_lipschitz_estimate(u_true, np.linspace(t0, T, 9), xs_probe,
                               rng.derive("lip"))
print(f"L_u measured: {L_u:.4f} (|c| max should be ~1 at t=0)")
inputs = BoundInputs(t0=t0, t=T, approx_error=lambda s: delta * math.sqrt(n2),
                     L_u=L_u)
bounds, viol = gronwall_certificate(curve, inputs)
print(f"gronwall: mean[-1]={curve.mean[-1]:.4e} bound[-1]={bounds[-1]:.4e} "
      f"violations={viol}, se[-1]={curve.se[-1]:.2e}")
# delta doubling
curve2 = coupled_error_paths(pa, SdeProcess(n=n2, t0=t0, T=T,
                                            u=_Perturbed(u_true, 2 * delta),
                                            sigma=sig),
                             x0b, grid2, rng.derive("cpl"), paths=200)
ratio = curve2.mean[-1] / curve.mean[-1]
print(f"delta doubling ratio: {ratio:.6f}")

# ---- 5. convergence certificate, strongly-convex identity fidelity
lam, N = 0.965, 120
sched = Schedule.geometric(lam, N, gamma="tied", h=0.5)
K = 40
obs2 = np.clip(mu2 + 0.05 * rng.derive("obsn").normal((n2,)), 0, 1)
op2 = IdentityNoise((n2,), noise_std=0.0)
prob2 = FidelityProblem(op2, obs2)
proc_c, ts_c = process_from_schedule(sched, K, N, u_true, grad_f=prob2.grad,
                                     dim=n2)
print(f"certificate window: t0={ts_c[0]:.3f} T={ts_c[-1]:.3f} "
      f"steps={len(ts_c)-1}")
x0c = mu2 + 0.1 * rng.derive("x0c").normal((n2,))
ens = simulate_ensemble(proc_c, x0c, ts_c, rng.derive("ens"), paths=300)
states_flat = [ens.states[i, j] for i in range(0, 300, 60)
               for j in range(0, len(ts_c), 16)]
M_f = prob2.grad_bound(states_flat)
L_f = prob2.lipschitz_constant()
L_u2 = field_lipschitz_estimate(u_true,
                                [sched.level(k) for k in range(K, N + 1, 10)],
                                xs_probe, rng.derive("lip2"))
print(f"M_f={M_f:.4f} L_f={L_f:.4f} L_u={L_u2:.4f}")
inp = BoundInputs(t0=float(ts_c[0]), t=float(ts_c[-1]), L_u=L_u2, L_f=L_f,
                  M_f=M_f, mu_f=1.0, beta=proc_c.beta,
                  sigma=lambda s: proc_c.sigma_at(s), dim=n2,
                  case="strongly-convex")
rep42 = convergence_certificate(ens, inp)
worst = np.min(rep42.margin + 3 * rep42.se)
print(f"Thm4.2: violations={rep42.violations} min(margin)={rep42.margin.min():.4e} "
      f"worst margin+3se={worst:.4e} margin[0]={rep42.margin[0]}")

# accelerated variant: rescaled process, alpha from schedule h=0.5
proc_a, ts_a = process_from_schedule(sched, max(K, 1), N, u_true,
                                     grad_f=prob2.grad, rescale=True, dim=n2)
ens_a = simulate_ensemble(proc_a, x0c, ts_a, rng.derive("ens-a"), paths=300)
inp_a = BoundInputs(t0=float(ts_a[0]), t=float(ts_a[-1]), L_u=L_u2, L_f=L_f,
                    M_f=prob2.grad_bound([ens_a.states[i, j]
                                          for i in range(0, 300, 60)
                                          for j in range(0, len(ts_a), 16)]),
                    mu_f=1.0, beta=proc_a.beta,
                    sigma=lambda s: proc_a.sigma_at(s), dim=n2,
                    case="strongly-convex")
rep54 = convergence_certificate(ens_a, inp_a, alpha=proc_a.alpha)
print(f"Thm5.4: violations={rep54.violations} "
      f"min(margin)={rep54.margin.min():.4e} "
      f"worst margin+3se={np.min(rep54.margin + 3 * rep54.se):.4e}")

# alpha == 0 bit-exact
repz = convergence_certificate(ens, inp, alpha=lambda s: 0.0)
print("alpha==0 bit-exact:",
      np.array_equal(rep42.margin, repz.margin)
      and np.array_equal(rep42.rhs, repz.rhs))

# ---- 6. EM strong order
# sigma == 0 vs analytic, halving factor
errs = []
for J in (64, 128):
    g = np.linspace(0.0, 1.0, J + 1)
    p = euler_maruyama(SdeProcess(n=n, t0=0.0, T=1.0, u=ZeroField()),
                       x0, g, rng.derive("ord"))
    errs.append(np.linalg.norm(p[-1] - x0 * math.exp(-1.0)))
print(f"sigma=0 halving factor: {errs[0] / errs[1]:.4f}")

# additive noise self-convergence (coupled Brownian refinement)
paths_n = 500
proc_n = SdeProcess(n=1, t0=0.0, T=1.0, u=ZeroField(), sigma=0.5)
g_c = np.linspace(0.0, 1.0, 65)
g_f = np.linspace(0.0, 1.0, 129)
diffs_c, diffs_f = [], []
for i in range(paths_n):
    r = rng.derive(f"sc-{i}")
    xi = r.normal((128, 1))
    inc_f = math.sqrt(1.0 / 128) * xi
    inc_c = inc_f[0::2] + inc_f[1::2]
    from flowrestore.sdelab import _em
    pf = _em(proc_n, np.array([1.0]), g_f, inc_f)
    pc = _em(proc_n, np.array([1.0]), g_c, inc_c)
    inc_c2 = inc_c[0::2] + inc_c[1::2]
    g_c2 = np.linspace(0.0, 1.0, 33)
    pc2 = _em(proc_n, np.array([1.0]), g_c2, inc_c2)
    diffs_c.append(abs(pc2[-1, 0] - pc[-1, 0]))
    diffs_f.append(abs(pc[-1, 0] - pf[-1, 0]))
print(f"additive self-convergence factor: "
      f"{np.mean(diffs_c) / np.mean(diffs_f):.4f}")

# multiplicative linear test equation (inline EM, exact GBM reference)
a_c, b_c = -1.0, 0.8
errs_m = {}
for J in (64, 128):
    g = np.linspace(0.0, 1.0, J + 1)
    dt = 1.0 / J
    tot = 0.0
    for i in range(paths_n):
        r = rng.derive(f"gbm-{J}-{i}")
        dW = math.sqrt(dt) * r.normal((J,))
        x = 1.0
        for j in range(J):
            x = x + dt * a_c * x + b_c * x * dW[j]
        exact_T = math.exp((a_c - 0.5 * b_c ** 2) * 1.0 + b_c * dW.sum())
        tot += abs(x - exact_T)
    errs_m[J] = tot / paths_n
fac = errs_m[64] / errs_m[128]
print(f"multiplicative halving factor: {fac:.4f}")
