import numpy as np

from flowrestore.corpus import generate_image
from flowrestore.degrade import FidelityProblem, GaussianBlur, degrade_observe
from flowrestore.flowfield import load_field
from flowrestore.numerics import RngStream
from flowrestore.schedule import Schedule
from flowrestore.solver import SolverConfig, cauchy_diagnostic, restore

SIZE = 16
field = load_field("/tmp/pilot_field_16.bin")


def deblur_problem(seed):
    clean = generate_image("smooth-blobs", SIZE,
                           RngStream(seed).derive("img"))
    op = GaussianBlur((SIZE, SIZE), noise_std=0.02)
    obs = degrade_observe(op, clean, RngStream(seed).derive("obs"))
    return clean, FidelityProblem(op, obs)


def hitting(curve, K, target):
    for k in range(K, len(curve)):
        if curve[k] >= target:
            return k - K
    return None


sched = Schedule.geometric(0.965, 100, gamma="tied")
for draws in (1, 2, 4):
    rows = []
    for seed in range(5):
        clean, prob = deblur_problem(seed)
        cfg0 = SolverConfig(schedule=sched, N=100, K=80, h=0.0, seed=seed,
                            noise_draws_per_step=draws)
        _, t0 = restore(prob, field, cfg0, reference=clean)
        p0 = t0.column("psnr")[-1]
        target = p0 - 0.2
        h0_hit = hitting(t0.column("psnr"), 80, target)
        cfg5 = SolverConfig(schedule=sched, N=100, K=80, h=0.5, seed=seed,
                            noise_draws_per_step=draws)
        _, t5 = restore(prob, field, cfg5, reference=clean)
        p5 = t5.column("psnr")[-1]
        h5_hit = hitting(t5.column("psnr"), 80, target)
        rows.append((p0, h0_hit, p5, h5_hit))
    print(f"draws={draws}:")
    for r in rows:
        print(f"   h0 final {r[0]:.2f} hit {r[1]}; "
              f"h5 final {r[2]:.2f} hit {r[3]}")

# n=200 contrast, h=0.5 vs h=1.2, same geometric schedule
sched200 = Schedule.geometric(0.965, 200, gamma="tied")
clean, prob = deblur_problem(0)
cfg05 = SolverConfig(schedule=sched200, N=200, K=80, h=0.5, seed=0)
_, t05 = restore(prob, field, cfg05, reference=clean)
s05, ok05 = cauchy_diagnostic(t05)
cfg12 = SolverConfig(schedule=sched200, N=200, K=80, h=1.2, seed=0,
                     allow_unsafe_h=True)
_, t12 = restore(prob, field, cfg12, reference=clean)
s12, ok12 = cauchy_diagnostic(t12, zeta=0.99)
print(f"N=200: h=0.5 sum {s05[-1]:.1f} bounded={ok05}; h=1.2 sum "
      f"{s12[-1]:.3g} diverged={t12.diverged} ratio {s12[-1] / s05[-1]:.1f}")
