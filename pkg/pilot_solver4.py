import numpy as np

from flowrestore.corpus import generate_image
from flowrestore.degrade import FidelityProblem, GaussianBlur, degrade_observe
from flowrestore.flowfield import load_field
from flowrestore.metrics import psnr
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


# ramped h: hitting iterations vs h=0 final
sched = Schedule.geometric(0.965, 100, gamma="tied")
for ramp in (0, 40, 80):
    for h in (0.0, 0.3, 0.5):
        hits, finals = [], []
        for seed in range(5):
            clean, prob = deblur_problem(seed)
            cfg0 = SolverConfig(schedule=sched, N=100, K=80, h=0.0,
                                seed=seed)
            _, t0 = restore(prob, field, cfg0, reference=clean)
            target = t0.column("psnr")[-1] - 0.2
            cfg = SolverConfig(schedule=sched, N=100, K=80, h=h,
                               h_ramp=ramp, seed=seed)
            _, tr = restore(prob, field, cfg, reference=clean)
            finals.append(tr.column("psnr")[-1])
            hits.append(hitting(tr.column("psnr"), 80, target))
        print(f"ramp={ramp} h={h}: finals mean {np.mean(finals):.2f} "
              f"hits {hits}")

# h=1.2 contrast on the same geometric schedule
clean, prob = deblur_problem(0)
cfg05 = SolverConfig(schedule=sched, N=100, K=80, h=0.5, h_ramp=80, seed=0)
_, t05 = restore(prob, field, cfg05, reference=clean)
s05, _ = cauchy_diagnostic(t05)
for label, sch in (("geometric", sched),
                   ("linear", Schedule.linear(100, gamma="tied"))):
    cfg12 = SolverConfig(schedule=sch, N=100, K=80, h=1.2, seed=0,
                         allow_unsafe_h=True)
    _, t12 = restore(prob, field, cfg12, reference=clean)
    s12, _ = cauchy_diagnostic(t12, zeta=0.99)
    print(f"h=1.2 {label}: sum {s12[-1]:.3g} diverged={t12.diverged} "
          f"ratio vs h=0.5 {s12[-1] / s05[-1]:.1f}")
