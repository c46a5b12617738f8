import numpy as np

from flowrestore.corpus import generate_image
from flowrestore.degrade import FidelityProblem, GaussianBlur, degrade_observe
from flowrestore.flowfield import load_field
from flowrestore.numerics import RngStream
from flowrestore.schedule import Schedule
from flowrestore.solver import SolverConfig, restore

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


for lam, K in ((0.965, 40), (0.965, 60), (0.98, 40), (0.98, 80)):
    sched = Schedule.geometric(lam, 100, gamma="tied")
    for draws in (1, 4):
        h0_hits, h5_hits, fin0, fin5 = [], [], [], []
        for seed in range(5):
            clean, prob = deblur_problem(seed)
            cfg0 = SolverConfig(schedule=sched, N=100, K=K, h=0.0,
                                seed=seed, noise_draws_per_step=draws)
            _, t0 = restore(prob, field, cfg0, reference=clean)
            p0 = t0.column("psnr")[-1]
            cfg5 = SolverConfig(schedule=sched, N=100, K=K, h=0.5,
                                seed=seed, noise_draws_per_step=draws)
            _, t5 = restore(prob, field, cfg5, reference=clean)
            fin0.append(p0)
            fin5.append(t5.column("psnr")[-1])
            h0_hits.append(hitting(t0.column("psnr"), K, p0 - 0.2))
            h5_hits.append(hitting(t5.column("psnr"), K, p0 - 0.2))
        print(f"lam={lam} K={K} draws={draws}: "
              f"h0 fin {np.mean(fin0):.2f} hits {h0_hits} | "
              f"h5 fin {np.mean(fin5):.2f} hits {h5_hits}")
