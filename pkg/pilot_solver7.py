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


for gamma in (0.02, 0.03, 0.05):
    sched = Schedule.geometric(0.965, 100, gamma=gamma)
    for h in (0.0, 0.3, 0.5, 0.7):
        hits, fins = [], []
        for seed in range(5):
            clean, prob = deblur_problem(seed)
            cfg0 = SolverConfig(schedule=sched, N=100, K=80, h=0.0,
                                seed=seed)
            _, t0 = restore(prob, field, cfg0, reference=clean)
            target = t0.column("psnr")[-1] - 0.2
            cfg = SolverConfig(schedule=sched, N=100, K=80, h=h, seed=seed)
            _, tr = restore(prob, field, cfg, reference=clean)
            fins.append(tr.column("psnr")[-1])
            hits.append(hitting(tr.column("psnr"), 80, target))
        print(f"gamma={gamma} h={h}: fin {np.mean(fins):.2f} hits {hits}")
    print()
