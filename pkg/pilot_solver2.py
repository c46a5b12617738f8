import time

import numpy as np

from flowrestore.corpus import generate_image
from flowrestore.degrade import (FidelityProblem, GaussianBlur,
                                 IdentityNoise, degrade_observe)
from flowrestore.flowfield import Denoiser, MlpField
from flowrestore.fmtrain import SyntheticImages, TrainConfig, train
from flowrestore.metrics import psnr
from flowrestore.numerics import RngStream
from flowrestore.schedule import Schedule
from flowrestore.solver import SolverConfig, restore

SIZE = 16


def eval_denoiser(field, gen, n=20):
    rng = RngStream(77).derive("dn")
    den = Denoiser(field)
    out = []
    for t in (0.2, 0.5, 0.8):
        errs, base = [], []
        for i in range(n):
            x1 = generate_image(gen, SIZE, rng).reshape(-1)
            x0 = rng.normal((SIZE * SIZE,))
            xt = (1 - t) * x0 + t * x1
            errs.append(np.linalg.norm(den.denoise(t, xt) - x1))
            base.append(np.linalg.norm(xt - x1))
        out.append(f"t={t}: {np.mean(errs):.2f} vs raw {np.mean(base):.2f}")
    return "; ".join(out)


def run_tasks(field, gen, tag):
    clean = generate_image(gen, SIZE, RngStream(123).derive("img"))
    op = GaussianBlur((SIZE, SIZE), noise_std=0.02)
    obs = degrade_observe(op, clean, RngStream(5).derive("obs"))
    prob = FidelityProblem(op, obs)
    base = psnr(clean, op.adjoint(obs))
    sched = Schedule.geometric(0.965, 100, gamma="tied")
    cfg = SolverConfig(schedule=sched, N=100, K=80, h=0.0, seed=1)
    x, traj = restore(prob, field, cfg, reference=clean)
    deblur = traj.column("psnr")[-1]

    op_n = IdentityNoise((SIZE, SIZE), noise_std=0.1)
    obs_n = degrade_observe(op_n, clean, RngStream(6).derive("obsn"))
    prob_n = FidelityProblem(op_n, obs_n)
    noisy = psnr(clean, obs_n)
    x, traj_n = restore(prob_n, field, cfg, reference=clean)
    denoise = traj_n.column("psnr")[-1]

    prob_id = FidelityProblem(IdentityNoise((SIZE, SIZE), 0.0), clean.copy())
    x, traj_id = restore(prob_id, field, cfg, reference=clean)
    ident = traj_id.column("psnr")[-1]
    print(f"{tag}: deblur {base:.2f}->{deblur:.2f}  "
          f"denoise {noisy:.2f}->{denoise:.2f}  identity->{ident:.2f}")


for gen, hidden, epochs, batch in (
        ("smooth-blobs", (128, 128), 4000, 256),
        ("smooth-blobs", (256, 256), 6000, 256),
        ("mixed", (256, 256), 6000, 256)):
    t0 = time.time()
    f = MlpField(SIZE * SIZE, hidden=hidden, seed=0)
    cfg_train = TrainConfig(epochs=epochs, batch_size=batch,
                            learning_rate=1e-3, lipschitz_coeff=0.0, seed=0)
    f, hist = train(f, SyntheticImages(SIZE, generator=gen), cfg_train)
    dt = time.time() - t0
    tail = np.mean([r.total for r in hist[-100:]])
    print(f"--- gen={gen} hidden={hidden} epochs={epochs}: {dt:.0f}s "
          f"loss {hist[0].total:.1f}->{tail:.1f}")
    print("   ", eval_denoiser(f, "smooth-blobs" if gen != "mixed"
                               else "smooth-blobs"))
    run_tasks(f, "smooth-blobs", "    tasks")
