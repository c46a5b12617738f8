import sys
import time

import numpy as np

from flowrestore.corpus import generate_image
from flowrestore.degrade import (FidelityProblem, GaussianBlur,
                                 IdentityNoise, degrade_observe)
from flowrestore.flowfield import MlpField, load_field, save_field
from flowrestore.fmtrain import SyntheticImages, TrainConfig, train
from flowrestore.metrics import psnr
from flowrestore.numerics import RngStream
from flowrestore.schedule import Schedule
from flowrestore.solver import SolverConfig, cauchy_diagnostic, restore

SIZE = 16
CKPT = "/tmp/pilot_field_16.bin"

if len(sys.argv) > 1 and sys.argv[1] == "train":
    t0 = time.time()
    f = MlpField(SIZE * SIZE, hidden=(256, 256), seed=0)
    cfg_train = TrainConfig(epochs=12000, batch_size=256,
                            learning_rate=1e-3, lipschitz_coeff=0.0, seed=0)
    f, hist = train(f, SyntheticImages(SIZE, generator="smooth-blobs"),
                    cfg_train)
    print(f"train {time.time() - t0:.0f}s  "
          f"tail loss {np.mean([r.total for r in hist[-100:]]):.1f}")
    save_field(f, CKPT)
    sys.exit(0)

field = load_field(CKPT)


def deblur_problem(seed):
    clean = generate_image("smooth-blobs", SIZE,
                           RngStream(seed).derive("img"))
    op = GaussianBlur((SIZE, SIZE), noise_std=0.02)
    obs = degrade_observe(op, clean, RngStream(seed).derive("obs"))
    return clean, FidelityProblem(op, obs)


# gamma mode on deblur
for gamma in ("tied", 0.01, 0.03, 0.1):
    finals = []
    for seed in range(3):
        clean, prob = deblur_problem(seed)
        sched = Schedule.geometric(0.965, 100, gamma=gamma)
        cfg = SolverConfig(schedule=sched, N=100, K=80, h=0.0, seed=seed)
        _, traj = restore(prob, field, cfg, reference=clean)
        finals.append(traj.column("psnr")[-1])
    print(f"gamma={gamma}: deblur finals {np.round(finals, 2)}")

# lambda sweep + linear, 5 seeds
print("\nlambda sweep (gamma=tied):")
for lam in (0.90, 0.94, 0.96, 0.99):
    finals = []
    for seed in range(5):
        clean, prob = deblur_problem(seed)
        sched = Schedule.geometric(lam, 100, gamma="tied")
        cfg = SolverConfig(schedule=sched, N=100, K=80, h=0.0, seed=seed)
        _, traj = restore(prob, field, cfg, reference=clean)
        finals.append(traj.column("psnr")[-1])
    print(f"  lam={lam}: mean {np.mean(finals):.2f}  {np.round(finals, 2)}")
finals = []
for seed in range(5):
    clean, prob = deblur_problem(seed)
    sched = Schedule.linear(100, gamma="tied")
    cfg = SolverConfig(schedule=sched, N=100, K=80, h=0.0, seed=seed)
    _, traj = restore(prob, field, cfg, reference=clean)
    finals.append(traj.column("psnr")[-1])
print(f"  linear: mean {np.mean(finals):.2f}  {np.round(finals, 2)}")

# h ablation: hitting iteration after K
print("\nh ablation (lam=0.965):")
for h in (0.0, 0.3, 0.5):
    hits, finals = [], []
    for seed in range(5):
        clean, prob = deblur_problem(seed)
        sched = Schedule.geometric(0.965, 100, gamma="tied")
        cfg = SolverConfig(schedule=sched, N=100, K=80, h=h, seed=seed)
        _, traj = restore(prob, field, cfg, reference=clean)
        finals.append(traj.column("psnr")[-1])
    print(f"  h={h}: finals mean {np.mean(finals):.2f}  "
          f"{np.round(finals, 2)}")

# full curves for h to check hitting-time behavior, one seed
for h in (0.0, 0.5):
    clean, prob = deblur_problem(0)
    sched = Schedule.geometric(0.965, 100, gamma="tied")
    cfg = SolverConfig(schedule=sched, N=100, K=80, h=h, seed=0)
    _, traj = restore(prob, field, cfg, reference=clean)
    c = traj.column("psnr")
    print(f"h={h} curve k=70..100: {np.round(c[70:101:3], 2)}")

# cauchy contrast
clean, prob = deblur_problem(0)
cfg05 = SolverConfig(schedule=Schedule.geometric(0.965, 100, gamma="tied"),
                     N=100, K=80, h=0.5, seed=0)
_, t05 = restore(prob, field, cfg05, reference=clean)
s05, ok05 = cauchy_diagnostic(t05)
cfg12 = SolverConfig(schedule=Schedule.linear(100, gamma="tied"), N=100,
                     K=80, h=1.2, seed=0, allow_unsafe_h=True)
_, t12 = restore(prob, field, cfg12, reference=clean)
s12, ok12 = cauchy_diagnostic(t12, zeta=0.99)
print(f"\ncauchy: h=0.5 sum {s05[-1]:.1f} bounded={ok05}; "
      f"h=1.2 sum {s12[-1]:.3g} bounded={ok12} diverged={t12.diverged} "
      f"ratio {s12[-1] / s05[-1]:.1f}")

# identity and denoise finals for thresholds
clean, _ = deblur_problem(0)
prob_id = FidelityProblem(IdentityNoise((SIZE, SIZE), 0.0), clean.copy())
sched = Schedule.geometric(0.965, 100, gamma="tied")
for seed in range(3):
    cfg = SolverConfig(schedule=sched, N=100, K=80, h=0.0, seed=seed)
    _, traj = restore(prob_id, field, cfg, reference=clean)
    print(f"identity seed={seed}: final {traj.column('psnr')[-1]:.2f}")
op_n = IdentityNoise((SIZE, SIZE), 0.1)
for seed in range(3):
    obs_n = degrade_observe(op_n, clean, RngStream(seed).derive("on"))
    prob_n = FidelityProblem(op_n, obs_n)
    cfg = SolverConfig(schedule=sched, N=100, K=80, h=0.0, seed=seed)
    _, traj = restore(prob_n, field, cfg, reference=clean)
    print(f"denoise seed={seed}: {psnr(clean, obs_n):.2f} -> "
          f"{traj.column('psnr')[-1]:.2f}")
