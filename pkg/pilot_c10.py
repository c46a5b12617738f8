"""Criterion 10 rescue pilot: filtered-noise generator twins, then wide blobs twins."""
import shutil
import sys
import time

sys.path.insert(0, "src")
import numpy as np

from flowrestore.flowfield import MlpField, save_field
from flowrestore.fmtrain import TrainConfig, make_data_source, train
from flowrestore.harness import jacobian_norm_profile, parse_config, run_experiment, test_images
from flowrestore.numerics import RngStream


def train_twin(coeff, gen, hidden=(256, 256), steps=6000, size=16, tag=""):
    data = make_data_source("synthetic-images", size=size, generator=gen)
    f = MlpField(size * size, hidden=hidden, seed=0)
    cfg = TrainConfig(epochs=steps, batch_size=256, lipschitz_coeff=coeff, seed=0)
    t0 = time.perf_counter()
    train(f, data, cfg)
    print(f"trained {gen}{tag} coeff={coeff} in {time.perf_counter() - t0:.0f}s", flush=True)
    save_field(f, f"/tmp/pilot-cache/{gen}{tag}-{coeff}.ckpt")
    return f


def evaluate(gen, f0, f1, tag=""):
    base = f"""
[experiment]
generator = {gen}
size = 16
count = 3
lam = 0.965
gamma = tied
n = 100
k = 80
seeds = 0 1 2 3 4
"""
    # jacobian profile, same grid as the ablate axis
    cfg = parse_config(base + "out = /tmp/pilot-c10/x\n")
    states = np.stack([im.reshape(-1) for im in test_images(cfg)])
    ts = np.linspace(0.1, 0.9, 5)
    jn = []
    for f in (f0, f1):
        rng = RngStream(314).derive("jacobian-probes")
        jn.append(jacobian_norm_profile(f, states, ts, rng, probes=8))
    red = 100.0 * (1.0 - jn[1] / jn[0])
    print(f"{gen}{tag} jacnorm: coeff0 {jn[0]:.3f} coeff0.1 {jn[1]:.3f} reduction {red:.1f}%", flush=True)

    for task, extra in (
        ("gaussian-blur", "operator = gaussian-blur\nnoise_std = 0.02\n"),
        ("identity-noise", "operator = identity-noise\nnoise_std = 0.1\n"),
    ):
        gaps = []
        means = []
        for label, f in (("0", f0), ("0.1", f1)):
            out = f"/tmp/pilot-c10/{gen}{tag}-{task}-{label}"
            shutil.rmtree(out, ignore_errors=True)
            cfg = parse_config(base + extra + f"out = {out}\n")
            rep = run_experiment(cfg, field=f)
            means.append(rep.psnr_mean)
            gaps.append(rep.seed_psnr)
        per_seed = [gaps[1][s] - gaps[0][s] for s in sorted(gaps[0])]
        print(f"{gen}{tag} {task}: coeff0 {means[0]:.2f} coeff0.1 {means[1]:.2f} "
              f"diff {means[1] - means[0]:+.2f} per-seed {[f'{d:+.2f}' for d in per_seed]}",
              flush=True)


f0 = train_twin(0.0, "filtered-noise")
f1 = train_twin(0.1, "filtered-noise")
evaluate("filtered-noise", f0, f1)

f0 = train_twin(0.0, "smooth-blobs", hidden=(512, 512), tag="-w512")
f1 = train_twin(0.1, "smooth-blobs", hidden=(512, 512), tag="-w512")
evaluate("smooth-blobs", f0, f1, tag="-w512")
