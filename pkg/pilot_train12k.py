import sys, time
from pathlib import Path
import numpy as np
sys.path.insert(0, "/root/pkg/tests")
from conftest import train_image_field, IMG_SIZE
from flowrestore.flowfield import save_field, load_field
from flowrestore.fmtrain import make_data_source
from flowrestore.numerics import RngStream
from flowrestore.degrade import make_operator, degrade_observe, FidelityProblem
from flowrestore.schedule import Schedule
from flowrestore.solver import SolverConfig, restore
from flowrestore.metrics import psnr
from flowrestore.harness import mean_jacobian_norm

CACHE = Path("/tmp/pilot-cache")
for coeff in (0.0, 0.1):
    p = CACHE / f"field16-{coeff}-12k.ckpt"
    if not p.exists():
        t0 = time.time()
        save_field(train_image_field(coeff, steps=12000), p)
        print(f"trained 12k coeff={coeff} in {time.time()-t0:.0f}s", flush=True)

f0 = load_field(CACHE / "field16-0.0-12k.ckpt")
f1 = load_field(CACHE / "field16-0.1-12k.ckpt")
data = make_data_source("synthetic-images", size=IMG_SIZE, generator="smooth-blobs")
images = [r.reshape(IMG_SIZE, IMG_SIZE)
          for r in data.sample(RngStream(777).derive("held-out"), 3)]

jrng = RngStream(314).derive("jacobian-probes")
states = [im.reshape(-1) for im in images]
ts = np.linspace(0.1, 0.9, 5)
j0 = mean_jacobian_norm(f0, states, ts, jrng)
j1 = mean_jacobian_norm(f1, states, ts, jrng)
print(f"12k jacnorm: coeff0 {j0:.3f} coeff0.1 {j1:.3f} reduction {1-j1/j0:.1%}")

def run(field, seed, kind, noise, gamma="tied", N=100, K=80, **op_params):
    finals = []
    for i, clean in enumerate(images):
        op = make_operator(kind, clean.shape, noise, **op_params)
        prob = FidelityProblem(op, degrade_observe(op, clean, RngStream(seed).derive("degrade", i)))
        cfg = SolverConfig(schedule=Schedule.geometric(0.96, N, gamma=gamma),
                           N=N, K=K, seed=seed*100000+i)
        x, _ = restore(prob, field, cfg, reference=clean)
        finals.append(psnr(clean, x))
    return float(np.mean(finals))

for kind, noise in (("gaussian-blur", 0.02), ("identity-noise", 0.1)):
    p0 = np.mean([run(f0, s, kind, noise) for s in range(5)])
    p1 = np.mean([run(f1, s, kind, noise) for s in range(5)])
    print(f"12k {kind}: coeff0 {p0:.2f} coeff0.1 {p1:.2f} diff {p1-p0:+.2f}")
