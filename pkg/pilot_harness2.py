import sys
from pathlib import Path
import numpy as np
sys.path.insert(0, "/root/pkg/tests")
from conftest import IMG_SIZE
from flowrestore.flowfield import load_field
from flowrestore.fmtrain import make_data_source
from flowrestore.numerics import RngStream
from flowrestore.degrade import make_operator, degrade_observe, FidelityProblem
from flowrestore.schedule import Schedule
from flowrestore.solver import SolverConfig, restore, cauchy_diagnostic
from flowrestore.metrics import psnr

field0 = load_field("/tmp/pilot-cache/field16-0.0.ckpt")
field1 = load_field("/tmp/pilot-cache/field16-0.1.ckpt")
data = make_data_source("synthetic-images", size=IMG_SIZE, generator="smooth-blobs")
images = [r.reshape(IMG_SIZE, IMG_SIZE)
          for r in data.sample(RngStream(777).derive("held-out"), 3)]

def problem(kind, clean, seed, i, noise):
    op = make_operator(kind, clean.shape, noise)
    return FidelityProblem(op, degrade_observe(op, clean, RngStream(seed).derive("degrade", i)))

def run(field, seed, kind="gaussian-blur", noise=0.02, lam=0.96, gamma="tied",
        N=100, K=80, h=0.0, unsafe=False):
    curves, finals, sums, div = [], [], [], False
    for i, clean in enumerate(images):
        prob = problem(kind, clean, seed, i, noise)
        sched = Schedule.geometric(lam, N, gamma=gamma, h=h)
        cfg = SolverConfig(schedule=sched, N=N, K=K, h=h, seed=seed*100000+i,
                           allow_unsafe_h=unsafe)
        x, traj = restore(prob, field, cfg, reference=clean)
        curves.append(traj.column("psnr") if not traj.diverged else None)
        finals.append(psnr(clean, x))
        sums.append(cauchy_diagnostic(traj)[0][-1])
        div = div or traj.diverged
    return finals, float(np.mean(sums)), div

# Cauchy ratio under gamma=0.02 N=200 K=100
_, s05, d05 = run(field0, 0, gamma=0.02, N=200, K=100, h=0.5)
_, s12, d12 = run(field0, 0, gamma=0.02, N=200, K=100, h=1.2, unsafe=True)
print(f"cauchy gamma=0.02 N=200: h0.5 {s05:.2f} (div={d05}) h1.2 {s12:.3g} (div={d12}) ratio {s12/s05:.1f}")

# criterion 10 on denoising, tied N=100 K=80
p0 = [np.mean(run(field0, s, kind="identity-noise", noise=0.1)[0]) for s in range(5)]
p1 = [np.mean(run(field1, s, kind="identity-noise", noise=0.1)[0]) for s in range(5)]
print(f"denoise psnr: coeff0 {np.mean(p0):.2f} coeff0.1 {np.mean(p1):.2f} diff {np.mean(p1)-np.mean(p0):+.2f}")

# criterion 10 on deblur gamma=0.02 N=200 K=100
q0 = [np.mean(run(field0, s, gamma=0.02, N=200, K=100)[0]) for s in range(5)]
q1 = [np.mean(run(field1, s, gamma=0.02, N=200, K=100)[0]) for s in range(5)]
print(f"deblur g0.02 psnr: coeff0 {np.mean(q0):.2f} coeff0.1 {np.mean(q1):.2f} diff {np.mean(q1)-np.mean(q0):+.2f}")
