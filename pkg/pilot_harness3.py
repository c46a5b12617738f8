import sys
import numpy as np
sys.path.insert(0, "/root/pkg/tests")
from conftest import IMG_SIZE
from flowrestore.flowfield import load_field
from flowrestore.fmtrain import make_data_source
from flowrestore.numerics import RngStream
from flowrestore.degrade import make_operator, degrade_observe, FidelityProblem
from flowrestore.schedule import Schedule
from flowrestore.solver import SolverConfig, restore
from flowrestore.metrics import psnr

field0 = load_field("/tmp/pilot-cache/field16-0.0.ckpt")
field1 = load_field("/tmp/pilot-cache/field16-0.1.ckpt")
data = make_data_source("synthetic-images", size=IMG_SIZE, generator="smooth-blobs")
images = [r.reshape(IMG_SIZE, IMG_SIZE)
          for r in data.sample(RngStream(777).derive("held-out"), 3)]

def run(field, seed, kind, noise, **op_params):
    finals = []
    for i, clean in enumerate(images):
        op = make_operator(kind, clean.shape, noise, **op_params)
        prob = FidelityProblem(op, degrade_observe(op, clean, RngStream(seed).derive("degrade", i)))
        cfg = SolverConfig(schedule=Schedule.geometric(0.96, 100, gamma="tied"),
                           N=100, K=80, seed=seed*100000+i)
        x, _ = restore(prob, field, cfg, reference=clean)
        finals.append(psnr(clean, x))
    return float(np.mean(finals))

for kind, noise, params in (("random-mask", 0.02, {"drop_fraction": 0.5}),
                            ("box-mask", 0.02, {"area_fraction": 1/16}),
                            ("downsample", 0.02, {"factor": 2})):
    p0 = np.mean([run(field0, s, kind, noise, **params) for s in range(5)])
    p1 = np.mean([run(field1, s, kind, noise, **params) for s in range(5)])
    print(f"{kind}: coeff0 {p0:.2f} coeff0.1 {p1:.2f} diff {p1-p0:+.2f}")
