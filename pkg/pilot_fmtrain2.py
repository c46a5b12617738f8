import time

import numpy as np

from flowrestore.flowfield import GaussianField, MlpField
from flowrestore.fmtrain import (TrainConfig, cfm_loss_floor, field_mse,
                                 gaussian_toy_grid, train, GaussianToy)
from flowrestore.numerics import RngStream

mean, std = (2.0, -1.0), 0.5
oracle = GaussianField(mean, std)
data = GaussianToy(mean, std)
grid = gaussian_toy_grid(mean, std)

floor = cfm_loss_floor(oracle, data, RngStream(7).derive("floor"), n=40000)
print(f"floor={floor:.4f}")

for batch, lr in ((256, 1e-3), (256, 2e-3), (512, 1e-3), (128, 5e-4),
                  (256, 5e-4)):
    for seed in (0, 1, 2):
        f = MlpField(2, hidden=(128, 128), seed=seed)
        cfg = TrainConfig(epochs=2000, batch_size=batch, learning_rate=lr,
                          lipschitz_coeff=0.0, seed=seed)
        t0 = time.time()
        f, hist = train(f, data, cfg)
        dt = time.time() - t0
        mse = field_mse(f, oracle, grid)
        tot = np.array([r.total for r in hist])
        w = tot.reshape(-1, 100).mean(axis=1)
        inc = int(np.sum(np.diff(w) > 0))
        tail = tot[-200:].mean()
        print(f"B={batch} lr={lr}: seed={seed} {dt:.1f}s mse={mse:.4f} "
              f"incr={inc} ratio={tail / floor:.3f}")
