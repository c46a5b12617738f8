import time

import numpy as np

from flowrestore.flowfield import GaussianField, MlpField
from flowrestore.fmtrain import (TrainConfig, cfm_loss_floor, field_mse,
                                 gaussian_toy_grid, mean_jacobian_norm,
                                 train, GaussianToy)
from flowrestore.numerics import RngStream

mean, std = (2.0, -1.0), 0.5
oracle = GaussianField(mean, std)
data = GaussianToy(mean, std)
grid = gaussian_toy_grid(mean, std)

for coeff in (0.0, 0.1):
    for seed in (0, 1, 2):
        f = MlpField(2, hidden=(128, 128), seed=seed)
        cfg = TrainConfig(epochs=2000, batch_size=64, learning_rate=1e-3,
                          lipschitz_coeff=coeff, seed=seed)
        t0 = time.time()
        f, hist = train(f, data, cfg)
        dt = time.time() - t0
        mse = field_mse(f, oracle, grid)
        jn = mean_jacobian_norm(f, grid, RngStream(99).derive("jn"), 8)
        # smoothed-window increases
        tot = np.array([r.total for r in hist])
        w = tot.reshape(-1, 100).mean(axis=1)
        inc = int(np.sum(np.diff(w) > 0))
        tail = tot[-200:].mean()
        floor_rng = RngStream(7).derive("floor", seed)
        floor = cfm_loss_floor(oracle, data, floor_rng, n=20000)
        print(f"coeff={coeff} seed={seed}: {dt:.1f}s mse={mse:.4f} "
              f"jacnorm={jn:.3f} window_incr={inc} tail={tail:.4f} "
              f"floor={floor:.4f} ratio={tail/floor:.3f}")
