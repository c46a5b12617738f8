"""Shared fixtures: session-scoped trained fields.

Training is the expensive part of the suite, so each field is trained once
per session and reused by the solver tests and the acceptance ablations.
"""

import numpy as np
import pytest

from flowrestore.flowfield import MlpField
from flowrestore.fmtrain import TrainConfig, make_data_source, train
from flowrestore.numerics import RngStream

IMG_SIZE = 16
TOY01_MEAN = tuple(np.linspace(0.3, 0.7, 32))
TOY01_STD = 0.1


def train_image_field(lipschitz_coeff: float, steps: int = 6000) -> MlpField:
    """Train a 16x16 smooth-blob image field from a fixed seed."""
    data = make_data_source("synthetic-images", size=IMG_SIZE,
                            generator="smooth-blobs")
    field = MlpField(IMG_SIZE * IMG_SIZE, hidden=(256, 256), seed=0)
    cfg = TrainConfig(epochs=steps, batch_size=256,
                      lipschitz_coeff=lipschitz_coeff, seed=0)
    train(field, data, cfg)
    return field


@pytest.fixture(scope="session")
def image_field():
    """Image field without Jacobian penalty."""
    return train_image_field(0.0)


@pytest.fixture(scope="session")
def penalized_image_field():
    """Twin of image_field trained with Jacobian penalty 0.1."""
    return train_image_field(0.1)


@pytest.fixture(scope="session")
def blob_images():
    """Held-out clean 16x16 test images in [0, 1]."""
    data = make_data_source("synthetic-images", size=IMG_SIZE,
                            generator="smooth-blobs")
    rng = RngStream(777).derive("held-out")
    flat = data.sample(rng, 8)
    return [row.reshape(IMG_SIZE, IMG_SIZE) for row in flat]


@pytest.fixture(scope="session")
def toy01_field():
    """Field trained on a 32-d Gaussian toy whose mass sits inside [0, 1].

    Restoration targets must be valid reference images ([0, 1] range), which
    rules out the wider calibration toy.  32 coordinates keep per-run PSNR
    variance small enough for seed-mean comparisons.
    """
    data = make_data_source("gaussian-toy", mean=TOY01_MEAN, std=TOY01_STD)
    field = MlpField(len(TOY01_MEAN), seed=0)
    cfg = TrainConfig(epochs=2000, batch_size=256, lipschitz_coeff=0.0,
                      seed=0)
    train(field, data, cfg)
    return field
