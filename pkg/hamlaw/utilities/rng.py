from enum import IntEnum

import numpy as np

import hamlaw.utilities.data_models as models


class Purpose(IntEnum):
    """Counter high word separating the independent streams drawn from one Seed"""

    EDGES = 0
    PLANT = 1
    THIN = 2
    PLANT_SECOND = 3
    BOOTSTRAP = 4


def generator(seed: models.Seed, purpose: Purpose) -> np.random.Generator:
    """Philox generator keyed by (root, stream) with the purpose in the counter.

    The i-th uniform of a purpose stream depends only on (root, stream, purpose, i),
    so draws are reproducible bit-for-bit and independent of trial scheduling.
    """
    key = np.array([seed.root, seed.stream], dtype=np.uint64)
    counter = np.array([0, 0, 0, int(purpose)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def uniforms(seed: models.Seed, purpose: Purpose, size: int) -> np.ndarray:
    return generator(seed, purpose).random(size)
