import numpy as np
import pytest

from pcam.geometry import RigidTransform, random_rotation


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_transform(rng, max_angle=np.pi, max_t=1.0):
    return RigidTransform(random_rotation(rng, max_angle), rng.uniform(-max_t, max_t, size=3))


def brute_knn(ref, qry, k):
    """Exhaustive kNN: sort (distance, index) pairs with Python's sort."""
    out = []
    for q in qry:
        d = [(float(np.sum((q - r) ** 2)), j) for j, r in enumerate(ref)]
        d.sort()
        out.append([j for _, j in d[:k]])
    return np.array(out)


# small enough that a full train + eval finishes in about a second
TINY = [
    "model.n_layers=1", "model.channels=3,8", "model.k=6", "model.conf_k=6",
    "model.conf_blocks=1", "model.conf_width=8", "train.epochs=2", "train.lr_decay_epochs=1",
    "train.n_train=3", "train.n_val=2", "data.n_test=3", "data.n_points=32",
]


def tiny_config(*extra):
    from pcam.config import load_config

    return load_config(None, TINY + list(extra))
