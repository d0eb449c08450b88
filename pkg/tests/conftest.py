import warnings

import numpy as np
import pytest

from bayesrec import MlpModel, SplitSpec, TrainConfig, generate_synthetic, split, train_mlp

warnings.filterwarnings("ignore", message="only .* favorable points")


def linear_model(w, b=0.0):
    """Single sigmoid layer: proba(x) = expit(w . x + b)."""
    w = np.asarray(w, dtype=float)
    return MlpModel(weights=[w[:, None]], biases=[np.array([float(b)])])


@pytest.fixture(scope="session")
def synthetic_split():
    d1 = generate_synthetic(1000, 0.0, seed=11)
    return split(d1, SplitSpec(0.8, seed=5))


@pytest.fixture(scope="session")
def synthetic_model(synthetic_split):
    train, _ = synthetic_split
    return train_mlp(train, TrainConfig(seed=3))
