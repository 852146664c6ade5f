import pytest

from eigenba.data import make_pattern_dataset
from eigenba.net import TrainConfig, build_mlp, sgd_train


@pytest.fixture(scope="session")
def small_pair():
    """4-class 6x6 pattern data with an attacked model and a surrogate on disjoint splits."""
    data = make_pattern_dataset(4, 6, 120, seed=3)
    a, s, test = data.split([0.4, 0.4, 0.2], seed=4)
    make = lambda seed: build_mlp([36, 24, 8, 4], 5, seed=seed, input_shape=(1, 6, 6))
    attacked, _ = sgd_train(make(1), a.X, a.y, TrainConfig(0.1, 25, 16, 1))
    surrogate, _ = sgd_train(make(2), s.X, s.y, TrainConfig(0.1, 25, 16, 2))
    return attacked, surrogate, test
