"""Desk-scale model pairs: an attacked model plus a surrogate trained on a
disjoint split of the same synthetic image data, and a held-out test split
from which attacked images are drawn."""

from dataclasses import dataclass

from .data import make_pattern_dataset
from .net import TrainConfig, build_mlp, sgd_train

SIDE = 12
CLASSES = 10
ARCHITECTURES = {
    # hidden sizes; the representation is the last hidden relu output
    "attacked": [128, 64],
    "same-arch": [128, 64],
    "small-surrogate": [64, 32],
}


@dataclass
class ModelPair:
    attacked: object
    surrogate: object
    attacked_train: object
    surrogate_train: object
    test: object
    attacked_report: object
    surrogate_report: object


def image_mlp(hidden, seed, side=SIDE, classes=CLASSES):
    sizes = [side * side] + list(hidden) + [classes]
    # flatten + (dense, relu) per hidden layer
    return build_mlp(sizes, 1 + 2 * len(hidden), seed=seed, input_shape=(1, side, side))


def desk_pair(kind="same-arch", seed=0, per_class=300, epochs=30, lr=0.1, batch=32):
    """Train the attacked model and a surrogate of architecture ``kind`` on disjoint splits."""
    data = make_pattern_dataset(CLASSES, SIDE, per_class, seed=seed)
    a_train, s_train, test = data.split([0.4, 0.4, 0.2], seed=seed + 1)
    attacked, a_rep = sgd_train(
        image_mlp(ARCHITECTURES["attacked"], seed + 11),
        a_train.X, a_train.y, TrainConfig(lr, epochs, batch, seed + 12), test.X, test.y,
    )
    surrogate, s_rep = sgd_train(
        image_mlp(ARCHITECTURES[kind], seed + 21),
        s_train.X, s_train.y, TrainConfig(lr, epochs, batch, seed + 22), test.X, test.y,
    )
    attacked.metadata.update(role="attacked", seed=seed, dataset=data.name, test_accuracy=a_rep.test_accuracy)
    surrogate.metadata.update(role=kind, seed=seed, dataset=data.name, test_accuracy=s_rep.test_accuracy)
    return ModelPair(attacked, surrogate, a_train, s_train, test, a_rep, s_rep)
