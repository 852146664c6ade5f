"""A small layered network engine in numpy.

A :class:`LayeredModel` is an ordered list of layers cut at
``representation_index``: layers below the cut form the representation map
``h`` and the rest form the head ``g``, so ``forward = g(h(x))``.  Every layer
supports a batched forward pass, reverse-mode (vector-Jacobian) and
forward-mode (Jacobian-vector) products with respect to its input, and
parameter gradients for training.
"""

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DataError, ModelFormatError, ShapeError

FORMAT_NAME = "eigenba-model"
FORMAT_VERSION = 1


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# --------------------------------------------------------------------- layers


@dataclass
class Dense:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    kind = "dense"

    @classmethod
    def init(cls, rng, n_in, n_out):
        return cls(glorot_uniform(rng, (n_out, n_in), n_in, n_out), np.zeros(n_out))

    def params(self):
        return {"weights": self.weights, "bias": self.bias}

    def output_shape(self, shape):
        if len(shape) != 1 or shape[0] != self.weights.shape[1]:
            raise ShapeError(f"dense layer expects ({self.weights.shape[1]},), got {shape}")
        return (self.weights.shape[0],)

    def forward(self, x):
        return x @ self.weights.T + self.bias, None

    def vjp(self, x, cache, g):
        return g @ self.weights

    def jvp(self, x, cache, t):
        return t @ self.weights.T

    def param_grads(self, x, cache, g):
        return {"weights": g.T @ x, "bias": g.sum(axis=0)}


@dataclass
class ReLU:
    kind = "relu"

    def params(self):
        return {}

    def output_shape(self, shape):
        return shape

    def forward(self, x):
        # subgradient 0 at exactly-zero preactivations
        mask = x > 0
        return np.where(mask, x, 0.0), mask

    def vjp(self, x, mask, g):
        return g * mask

    def jvp(self, x, mask, t):
        return t * mask

    def param_grads(self, x, cache, g):
        return {}


@dataclass
class Conv2D:
    """Valid (unpadded) 2-D convolution on (channels, height, width) inputs."""

    kernels: np.ndarray  # (out_c, in_c, kh, kw)
    bias: np.ndarray  # (out_c,)
    stride: int = 1

    kind = "conv2d"

    @classmethod
    def init(cls, rng, in_c, out_c, size, stride=1):
        fan_in = in_c * size * size
        fan_out = out_c * size * size
        k = glorot_uniform(rng, (out_c, in_c, size, size), fan_in, fan_out)
        return cls(k, np.zeros(out_c), stride)

    def params(self):
        return {"kernels": self.kernels, "bias": self.bias}

    def output_shape(self, shape):
        oc, ic, kh, kw = self.kernels.shape
        if len(shape) != 3 or shape[0] != ic or shape[1] < kh or shape[2] < kw:
            raise ShapeError(f"conv2d layer expects ({ic}, >={kh}, >={kw}), got {shape}")
        s = self.stride
        return (oc, (shape[1] - kh) // s + 1, (shape[2] - kw) // s + 1)

    def _windows(self, x):
        kh, kw = self.kernels.shape[2:]
        win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
        return win[:, :, :: self.stride, :: self.stride]

    def _conv(self, x):
        return np.einsum("bcijkl,ockl->boij", self._windows(x), self.kernels, optimize=True)

    def forward(self, x):
        return self._conv(x) + self.bias[None, :, None, None], None

    def vjp(self, x, cache, g):
        kh, kw = self.kernels.shape[2:]
        s = self.stride
        _, _, oh, ow = g.shape
        out = np.zeros((g.shape[0],) + x.shape[1:])
        for a in range(kh):
            for b in range(kw):
                out[:, :, a : a + s * oh : s, b : b + s * ow : s] += np.einsum(
                    "boij,oc->bcij", g, self.kernels[:, :, a, b]
                )
        return out

    def jvp(self, x, cache, t):
        return self._conv(t)

    def param_grads(self, x, cache, g):
        dk = np.einsum("bcijkl,boij->ockl", self._windows(x), g, optimize=True)
        return {"kernels": dk, "bias": g.sum(axis=(0, 2, 3))}


@dataclass
class Flatten:
    kind = "flatten"

    def params(self):
        return {}

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), None

    def vjp(self, x, cache, g):
        return g.reshape((g.shape[0],) + x.shape[1:])

    def jvp(self, x, cache, t):
        return t.reshape(t.shape[0], -1)

    def param_grads(self, x, cache, g):
        return {}


@dataclass
class Softmax:
    kind = "softmax"

    def params(self):
        return {}

    def output_shape(self, shape):
        if len(shape) != 1:
            raise ShapeError(f"softmax expects a vector input, got {shape}")
        return shape

    def forward(self, x):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=1, keepdims=True)
        return s, s

    def vjp(self, x, s, g):
        return s * (g - (g * s).sum(axis=1, keepdims=True))

    def jvp(self, x, s, t):
        return s * (t - (t * s).sum(axis=1, keepdims=True))

    def param_grads(self, x, cache, g):
        return {}


LAYER_TYPES = {cls.kind: cls for cls in (Dense, ReLU, Conv2D, Flatten, Softmax)}


# ---------------------------------------------------------------------- model


@dataclass
class LayeredModel:
    """Feed-forward classifier ``g(h(x))`` ending in a softmax.

    ``input_shape`` is the shape of one sample; public methods also accept
    the flattened sample.  ``representation_index`` counts the layers that
    make up ``h``.
    """

    layers: list
    input_shape: tuple
    representation_index: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise ArgumentError("the final layer must be a softmax")
        if any(isinstance(layer, Softmax) for layer in self.layers[:-1]):
            raise ArgumentError("softmax may only appear as the final layer")
        if not 0 <= self.representation_index <= len(self.layers):
            raise ArgumentError("representation_index out of range")
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        self._shapes = shapes

    # shapes ---------------------------------------------------------------

    @property
    def input_size(self):
        return int(np.prod(self.input_shape))

    @property
    def class_count(self):
        return self._shapes[-1][0]

    @property
    def representation_shape(self):
        return self._shapes[self.representation_index]

    @property
    def representation_size(self):
        return int(np.prod(self.representation_shape))

    def _sample(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape and x.shape != (self.input_size,):
            raise ShapeError(f"expected input of shape {self.input_shape}, got {x.shape}")
        return x.reshape((1,) + self.input_shape)

    def _batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1:] == self.input_shape:
            return X
        if X.ndim == 2 and X.shape[1] == self.input_size:
            return X.reshape((X.shape[0],) + self.input_shape)
        raise ShapeError(f"expected a batch of {self.input_shape} inputs, got {X.shape}")

    # passes ---------------------------------------------------------------

    def _run(self, x, start, stop):
        tape = []
        for layer in self.layers[start:stop]:
            out, cache = layer.forward(x)
            tape.append((layer, x, cache))
            x = out
        return x, tape

    @staticmethod
    def _pullback(tape, g):
        for layer, x, cache in reversed(tape):
            g = layer.vjp(x, cache, g)
        return g

    @staticmethod
    def _pushforward(tape, t):
        for layer, x, cache in tape:
            t = layer.jvp(x, cache, t)
        return t

    def forward(self, x):
        """Class probability vector for one input."""
        out, _ = self._run(self._sample(x), 0, len(self.layers))
        return out[0]

    __call__ = forward

    def predict_proba(self, X):
        out, _ = self._run(self._batch(X), 0, len(self.layers))
        return out

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def representation(self, x):
        """Output of ``h`` (the first ``representation_index`` layers)."""
        out, _ = self._run(self._sample(x), 0, self.representation_index)
        return out[0]

    def head(self, z):
        """Probabilities from the head ``g`` applied to a representation."""
        z = np.asarray(z, dtype=np.float64).reshape((1,) + self.representation_shape)
        out, _ = self._run(z, self.representation_index, len(self.layers))
        return out[0]

    def jacobian_h(self, x):
        """Exact m x n Jacobian of the representation w.r.t. the flat input.

        One reverse sweep with the identity as a batch of m cotangents.
        """
        x = self._sample(x)
        z, tape = self._run(x, 0, self.representation_index)
        m = z[0].size
        seeds = np.eye(m).reshape((m,) + z.shape[1:])
        return self._pullback(tape, seeds).reshape(m, -1)

    def jacobian_h_forward(self, x):
        """Same Jacobian as :meth:`jacobian_h`, built column by column in forward mode."""
        x = self._sample(x)
        z, tape = self._run(x, 0, self.representation_index)
        n = self.input_size
        tangents = np.eye(n).reshape((n,) + self.input_shape)
        return self._pushforward(tape, tangents).reshape(n, -1).T

    def representation_gradient(self, x, index):
        """Gradient of representation coordinate ``index`` w.r.t. the flat input."""
        x = self._sample(x)
        z, tape = self._run(x, 0, self.representation_index)
        if not 0 <= index < z[0].size:
            raise ArgumentError(f"representation index {index} out of range")
        seed = np.zeros(z.shape)
        seed.reshape(-1)[index] = 1.0
        return self._pullback(tape, seed).reshape(-1)

    def input_gradient(self, x, class_index):
        """Gradient of ``forward(x)[class_index]`` w.r.t. the flat input."""
        self._check_class(class_index)
        out, tape = self._run(self._sample(x), 0, len(self.layers))
        seed = np.zeros_like(out)
        seed[0, class_index] = 1.0
        return self._pullback(tape, seed).reshape(-1)

    def head_gradient(self, z, class_index):
        """Gradient of ``head(z)[class_index]`` w.r.t. the flat representation."""
        self._check_class(class_index)
        z = np.asarray(z, dtype=np.float64).reshape((1,) + self.representation_shape)
        out, tape = self._run(z, self.representation_index, len(self.layers))
        seed = np.zeros_like(out)
        seed[0, class_index] = 1.0
        return self._pullback(tape, seed).reshape(-1)

    def head_directional_derivative(self, z, direction, class_index):
        """Forward-mode derivative of ``head(z)[class_index]`` along ``direction``."""
        self._check_class(class_index)
        shape = (1,) + self.representation_shape
        z = np.asarray(z, dtype=np.float64).reshape(shape)
        t = np.asarray(direction, dtype=np.float64).reshape(shape)
        _, tape = self._run(z, self.representation_index, len(self.layers))
        return float(self._pushforward(tape, t)[0, class_index])

    def _check_class(self, class_index):
        if not 0 <= class_index < self.class_count:
            raise ArgumentError(f"class index {class_index} out of range [0, {self.class_count})")

    # parameters -----------------------------------------------------------

    def parameter_count(self):
        return sum(p.size for layer in self.layers for p in layer.params().values())

    def copy(self):
        return copy.deepcopy(self)


def build_mlp(sizes, representation_index, seed=0, input_shape=None):
    """Dense/ReLU stack ``sizes[0] -> ... -> sizes[-1]`` with a softmax head.

    ``representation_index`` counts layers (each hidden block is dense+relu).
    """
    rng = np.random.default_rng(seed)
    layers = []
    if input_shape is not None and len(input_shape) > 1:
        layers.append(Flatten())
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(Dense.init(rng, a, b))
        if i < len(sizes) - 2:
            layers.append(ReLU())
    layers.append(Softmax())
    return LayeredModel(layers, input_shape or (sizes[0],), representation_index)


def build_cnn(input_shape, channels, kernel, dense_sizes, representation_index, seed=0, stride=1):
    """Conv/ReLU blocks followed by a dense stack and a softmax head."""
    rng = np.random.default_rng(seed)
    layers = []
    c = input_shape[0]
    for oc in channels:
        layers += [Conv2D.init(rng, c, oc, kernel, stride), ReLU()]
        c = oc
    layers.append(Flatten())
    shape = tuple(input_shape)
    for layer in layers:
        shape = layer.output_shape(shape)
    sizes = [shape[0]] + list(dense_sizes)
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(Dense.init(rng, a, b))
        if i < len(sizes) - 2:
            layers.append(ReLU())
    layers.append(Softmax())
    return LayeredModel(layers, input_shape, representation_index)


# ------------------------------------------------------------------- training


@dataclass
class TrainConfig:
    lr: float = 0.1
    epochs: int = 50
    batch: int = 32
    seed: int = 0


@dataclass
class TrainReport:
    train_accuracy: float
    test_accuracy: float | None
    epoch_losses: list


def accuracy(model, X, y):
    if len(y) == 0:
        raise DataError("empty dataset")
    return float(np.mean(model.predict(X) == np.asarray(y)))


def sgd_train(model, X, y, config=None, X_test=None, y_test=None):
    """Minibatch SGD on cross-entropy.  Returns ``(trained_copy, TrainReport)``.

    The input model is left untouched; shuffling is seeded by ``config.seed``.
    """
    config = config or TrainConfig()
    X = model._batch(X)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise DataError("empty dataset")
    if y.min() < 0 or y.max() >= model.class_count:
        raise DataError("labels outside [0, class_count)")
    model = model.copy()
    rng = np.random.default_rng(config.seed)
    body = len(model.layers) - 1  # everything but the softmax
    losses = []
    for _ in range(config.epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), config.batch):
            idx = order[start : start + config.batch]
            logits, tape = model._run(X[idx], 0, body)
            z = logits - logits.max(axis=1, keepdims=True)
            logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            total += -logp[np.arange(len(idx)), y[idx]].sum()
            g = np.exp(logp)
            g[np.arange(len(idx)), y[idx]] -= 1.0
            g /= len(idx)
            for layer, xin, cache in reversed(tape):
                grads = layer.param_grads(xin, cache, g)
                g = layer.vjp(xin, cache, g)
                for name, grad in grads.items():
                    param = getattr(layer, name)
                    param -= config.lr * grad
        losses.append(total / len(y))
    report = TrainReport(
        train_accuracy=accuracy(model, X, y),
        test_accuracy=None if X_test is None else accuracy(model, X_test, y_test),
        epoch_losses=losses,
    )
    return model, report


def zero_parameters(model, reserve_rate, seed=0):
    """Copy of ``model`` where each parameter entry survives with probability ``reserve_rate``."""
    if not 0.0 <= reserve_rate <= 1.0:
        raise ArgumentError("reserve_rate must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    out = model.copy()
    for layer in out.layers:
        for name, param in layer.params().items():
            keep = rng.random(param.shape) < reserve_rate
            setattr(layer, name, np.where(keep, param, 0.0))
    return out


# ------------------------------------------------------------------------ I/O


def _encode_array(a):
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _decode_array(obj):
    shape = tuple(obj["shape"])
    data = np.array(obj["data"], dtype=np.float64)
    if data.size != int(np.prod(shape)):
        raise ModelFormatError(f"array data length {data.size} does not match shape {shape}")
    return data.reshape(shape)


def model_to_dict(model):
    layers = []
    for layer in model.layers:
        spec = {"type": layer.kind}
        for name, param in layer.params().items():
            spec[name] = _encode_array(param)
        if isinstance(layer, Conv2D):
            spec["stride"] = layer.stride
        layers.append(spec)
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "input_shape": list(model.input_shape),
        "representation_index": model.representation_index,
        "class_count": model.class_count,
        "layers": layers,
        "metadata": model.metadata,
    }


def model_from_dict(doc):
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ModelFormatError("not an eigenba model file")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model file version {doc.get('version')!r}")
    layers = []
    try:
        for spec in doc["layers"]:
            kind = spec["type"]
            if kind == "dense":
                layers.append(Dense(_decode_array(spec["weights"]), _decode_array(spec["bias"])))
            elif kind == "conv2d":
                layers.append(
                    Conv2D(_decode_array(spec["kernels"]), _decode_array(spec["bias"]), int(spec["stride"]))
                )
            elif kind in LAYER_TYPES:
                layers.append(LAYER_TYPES[kind]())
            else:
                raise ModelFormatError(f"unknown layer type {kind!r}")
        model = LayeredModel(
            layers, tuple(doc["input_shape"]), int(doc["representation_index"]), dict(doc.get("metadata", {}))
        )
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"missing or invalid field: {exc}") from exc
    except (ArgumentError, ShapeError) as exc:
        raise ModelFormatError(str(exc)) from exc
    if model.class_count != doc.get("class_count"):
        raise ModelFormatError("class_count does not match the final layer")
    return model


def dumps_model(model):
    # repr-based float encoding in json round-trips float64 exactly
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True, allow_nan=False) + "\n"


def loads_model(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model file: {exc.msg}", offset=exc.pos) from exc
    return model_from_dict(doc)


def save_model(model, path):
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path):
    return loads_model(Path(path).read_text(encoding="utf-8"))
