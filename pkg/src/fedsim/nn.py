"""Dense feed-forward classifier trained with softmax cross-entropy and RMSprop.

Everything here is a pure function of its inputs: models, gradients and
optimizer states are treated as immutable values and every update returns a
fresh object. Randomness only enters through explicit integer seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ArchitectureError,
    EmptyClientError,
    InvalidLabelError,
    NumericalError,
    ShapeError,
)

RELU = "relu"
SOFTMAX = "softmax"

PROB_CLAMP = 1e-12

MODEL_FORMAT = "fedsim-model"
MODEL_FORMAT_VERSION = 1

# (dW, db) per layer, in layer order
Gradients = list[tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Model:
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        _check_architecture(self.layers)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.layers[0].fan_in] + [layer.fan_out for layer in self.layers]

    @property
    def arch_id(self) -> tuple:
        """Hashable fingerprint: layer sizes plus activations."""
        return tuple(self.layer_sizes), tuple(layer.activation for layer in self.layers)

    @property
    def n_classes(self) -> int:
        return self.layers[-1].fan_out

    @property
    def n_params(self) -> int:
        return sum(layer.weights.size + layer.bias.size for layer in self.layers)

    def params(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(layer.weights, layer.bias) for layer in self.layers]

    def with_params(self, params: Sequence[tuple[np.ndarray, np.ndarray]]) -> "Model":
        if len(params) != len(self.layers):
            raise ShapeError(f"expected {len(self.layers)} layers, got {len(params)}")
        layers = []
        for layer, (w, b) in zip(self.layers, params):
            if w.shape != layer.weights.shape or b.shape != layer.bias.shape:
                raise ShapeError("parameter shapes do not match the model")
            layers.append(Layer(w, b, layer.activation))
        return Model(tuple(layers))


def _check_architecture(layers: Sequence[Layer]) -> None:
    if not layers:
        raise ArchitectureError("model needs at least one layer")
    for i, layer in enumerate(layers):
        if layer.weights.ndim != 2 or layer.bias.shape != (layer.weights.shape[0],):
            raise ArchitectureError(f"layer {i}: weights/bias shapes inconsistent")
        expected = SOFTMAX if i == len(layers) - 1 else RELU
        if layer.activation != expected:
            raise ArchitectureError(f"layer {i}: activation must be {expected}")
        if i and layers[i - 1].fan_out != layer.fan_in:
            raise ArchitectureError(
                f"layer {i - 1} outputs {layers[i - 1].fan_out} but layer {i} expects {layer.fan_in}"
            )


def init_model(layer_sizes: Sequence[int], seed: int) -> Model:
    """Glorot-uniform weights, zero biases; identical seeds give identical models."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ArchitectureError(f"invalid layer sizes {list(layer_sizes)!r}")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        act = SOFTMAX if i == len(sizes) - 2 else RELU
        layers.append(Layer(w, np.zeros(fan_out), act))
    return Model(tuple(layers))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _as_features(model: Model, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.layers[0].fan_in:
        raise ShapeError(
            f"input has shape {x.shape}, model expects {model.layers[0].fan_in} features"
        )
    return x


def _forward_cached(model: Model, x: np.ndarray):
    """Return (layer inputs, pre-activations, output probabilities)."""
    inputs, pre = [], []
    a = x
    for layer in model.layers:
        inputs.append(a)
        z = a @ layer.weights.T + layer.bias
        pre.append(z)
        a = softmax(z) if layer.activation == SOFTMAX else np.maximum(z, 0.0)
    return inputs, pre, a


def forward(model: Model, x) -> np.ndarray:
    """Class probabilities, one row per input row."""
    return _forward_cached(model, _as_features(model, x))[2]


def predict(model: Model, x) -> np.ndarray:
    # argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(forward(model, x), axis=1)


def _check_labels(y, n_classes: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeError("labels must be a vector")
    if not np.issubdtype(y.dtype, np.integer) and np.any(y != np.round(y)):
        raise InvalidLabelError("labels must be integers")
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise InvalidLabelError(f"labels must lie in [0, {n_classes})")
    return y


def loss(probs, y) -> float:
    """Mean categorical cross-entropy, with probabilities clamped at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ShapeError("probabilities must be a matrix")
    y = _check_labels(y, probs.shape[1])
    if y.shape[0] != probs.shape[0]:
        raise ShapeError(f"{probs.shape[0]} probability rows but {y.shape[0]} labels")
    p_true = np.maximum(probs[np.arange(len(y)), y], PROB_CLAMP)
    return float(-np.mean(np.log(p_true)))


@dataclass(frozen=True)
class Batch:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ShapeError("batch needs at least one feature row")
        if y.shape != (x.shape[0],):
            raise ShapeError(f"{x.shape[0]} rows but labels have shape {y.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


def backward(model: Model, batch: Batch) -> Gradients:
    """Exact gradients of the mean cross-entropy of ``batch`` w.r.t. every parameter."""
    x = _as_features(model, batch.x)
    y = _check_labels(batch.y, model.n_classes)
    inputs, pre, probs = _forward_cached(model, x)

    # softmax + cross-entropy: dL/dz = (p - onehot) / b
    delta = probs.copy()
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)

    grads: Gradients = [None] * len(model.layers)  # type: ignore[list-item]
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        grads[i] = (delta.T @ inputs[i], delta.sum(axis=0))
        if i:
            delta = (delta @ layer.weights) * (pre[i - 1] > 0)
    return grads


@dataclass(frozen=True)
class OptimizerState:
    v: Gradients
    lr: float = 0.01
    rho: float = 0.9
    eps: float = 1e-7

    @classmethod
    def zeros_like(cls, model: Model, lr: float = 0.01, rho: float = 0.9, eps: float = 1e-7):
        v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.params()]
        return cls(v, lr=lr, rho=rho, eps=eps)


def rmsprop_step(model: Model, grads: Gradients, state: OptimizerState):
    """One RMSprop update. Returns ``(new_model, new_state)``; inputs are untouched."""
    if len(grads) != len(model.layers) or len(state.v) != len(model.layers):
        raise ShapeError("gradients/optimizer state do not mirror the model")
    lr, rho, eps = state.lr, state.rho, state.eps
    new_params, new_v = [], []
    for (w, b), (gw, gb), (vw, vb) in zip(model.params(), grads, state.v):
        if gw.shape != w.shape or gb.shape != b.shape or vw.shape != w.shape or vb.shape != b.shape:
            raise ShapeError("gradient shape mismatch")
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericalError("non-finite gradient; step aborted")
        vw2 = rho * vw + (1.0 - rho) * gw * gw
        vb2 = rho * vb + (1.0 - rho) * gb * gb
        new_params.append((w - lr * gw / (np.sqrt(vw2) + eps), b - lr * gb / (np.sqrt(vb2) + eps)))
        new_v.append((vw2, vb2))
    return model.with_params(new_params), OptimizerState(new_v, lr=lr, rho=rho, eps=eps)


def train_local(
    model: Model,
    data,
    epochs: int,
    batch_size: int = 32,
    seed: int = 0,
    lr: float = 0.01,
    rho: float = 0.9,
    eps: float = 1e-7,
) -> Model:
    """Run ``epochs`` shuffled mini-batch RMSprop passes over ``data``.

    ``data`` is anything with ``x`` and ``y`` attributes (a Dataset or a
    ClientDataset's ``data``). The optimizer state starts from zero on every
    call; only the model carries over between calls.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    x = np.asarray(getattr(data, "data", data).x, dtype=np.float64)
    y = np.asarray(getattr(data, "data", data).y)
    if x.shape[0] == 0:
        raise EmptyClientError("cannot train on an empty dataset")

    rng = np.random.default_rng(seed)
    state = OptimizerState.zeros_like(model, lr=lr, rho=rho, eps=eps)
    m = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(m)
        for start in range(0, m, batch_size):
            idx = order[start:start + batch_size]
            grads = backward(model, Batch(x[idx], y[idx]))
            model, state = rmsprop_step(model, grads, state)
    return model


def flatten(model: Model) -> np.ndarray:
    """All parameters in canonical order: per layer, row-major weights then bias."""
    return np.concatenate([p.ravel() for w, b in model.params() for p in (w, b)])


def unflatten(vector, like: Model) -> Model:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (like.n_params,):
        raise ShapeError(f"vector of length {vector.size} does not fit {like.n_params} parameters")
    params, pos = [], 0
    for w, b in like.params():
        nw = w.size
        params.append((vector[pos:pos + nw].reshape(w.shape).copy(), vector[pos + nw:pos + nw + b.size].copy()))
        pos += nw + b.size
    return like.with_params(params)


def model_to_json(model: Model) -> str:
    """Versioned, byte-stable JSON record of a model."""
    record = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "layer_sizes": model.layer_sizes,
        "activations": [layer.activation for layer in model.layers],
        "layers": [
            {"weights": layer.weights.ravel().tolist(), "bias": layer.bias.tolist()}
            for layer in model.layers
        ],
    }
    return json.dumps(record, separators=(",", ":"))


def model_from_json(text: str) -> Model:
    record = json.loads(text)
    if record.get("format") != MODEL_FORMAT or record.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError("not a fedsim model record of a supported version")
    sizes = record["layer_sizes"]
    layers = []
    for i, (entry, act) in enumerate(zip(record["layers"], record["activations"])):
        w = np.asarray(entry["weights"], dtype=np.float64).reshape(sizes[i + 1], sizes[i])
        layers.append(Layer(w, np.asarray(entry["bias"], dtype=np.float64), act))
    return Model(tuple(layers))


def save_model(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model))


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return model_from_json(fh.read())
