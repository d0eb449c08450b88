"""From-scratch MLP binary classifier: training, prediction, metrics, persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .data import Dataset
from .errors import DegenerateDataError, ModelFileError, ModelVersionError

MODEL_FORMAT_VERSION = 1
DEFAULT_HIDDEN = (20, 50, 20)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 0.01
    seed: int = 0
    l2_penalty: float = 0.0
    momentum: float = 0.9
    hidden: tuple[int, ...] = DEFAULT_HIDDEN

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be non-negative")


@dataclass
class MlpModel:
    """ReLU MLP with a sigmoid output unit; weights[k] has shape (d_in, d_out)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    train_trace: list[float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must be non-empty and aligned")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {k} has inconsistent weight/bias shapes")
            if k > 0 and w.shape[0] != self.weights[k - 1].shape[1]:
                raise ValueError(f"layer {k} input width does not chain with layer {k - 1}")
        if self.weights[-1].shape[1] != 1:
            raise ValueError("output layer must have a single unit")

    @property
    def p(self) -> int:
        return self.weights[0].shape[0]

    @property
    def widths(self) -> list[int]:
        return [self.p] + [w.shape[1] for w in self.weights]


def _forward(model: MlpModel, X: np.ndarray):
    """Forward pass; returns (activations, pre-activations, probabilities)."""
    hs, pres = [X], []
    h = X
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pres.append(z)
        h = expit(z) if k == last else np.maximum(z, 0.0)
        hs.append(h)
    return hs, pres, h[:, 0]


def _check_input(model: MlpModel, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != model.p:
        raise ValueError(f"expected inputs of dimension {model.p}, got shape {x.shape}")
    if not np.isfinite(X).all():
        raise ValueError("inputs must be finite")
    return X, single


def predict_proba(model: MlpModel, x: np.ndarray):
    """Favorable-class probability for one p-vector or a batch of rows."""
    X, single = _check_input(model, x)
    proba = _forward(model, X)[2]
    return float(proba[0]) if single else proba


def predict_label(model: MlpModel, x: np.ndarray):
    proba = predict_proba(model, x)
    if np.isscalar(proba):
        return int(proba >= 0.5)
    return (proba >= 0.5).astype(int)


def input_gradient(model: MlpModel, x: np.ndarray):
    """Gradient of predict_proba with respect to the input."""
    X, single = _check_input(model, x)
    hs, pres, proba = _forward(model, X)
    delta = (proba * (1.0 - proba))[:, None]
    for k in range(len(model.weights) - 1, 0, -1):
        delta = (delta @ model.weights[k].T) * (pres[k - 1] > 0)
    grad = delta @ model.weights[0].T
    return grad[0] if single else grad


def bce_loss(model: MlpModel, X: np.ndarray, y: np.ndarray, l2_penalty: float = 0.0) -> float:
    proba = np.clip(_forward(model, X)[2], 1e-12, 1.0 - 1e-12)
    loss = -np.mean(y * np.log(proba) + (1.0 - y) * np.log(1.0 - proba))
    if l2_penalty > 0:
        loss += 0.5 * l2_penalty * sum(float(np.sum(w**2)) for w in model.weights)
    return float(loss)


def bce_gradients(model: MlpModel, X: np.ndarray, y: np.ndarray, l2_penalty: float = 0.0):
    """Backprop gradients of the mean binary cross-entropy over the batch."""
    hs, pres, proba = _forward(model, X)
    delta = (proba - y)[:, None] / X.shape[0]
    grads_w, grads_b = [], []
    for k in range(len(model.weights) - 1, -1, -1):
        grads_w.append(hs[k].T @ delta + l2_penalty * model.weights[k])
        grads_b.append(delta.sum(axis=0))
        if k > 0:
            delta = (delta @ model.weights[k].T) * (pres[k - 1] > 0)
    return grads_w[::-1], grads_b[::-1]


def _init_layers(p: int, hidden: tuple[int, ...], rng: np.random.Generator):
    widths = [p, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def train_mlp(train: Dataset, cfg: TrainConfig = TrainConfig()) -> MlpModel:
    """Seeded mini-batch SGD with momentum on the binary cross-entropy.

    The learning rate is halved (and the epoch rolled back) whenever the
    full-data loss increases, so the recorded per-epoch loss trace is
    non-increasing. Deterministic for a fixed (data, config) pair.
    """
    X, y = train.features, train.labels.astype(float)
    if len(np.unique(train.labels)) < 2:
        raise DegenerateDataError("training data must contain both classes")
    rng = np.random.default_rng(cfg.seed)
    weights, biases = _init_layers(train.p, cfg.hidden, rng)
    model = MlpModel(weights, biases)
    velocity = [np.zeros_like(w) for w in weights] + [np.zeros_like(b) for b in biases]

    lr = cfg.learning_rate
    prev_loss = bce_loss(model, X, y, cfg.l2_penalty)
    trace = [prev_loss]
    for _ in range(cfg.epochs):
        snapshot = ([w.copy() for w in model.weights], [b.copy() for b in model.biases])
        idx = rng.permutation(train.n)
        for start in range(0, train.n, cfg.batch_size):
            batch = idx[start:start + cfg.batch_size]
            gw, gb = bce_gradients(model, X[batch], y[batch], cfg.l2_penalty)
            for k in range(len(model.weights)):
                velocity[k] = cfg.momentum * velocity[k] - lr * gw[k]
                model.weights[k] += velocity[k]
                vb = len(model.weights) + k
                velocity[vb] = cfg.momentum * velocity[vb] - lr * gb[k]
                model.biases[k] += velocity[vb]
        loss = bce_loss(model, X, y, cfg.l2_penalty)
        if loss > prev_loss:
            # roll the epoch back; a zeroed momentum buffer keeps the retry
            # from replaying the same uphill move at the halved rate
            model.weights, model.biases = snapshot
            velocity = [np.zeros_like(v) for v in velocity]
            lr *= 0.5
        else:
            prev_loss = loss
        trace.append(prev_loss)
    model.train_trace = trace
    return model


def accuracy(model: MlpModel, data: Dataset) -> float:
    return float(np.mean(predict_label(model, data.features) == data.labels))


def auc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative; ties count 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDataError("auc requires both classes")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def save_model(model: MlpModel, path) -> None:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "widths": model.widths,
        "layers": [
            {"weights": w.tolist(), "bias": b.tolist()}
            for w, b in zip(model.weights, model.biases)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path) -> MlpModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFileError(f"malformed model file {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ModelFileError(f"model file {path} lacks a format_version tag")
    if payload["format_version"] != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"unsupported model format version {payload['format_version']!r}"
        )
    try:
        layers = payload["layers"]
        model = MlpModel(
            weights=[np.asarray(layer["weights"], dtype=float) for layer in layers],
            biases=[np.asarray(layer["bias"], dtype=float) for layer in layers],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"model file {path} is inconsistent: {exc}") from exc
    if model.widths != payload.get("widths"):
        raise ModelFileError(f"model file {path} widths do not match layer shapes")
    return model
