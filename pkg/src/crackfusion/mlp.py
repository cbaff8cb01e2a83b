"""Small ReLU regressor from damage features to crack length, trained with Adam."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .features import FeatureVector

LAYER_SIZES = (4, 10, 10, 1)
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class MLPParams:
    """Weights ``W`` of shape (fan_in, fan_out) and biases ``b`` per layer."""

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        layers = []
        for W, b in self.layers:
            W = np.array(W, dtype=float)
            b = np.array(b, dtype=float).reshape(-1)
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValidationError("layer weight/bias shapes do not match")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValidationError("non-finite network parameter")
            layers.append((W, b))
        if not layers:
            raise ValidationError("network needs at least one layer")
        for (W1, _), (W2, _) in zip(layers[:-1], layers[1:]):
            if W1.shape[1] != W2.shape[0]:
                raise ValidationError("layer sizes do not chain")
        object.__setattr__(self, "layers", tuple(layers))

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.layers[0][0].shape[0],) + tuple(W.shape[1] for W, _ in self.layers)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.layers])

    def with_flat(self, theta: np.ndarray) -> "MLPParams":
        if theta.size != sum(W.size + b.size for W, b in self.layers):
            raise ValidationError("flat parameter vector has the wrong length")
        out, i = [], 0
        for W, b in self.layers:
            nw = W.size
            out.append((theta[i:i + nw].reshape(W.shape), theta[i + nw:i + nw + b.size]))
            i += nw + b.size
        return MLPParams(tuple(out))


def zero_params(sizes: Sequence[int] = LAYER_SIZES) -> MLPParams:
    return MLPParams(tuple((np.zeros((i, o)), np.zeros(o)) for i, o in zip(sizes[:-1], sizes[1:])))


def he_init(sizes: Sequence[int], rng: np.random.Generator) -> MLPParams:
    return MLPParams(tuple(
        (rng.normal(0.0, math.sqrt(2.0 / i), (i, o)), np.zeros(o))
        for i, o in zip(sizes[:-1], sizes[1:])
    ))


@dataclass(frozen=True, eq=False)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        std = np.array(self.std, dtype=float).reshape(-1)
        if mean.shape != std.shape:
            raise ValidationError("normalizer mean/std length mismatch")
        if not np.all(std > 0):
            raise ValidationError("degenerate normalizer: zero-variance feature")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def fit(cls, X: np.ndarray) -> "Normalizer":
        X = as_feature_matrix(X)
        std = X.std(axis=0)
        if np.any(std == 0):
            bad = [i for i in range(std.size) if std[i] == 0]
            raise ValidationError(f"degenerate normalizer: zero-variance feature column(s) {bad}")
        return cls(X.mean(axis=0), std)

    def transform(self, X) -> np.ndarray:
        X = as_feature_matrix(X)
        if X.shape[1] != self.mean.size:
            raise ValidationError(f"expected {self.mean.size} features, got {X.shape[1]}")
        return (X - self.mean) / self.std


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int | None = None  # None means full batch
    max_epochs: int = 5000
    seed: int = 0
    penalty_offset: float = 2.0
    penalty_slope: float = 10.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    layer_sizes: tuple[int, ...] = LAYER_SIZES

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.penalty_offset < 0 or self.penalty_slope < 0:
            raise ValidationError("penalty terms must be non-negative")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValidationError("invalid Adam constants")
        if len(self.layer_sizes) < 2 or self.layer_sizes[-1] != 1:
            raise ValidationError("network must end in a single output")


def as_feature_matrix(X) -> np.ndarray:
    if isinstance(X, FeatureVector):
        X = [X]
    if len(X) and isinstance(X[0], FeatureVector):
        X = [f.as_array() for f in X]
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("features must form a non-empty 2-D array")
    if not np.all(np.isfinite(X)):
        raise ValidationError("non-finite feature values")
    return X


def _forward_trace(params: MLPParams, X: np.ndarray):
    """Pre-activations and activations of every layer (input is activation 0)."""
    acts, pres = [X], []
    h = X
    last = len(params.layers) - 1
    for i, (W, b) in enumerate(params.layers):
        z = h @ W + b
        pres.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return pres, acts


def forward(params: MLPParams, x):
    """Network output; a single feature row gives a float, a matrix gives a vector."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.layer_sizes[0]:
        raise ValidationError(f"expected {params.layer_sizes[0]} inputs, got {X.shape[1]}")
    y = _forward_trace(params, X)[1][-1][:, 0]
    return float(y[0]) if single else y


def penalty_weights(targets: np.ndarray, offset: float = 2.0, slope: float = 10.0) -> np.ndarray:
    return offset + slope * np.asarray(targets, dtype=float)


def _batch(batch):
    X, y = batch
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] == 0 or X.shape[0] != y.size:
        raise ValidationError("batch features and targets must be non-empty and equal length")
    return X, y


def penalized_cost(params: MLPParams, batch, offset: float = 2.0, slope: float = 10.0) -> float:
    """Mean of ``(y - yhat)^2 (offset + slope y)`` over the batch."""
    X, y = _batch(batch)
    d = y - forward(params, X)
    return float(np.mean(d * d * penalty_weights(y, offset, slope)))


def _cost_and_grad(params: MLPParams, X, y, offset, slope):
    pres, acts = _forward_trace(params, X)
    w = penalty_weights(y, offset, slope)
    d = acts[-1][:, 0] - y
    cost = float(np.mean(d * d * w))
    delta = (2.0 / y.size * d * w)[:, None]
    grads = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i:
            delta = (delta @ W.T) * (pres[i - 1] > 0)
    return cost, MLPParams(tuple(grads))


def gradient(params: MLPParams, batch, offset: float = 2.0, slope: float = 10.0) -> MLPParams:
    """Backpropagated gradient of :func:`penalized_cost`, shaped like ``params``."""
    X, y = _batch(batch)
    return _cost_and_grad(params, X, y, offset, slope)[1]


def train(features, targets, config: TrainConfig = TrainConfig()):
    """Fit a normalizer and network; returns ``(params, normalizer, loss_history)``.

    The history holds the full-data cost at the start of each epoch followed by
    the final cost. The lowest-cost parameters seen are returned.
    """
    X = as_feature_matrix(features)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if X.shape[0] < 2 or y.size != X.shape[0]:
        raise ValidationError("training needs >= 2 samples with one target each")
    if not np.all(np.isfinite(y)):
        raise ValidationError("non-finite training targets")
    if X.shape[1] != config.layer_sizes[0]:
        raise ValidationError(f"expected {config.layer_sizes[0]} features, got {X.shape[1]}")
    norm = Normalizer.fit(X)
    Xn = norm.transform(X)
    rng = np.random.default_rng(config.seed)
    params = he_init(config.layer_sizes, rng)
    theta = params.flat()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    n = y.size
    bs = n if config.batch_size is None else min(config.batch_size, n)
    off, sl = config.penalty_offset, config.penalty_slope
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.eps

    history: list[float] = []
    best_cost, best_theta = math.inf, theta
    t = 0
    for _ in range(config.max_epochs):
        cost, g = _cost_and_grad(params.with_flat(theta), Xn, y, off, sl)
        history.append(cost)
        if cost < best_cost:
            best_cost, best_theta = cost, theta
        if bs == n:
            steps = [g.flat()]
        else:
            order = rng.permutation(n)
            steps = (
                _cost_and_grad(params.with_flat(theta), Xn[idx], y[idx], off, sl)[1].flat()
                for idx in (order[i:i + bs] for i in range(0, n, bs))
            )
        for gf in steps:  # generator sees the updated theta for each minibatch
            t += 1
            m = b1 * m + (1 - b1) * gf
            v = b2 * v + (1 - b2) * gf * gf
            theta = theta - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    final = penalized_cost(params.with_flat(theta), (Xn, y), off, sl)
    history.append(final)
    if final < best_cost:
        best_theta = theta
    return params.with_flat(best_theta), norm, history


def predict(params: MLPParams, normalizer: Normalizer, features) -> np.ndarray:
    """Crack length (mm) for each feature row; cycles are never an input."""
    return forward(params, normalizer.transform(features))


def save_model(path, params: MLPParams, normalizer: Normalizer,
               config: TrainConfig | None = None) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "layer_sizes": list(params.layer_sizes),
        "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in params.layers],
        "normalizer": {"mean": normalizer.mean.tolist(), "std": normalizer.std.tolist()},
        "config": None if config is None else asdict(config),
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(params, normalizer, config)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"model file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"model file is not valid JSON: {exc}") from None
    try:
        if doc["format_version"] != MODEL_FORMAT_VERSION:
            raise ValidationError(f"unsupported model format {doc['format_version']}")
        params = MLPParams(tuple((np.array(L["W"]), np.array(L["b"])) for L in doc["layers"]))
        if list(params.layer_sizes) != list(doc["layer_sizes"]):
            raise ValidationError("model layer sizes disagree with weights")
        norm = Normalizer(np.array(doc["normalizer"]["mean"]), np.array(doc["normalizer"]["std"]))
        cfg = None if doc.get("config") is None else TrainConfig(**doc["config"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed model file: {exc}") from None
    return params, norm, cfg
