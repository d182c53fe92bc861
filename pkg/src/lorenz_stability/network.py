"""Fully connected stability classifier written directly in numpy.

Layout is ``6 -> 512 -> 512 -> 256 -> 2`` with activations
``tanh, relu, relu, sigmoid``. The two sigmoid outputs are scored for
(stable, unstable) independently and trained with binary cross-entropy
averaged over both units. Weights are stored ``(fan_in, fan_out)`` so a batch
``X`` of shape ``(N, fan_in)`` maps to ``X @ W + b``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, NumericalDivergence

log = logging.getLogger(__name__)

LAYER_DIMS = (6, 512, 512, 256, 2)
ACTIVATIONS = ("tanh", "relu", "relu", "sigmoid")
PROB_CLIP = 1e-7


@dataclass
class NetworkParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: tuple[str, ...] = ACTIVATIONS

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or len(self.weights) != len(self.activations):
            raise InvalidConfig("weights, biases and activations must have equal length")
        for a in self.activations:
            if a not in _ACT:
                raise InvalidConfig(f"unknown activation {a!r}")

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activations
        )

    def arrays(self) -> list[np.ndarray]:
        """Weights and biases interleaved: W1, b1, W2, b2, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "AdamState":
        arrs = params.arrays()
        return cls([np.zeros_like(a) for a in arrs], [np.zeros_like(a) for a in arrs], 0)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 20
    batch_size: int = 128
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidConfig(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: NetworkParams
    loss_history: list[float]
    adam: AdamState = field(repr=False)


def _sigmoid(a):
    # split by sign so exp never overflows
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _relu(a):
    return np.maximum(a, 0.0)


_ACT = {"tanh": np.tanh, "relu": _relu, "sigmoid": _sigmoid}


def _act_grad(name, a, h):
    """Derivative of activation ``name`` given pre-activation ``a`` and output ``h``."""
    if name == "tanh":
        return 1.0 - h * h
    if name == "relu":
        return (a > 0).astype(a.dtype)
    return h * (1.0 - h)


def init_params(seed: int = 0, dims=LAYER_DIMS, activations=ACTIVATIONS) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(weights, biases, tuple(activations))


def _forward_cache(params: NetworkParams, X: np.ndarray):
    pre, post = [], [X]
    h = X
    for W, b, act in zip(params.weights, params.biases, params.activations):
        a = h @ W + b
        h = _ACT[act](a)
        pre.append(a)
        post.append(h)
    return pre, post


def forward(params: NetworkParams, X) -> np.ndarray:
    """Output probabilities, shape ``(N, 2)`` (or ``(2,)`` for a single vector)."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    _, post = _forward_cache(params, np.atleast_2d(X))
    return post[-1][0] if single else post[-1]


def predict_from_probs(probs) -> np.ndarray:
    """Unstable (1) only when its unit strictly beats the stable unit."""
    p = np.atleast_2d(probs)
    return (p[:, 1] > p[:, 0]).astype(np.int8)


def predict(params: NetworkParams, X) -> np.ndarray:
    return predict_from_probs(forward(params, X))


def one_hot(labels) -> np.ndarray:
    """(1, 0) for stable, (0, 1) for unstable."""
    lab = np.asarray(labels).astype(np.int64)
    out = np.zeros((len(lab), 2))
    out[np.arange(len(lab)), lab] = 1.0
    return out


def bce_loss(probs, targets) -> float:
    """Binary cross-entropy averaged over output units and samples."""
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_CLIP, 1.0 - PROB_CLIP)
    y = np.asarray(targets, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def backward(params: NetworkParams, X, targets):
    """Loss and gradients of the mean batch loss, ordered like ``params.arrays()``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    n = len(X)
    if n == 0:
        raise InvalidConfig("backward needs a non-empty batch")
    pre, post = _forward_cache(params, X)
    p = post[-1]
    loss = bce_loss(p, Y)

    if params.activations[-1] == "sigmoid":
        # d(BCE)/d(logit) collapses to p - y; clipped outputs carry no gradient
        inside = (p > PROB_CLIP) & (p < 1.0 - PROB_CLIP)
        delta = (p - Y) * inside / Y.size
    else:
        pc = np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)
        inside = (p > PROB_CLIP) & (p < 1.0 - PROB_CLIP)
        dp = (-(Y / pc) + (1.0 - Y) / (1.0 - pc)) * inside / Y.size
        delta = dp * _act_grad(params.activations[-1], pre[-1], p)

    grads = [None] * (2 * len(params.weights))
    for layer in range(len(params.weights) - 1, -1, -1):
        grads[2 * layer] = post[layer].T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer > 0:
            dh = delta @ params.weights[layer].T
            delta = dh * _act_grad(params.activations[layer - 1], pre[layer - 1], post[layer])
    return loss, grads


def adam_step(params: NetworkParams, grads, state: AdamState, config: TrainConfig):
    """One in-place Adam update with bias correction; returns ``(params, state)``."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for theta, g, m, v in zip(params.arrays(), grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        theta -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.eps)
    return params, state


def train(X, y=None, config: TrainConfig = TrainConfig(), params: NetworkParams | None = None,
          progress=None) -> TrainResult:
    """Mini-batch Adam on one-hot stability targets.

    ``X`` may be a :class:`~lorenz_stability.dataset.Dataset`, in which case
    ``y`` is taken from it. Batches are reshuffled every epoch from
    ``config.seed``. ``progress`` (if given) is called as
    ``progress(epoch, mean_loss)``.
    """
    if y is None:
        X, y = X.features, X.labels
    X = np.asarray(X, dtype=np.float64)
    Y = one_hot(y)
    n = len(X)
    if n == 0:
        raise InvalidConfig("cannot train on an empty dataset")
    if params is None:
        params = init_params(config.seed)
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng([config.seed, 1])
    history = []
    bs = config.batch_size
    for epoch in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss, grads = backward(params, X[idx], Y[idx])
            if not math.isfinite(loss):
                raise NumericalDivergence(f"non-finite loss at epoch {epoch + 1}")
            adam_step(params, grads, state, config)
            total += loss * len(idx)
        mean_loss = total / n
        history.append(mean_loss)
        log.info("epoch %d/%d loss %.6f", epoch + 1, config.epochs, mean_loss)
        if progress is not None:
            progress(epoch + 1, mean_loss)
    return TrainResult(params, history, state)


# ---------------------------------------------------------------------------
# model files


def model_dict(params: NetworkParams, config: TrainConfig | None = None, **meta) -> dict:
    d = {
        "layer_dims": params.dims,
        "activations": list(params.activations),
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "train_config": None if config is None else config.as_dict(),
    }
    d.update(meta)
    return d


def save_model(path, params: NetworkParams, config: TrainConfig | None = None, **meta) -> Path:
    """Write a JSON model file. Python's float repr round-trips exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_dict(params, config, **meta)) + "\n", encoding="utf-8")
    return path


def load_model(path) -> tuple[NetworkParams, dict]:
    """Return ``(params, metadata)`` where metadata is everything but the arrays."""
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    params = NetworkParams(
        [np.asarray(w, dtype=np.float64) for w in d["weights"]],
        [np.asarray(b, dtype=np.float64) for b in d["biases"]],
        tuple(d["activations"]),
    )
    if params.dims != list(d["layer_dims"]):
        raise InvalidConfig(f"{path}: layer_dims {d['layer_dims']} disagree with weights")
    meta = {k: v for k, v in d.items() if k not in ("weights", "biases")}
    return params, meta
