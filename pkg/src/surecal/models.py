"""Class-weighted logistic regression and a 3x60 ReLU network, trained with Adam.

Both models are the same object: a stack of dense layers ending in a single
sigmoid unit.  Logistic regression is the stack with no hidden layer.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

PROB_EPS = 1e-7
FFNN_HIDDEN = (60, 60, 60)
MODEL_KINDS = ("logreg", "ffnn")


class TrainingDivergedError(RuntimeError):
    pass


def _clamp(p):
    return np.clip(p, PROB_EPS, 1 - PROB_EPS)


def class_weight(labels, mode: str = "paper") -> float:
    """Weight on the positive-class log term.

    ``paper`` uses the positive rate n+/N as written in the loss definition;
    ``complement`` uses 1 - n+/N, which up-weights the minority class.
    """
    y = np.asarray(labels, dtype=float)
    rate = float(y.mean())
    if mode == "paper":
        return rate
    if mode == "complement":
        return 1.0 - rate
    raise ValueError(f"unknown alpha mode {mode!r}")


def balanced_bce_loss(labels, probs, alpha: float) -> float:
    y = np.asarray(labels, dtype=float)
    p = np.asarray(probs, dtype=float)
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {p.shape}")
    p = _clamp(p)
    return float(-np.mean(alpha * y * np.log(p) + (1 - alpha) * (1 - y) * np.log(1 - p)))


@dataclass
class Network:
    """Dense layers; ``weights[k]`` has shape (fan_in, fan_out)."""

    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if k and w.shape[0] != self.weights[k - 1].shape[1]:
                raise ValueError(f"layer {k}: fan-in {w.shape[0]} does not match previous layer")
        if self.weights[-1].shape[1] != 1:
            raise ValueError("output layer must have a single unit")

    @property
    def kind(self) -> str:
        return "logreg" if len(self.weights) == 1 else "ffnn"

    @property
    def dims(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def params(self) -> list:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self) -> "Network":
        return Network([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def logreg_params(weights, bias) -> Network:
    w = np.asarray(weights, dtype=float).reshape(-1, 1)
    return Network([w], [np.array([float(bias)])])


def he_init(dims, seed: int = 0, rng=None) -> Network:
    """Gaussian weights with variance 2/fan_in, zero biases."""
    rng = np.random.default_rng(seed) if rng is None else rng
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(weights, biases)


def _forward(net: Network, x):
    acts = [x]
    h = x
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    z = (h @ net.weights[-1] + net.biases[-1])[:, 0]
    return acts, z


def forward(net: Network, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != net.dims[0]:
        raise ValueError(f"expected {net.dims[0]} input columns, got {x.shape[1]}")
    return expit(_forward(net, x)[1])


def logreg_forward(net: Network, row) -> float:
    return float(forward(net, row)[0])


def ffnn_forward(net: Network, row) -> float:
    return float(forward(net, row)[0])


def backprop_gradients(net: Network, x, y, alpha: float):
    """Loss and exact gradients of the mean weighted BCE over a batch.

    Returns ``(loss, grads)`` with ``grads`` laid out like ``net.params()``.
    Instances whose probability is clamped contribute no gradient, matching
    the clamped loss.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    acts, z = _forward(net, x)
    p = expit(z)
    pc = _clamp(p)
    loss = float(-np.mean(alpha * y * np.log(pc) + (1 - alpha) * (1 - y) * np.log(1 - pc)))
    dz = ((1 - alpha) * (1 - y) * p - alpha * y * (1 - p)) * (pc == p) / x.shape[0]
    delta = dz[:, None]
    grads = []
    for k in range(len(net.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(acts[k].T @ delta)
        if k:
            delta = (delta @ net.weights[k].T) * (acts[k] > 0)
    return loss, grads[::-1]


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, net: Network) -> "AdamState":
        return cls([np.zeros_like(a) for a in net.params()], [np.zeros_like(a) for a in net.params()])


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    alpha_mode: str = "paper"

    def __post_init__(self):
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, patience and max_epochs must be >= 1")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning rate and epsilon must be positive")
        if self.alpha_mode not in ("paper", "complement"):
            raise ValueError(f"unknown alpha mode {self.alpha_mode!r}")


def adam_step(net: Network, grads, state: AdamState, config: TrainConfig = TrainConfig()):
    """One bias-corrected Adam update, in place; returns ``(net, state)``."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1 - b1**state.t
    c2 = 1 - b2**state.t
    for param, g, m, v in zip(net.params(), grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        param -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)
    return net, state


def tune_threshold(probs, labels) -> float:
    """Threshold maximizing training F1 under ``p > tau``.

    Candidates are every distinct probability plus 0 and 1; the smallest
    maximizing candidate wins.
    """
    p = np.asarray(probs, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    n_pos = int(np.sum(y == 1))
    if n_pos == 0 or n_pos == y.size:
        raise ValueError("threshold tuning needs both classes")
    order = np.argsort(p, kind="mergesort")
    p_sorted = p[order]
    pos_at_or_below = np.r_[0, np.cumsum(y[order] == 1)]
    candidates = np.unique(np.r_[0.0, p_sorted, 1.0])
    k = np.searchsorted(p_sorted, candidates, side="right")
    tp = n_pos - pos_at_or_below[k]
    predicted = p.size - k
    f1 = 2 * tp / (predicted + n_pos)
    return float(candidates[np.argmax(f1)])


@dataclass
class TrainedModel:
    network: Network
    tau: float
    alpha: float
    config: TrainConfig
    history: list = field(default_factory=list)  # (epoch, train_loss, val_loss)
    best_epoch: int = 0

    @property
    def kind(self) -> str:
        return self.network.kind

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dims": list(self.network.dims),
            "weights": [w.ravel().tolist() for w in self.network.weights],
            "biases": [b.tolist() for b in self.network.biases],
            "tau": self.tau,
            "alpha": self.alpha,
            "best_epoch": self.best_epoch,
            "seed": self.config.seed,
            "config": asdict(self.config),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        dims = d["dims"]
        weights = [np.array(w, dtype=float).reshape(a, b) for w, a, b in zip(d["weights"], dims[:-1], dims[1:])]
        biases = [np.array(b, dtype=float) for b in d["biases"]]
        return cls(Network(weights, biases), float(d["tau"]), float(d["alpha"]),
                   TrainConfig(**d["config"]), [], int(d.get("best_epoch", 0)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss"])
            for epoch, tr, va in self.history:
                w.writerow([epoch, repr(tr), repr(va)])


def architecture(kind: str, n_inputs: int) -> tuple:
    if kind == "logreg":
        return (n_inputs, 1)
    if kind == "ffnn":
        return (n_inputs,) + FFNN_HIDDEN + (1,)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def train(kind: str, x_train, y_train, x_val, y_val, config: TrainConfig = TrainConfig()) -> TrainedModel:
    """Mini-batch Adam on the weighted BCE with validation early stopping.

    Keeps the parameters of the epoch with the lowest validation loss and
    stops once ``patience`` epochs pass without improving on it.  The
    decision threshold is then tuned on the training predictions.
    """
    x_train = np.asarray(x_train, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    x_val = np.asarray(x_val, dtype=float)
    y_val = np.asarray(y_val, dtype=float)
    if x_train.shape[0] == 0 or x_val.shape[0] == 0:
        raise ValueError("training and validation sets must be nonempty")
    alpha = class_weight(y_train, config.alpha_mode)
    rng = np.random.default_rng(config.seed)
    net = he_init(architecture(kind, x_train.shape[1]), rng=rng)
    state = AdamState.zeros_like(net)
    n = x_train.shape[0]

    history = []
    best_val, best_net, best_epoch = np.inf, net.copy(), 0
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            _, grads = backprop_gradients(net, x_train[idx], y_train[idx], alpha)
            adam_step(net, grads, state, config)
        train_loss = balanced_bce_loss(y_train, forward(net, x_train), alpha)
        val_loss = balanced_bce_loss(y_val, forward(net, x_val), alpha)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
        history.append((epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val, best_net, best_epoch = val_loss, net.copy(), epoch
        elif epoch - best_epoch >= config.patience:
            break

    tau = tune_threshold(forward(best_net, x_train), y_train)
    return TrainedModel(best_net, tau, alpha, config, history, best_epoch)


def predict(model: TrainedModel, x, classes: bool = False):
    """Probabilities, or ``(probabilities, labels)`` with labels ``p > tau``."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        p = np.empty(0)
    else:
        p = forward(model.network, x)
    if classes:
        return p, (p > model.tau).astype(int)
    return p
