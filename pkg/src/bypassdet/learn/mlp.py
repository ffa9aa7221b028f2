"""Sigmoid MLP [n, 5, 5, 1] trained by full-batch momentum backprop on MSE."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

HIDDEN = (5, 5)
LEARNING_RATE = 0.6
MOMENTUM = 0.3


class MlpTrainingError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    learning_rate: float = LEARNING_RATE
    momentum: float = MOMENTUM
    epochs: int = 0
    seed: int = 42
    loss_history: list[float] = field(default_factory=list)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def forward(self, X: np.ndarray) -> np.ndarray:
        return _forward(self.weights, self.biases, np.asarray(X, dtype=float))[-1][:, 0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.forward(X) > 0.5).astype(np.int64)

    def to_dict(self) -> dict[str, Any]:
        return {
            "layer_sizes": self.layer_sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "epochs": self.epochs,
            "seed": self.seed,
            "loss_history": self.loss_history,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MlpModel":
        return cls(
            [np.array(w, dtype=float).reshape(a, b) for w, a, b in
             zip(d["weights"], d["layer_sizes"][:-1], d["layer_sizes"][1:])],
            [np.array(b, dtype=float) for b in d["biases"]],
            float(d["learning_rate"]), float(d["momentum"]), int(d["epochs"]), int(d["seed"]),
            list(d.get("loss_history", [])),
        )


def init_mlp(n_features: int, seed: int = 42) -> MlpModel:
    rng = np.random.default_rng(seed)
    sizes = [n_features, *HIDDEN, 1]
    weights = [rng.uniform(-0.5, 0.5, (a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [rng.uniform(-0.5, 0.5, b) for b in sizes[1:]]
    return MlpModel(weights, biases, seed=seed)


def _forward(weights, biases, X):
    acts = [X]
    for w, b in zip(weights, biases):
        acts.append(sigmoid(acts[-1] @ w + b))
    return acts


def loss_and_gradients(weights, biases, X, y):
    """Mean squared error and its gradients w.r.t. every weight and bias."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1, 1)
    acts = _forward(weights, biases, X)
    err = acts[-1] - y
    loss = float(np.mean(err**2))
    delta = 2.0 * err / len(X) * acts[-1] * (1.0 - acts[-1])
    gw, gb = [None] * len(weights), [None] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        gw[layer] = acts[layer].T @ delta
        gb[layer] = delta.sum(axis=0)
        if layer:
            a = acts[layer]
            delta = (delta @ weights[layer].T) * a * (1.0 - a)
    return loss, gw, gb


def train_mlp(X: np.ndarray, y: np.ndarray, epochs: int = 5000, seed: int = 42,
              learning_rate: float = LEARNING_RATE, momentum: float = MOMENTUM) -> MlpModel:
    X = np.asarray(X, dtype=float)
    model = init_mlp(X.shape[1], seed)
    model.learning_rate, model.momentum, model.epochs = learning_rate, momentum, epochs
    vw = [np.zeros_like(w) for w in model.weights]
    vb = [np.zeros_like(b) for b in model.biases]
    for epoch in range(epochs):
        loss, gw, gb = loss_and_gradients(model.weights, model.biases, X, y)
        if not np.isfinite(loss):
            raise MlpTrainingError(epoch, loss)
        model.loss_history.append(loss)
        for i in range(len(model.weights)):
            vw[i] = momentum * vw[i] - learning_rate * gw[i]
            vb[i] = momentum * vb[i] - learning_rate * gb[i]
            model.weights[i] += vw[i]
            model.biases[i] += vb[i]
    return model
