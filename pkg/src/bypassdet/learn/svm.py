"""Linear SVM trained by primal stochastic sub-gradient descent (Pegasos)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

STANDARDIZED_MEAN_TOL = 0.1


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    lam: float
    epochs: int
    seed: int
    warnings: list[str] = field(default_factory=list)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        # zero margin is a tie and stays NORMAL
        return (self.decision_function(X) > 0).astype(np.int64)

    def to_dict(self) -> dict[str, Any]:
        return {"weights": self.weights.tolist(), "bias": self.bias, "lam": self.lam,
                "epochs": self.epochs, "seed": self.seed, "warnings": self.warnings}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SvmModel":
        return cls(np.array(d["weights"], dtype=float), float(d["bias"]), float(d["lam"]),
                   int(d["epochs"]), int(d["seed"]), list(d.get("warnings", [])))


def objective(model: SvmModel, X: np.ndarray, y: np.ndarray) -> float:
    """lam/2 * ||w||^2 + mean hinge loss (bias folded into w as in training)."""
    signs = np.where(np.asarray(y) == 1, 1.0, -1.0)
    hinge = np.maximum(0.0, 1.0 - signs * model.decision_function(X))
    w2 = float(model.weights @ model.weights) + model.bias**2
    return 0.5 * model.lam * w2 + float(hinge.mean())


def train_svm(X: np.ndarray, y: np.ndarray, lam: float = 1e-3, epochs: int = 50, seed: int = 42) -> SvmModel:
    """Step size 1/(lam * t); one sample per step, seeded shuffle per epoch.

    The bias is learned as the weight of a constant-1 input column.
    """
    X = np.asarray(X, dtype=float)
    signs = np.where(np.asarray(y) == 1, 1.0, -1.0)
    if lam <= 0:
        raise ValueError("lam must be positive")
    warnings = []
    if len(X) and np.any(np.abs(X.mean(axis=0)) > STANDARDIZED_MEAN_TOL):
        warnings.append("input does not look standardized (|column mean| > 0.1)")
    Xa = np.hstack([X, np.ones((len(X), 1))])
    w = np.zeros(Xa.shape[1])
    rng = np.random.default_rng(seed)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(len(Xa)):
            t += 1
            eta = 1.0 / (lam * t)
            margin = signs[i] * (Xa[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * signs[i] * Xa[i]
    return SvmModel(w[:-1].copy(), float(w[-1]), lam, epochs, seed, warnings)
