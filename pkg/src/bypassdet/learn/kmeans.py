"""Lloyd's k-means with seeded k-means++ initialization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float
    n_iter: int = 0
    inertia_history: list[float] = field(default_factory=list)
    # iterations whose centroid update had to re-seed an empty cluster
    repairs: list[int] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _assign(np.asarray(X, dtype=float), self.centroids)[0]

    def to_dict(self) -> dict[str, Any]:
        return {"centroids": self.centroids.tolist(), "inertia": self.inertia, "n_iter": self.n_iter}


def _assign(X: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    # argmin keeps the lowest centroid index on ties
    a = np.argmin(d2, axis=1)
    return a, d2[np.arange(len(X)), a]


def kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [X[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(((X[:, None, :] - np.array(centers)[None]) ** 2).sum(axis=2), axis=1)
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(X[idx])
    return np.array(centers, dtype=float)


def kmeans(X: np.ndarray, k: int, seed: int = 42, max_iter: int = 300) -> KMeansResult:
    """Iterate to an assignment fixpoint or ``max_iter`` assignment steps.

    An empty cluster is re-seeded at the point farthest from its former
    centroid; inertia is only guaranteed non-increasing across regular
    Lloyd steps, not across such repairs.
    """
    X = np.asarray(X, dtype=float)
    n = len(X)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centroids = kmeans_pp(X, k, rng)
    history: list[float] = []
    repairs: list[int] = []
    prev = None
    it = 0
    for it in range(1, max_iter + 1):
        assignment, d2 = _assign(X, centroids)
        history.append(float(d2.sum()))
        if prev is not None and np.array_equal(assignment, prev):
            break
        if it == max_iter:
            break
        prev = assignment
        updated = centroids.copy()
        for j in range(k):
            members = assignment == j
            if members.any():
                updated[j] = X[members].mean(axis=0)
            else:
                far = int(np.argmax(((X - centroids[j]) ** 2).sum(axis=1)))
                updated[j] = X[far]
                repairs.append(it)
        centroids = updated
    assignment, d2 = _assign(X, centroids)
    return KMeansResult(centroids, assignment, float(d2.sum()), it, history, sorted(set(repairs)))
