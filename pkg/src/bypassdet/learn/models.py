"""Trainable detector pipelines bound to feature columns, with JSON persistence."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..features import FeatureMatrix, PcaResult, ScalerParams, apply_scaler, fit_scaler, pca, select_features
from .kmeans import KMeansResult, kmeans
from .mlp import MlpModel, train_mlp
from .svm import SvmModel, train_svm
from .tree import ForestModel, TreeModel, train_forest, train_tree

SCHEMA_VERSION = 1
MODEL_KINDS = ("tree", "forest", "svm", "mlp", "kmeans")
DEFAULTS: dict[str, dict[str, Any]] = {
    "tree": {"max_depth": 12, "min_leaf": 2},
    "forest": {"n_trees": 100, "m_try": None, "max_depth": 12, "min_leaf": 2, "bootstrap": True},
    "svm": {"lam": 1e-3, "epochs": 50},
    "mlp": {"epochs": 5000},
    "kmeans": {"k": 2, "max_iter": 300},
}
# learners that need standardized input
_SCALED = {"svm", "mlp", "kmeans"}


class ColumnMismatchError(ValueError):
    pass


@dataclass
class KMeansDetector:
    """Clusters plus the clusters whose training members were mostly FRAUD."""

    result: KMeansResult
    fraud_clusters: list[int]
    crosstab: list[list[int]] = field(default_factory=list)  # [cluster][normal, fraud]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.isin(self.result.predict(X), self.fraud_clusters).astype(np.int64)

    def to_dict(self) -> dict[str, Any]:
        return {**self.result.to_dict(), "fraud_clusters": self.fraud_clusters, "crosstab": self.crosstab}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "KMeansDetector":
        centroids = np.array(d["centroids"], dtype=float)
        result = KMeansResult(centroids, np.zeros(0, dtype=np.int64), float(d["inertia"]), int(d["n_iter"]))
        return cls(result, list(d["fraud_clusters"]), d.get("crosstab", []))


def crosstab(assignment: np.ndarray, y: np.ndarray, k: int) -> list[list[int]]:
    return [[int(np.sum((assignment == j) & (y == 0))), int(np.sum((assignment == j) & (y == 1)))]
            for j in range(k)]


_LOADERS = {
    "tree": TreeModel.from_dict,
    "forest": ForestModel.from_dict,
    "svm": SvmModel.from_dict,
    "mlp": MlpModel.from_dict,
    "kmeans": KMeansDetector.from_dict,
}


@dataclass
class Pipeline:
    kind: str
    feature_names: tuple[str, ...]
    model: Any
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 42
    selected: tuple[str, ...] | None = None
    scaler: ScalerParams | None = None
    pca: PcaResult | None = None

    def check_columns(self, m: FeatureMatrix) -> None:
        if m.column_names == self.feature_names:
            return
        missing = [c for c in self.feature_names if c not in m.column_names]
        extra = [c for c in m.column_names if c not in self.feature_names]
        parts = []
        if missing:
            parts.append(f"missing columns: {', '.join(missing)}")
        if extra:
            parts.append(f"unexpected columns: {', '.join(extra)}")
        if not parts:
            parts.append("columns are in a different order than at training time")
        raise ColumnMismatchError("; ".join(parts))

    def transform(self, m: FeatureMatrix) -> np.ndarray:
        self.check_columns(m)
        if self.selected is not None:
            m = m.select(self.selected)
        if self.scaler is not None:
            m = apply_scaler(m, self.scaler)
        if self.pca is not None:
            m = self.pca.transform(m)
        return m.values

    def predict(self, m: FeatureMatrix) -> np.ndarray:
        return self.model.predict(self.transform(m))

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "params": self.params,
            "seed": self.seed,
            "selected": None if self.selected is None else list(self.selected),
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "pca": None if self.pca is None else self.pca.to_dict(),
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Pipeline":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema_version {d.get('schema_version')!r}")
        kind = d["kind"]
        if kind not in _LOADERS:
            raise ValueError(f"unknown model kind {kind!r}")
        return cls(
            kind=kind,
            feature_names=tuple(d["feature_names"]),
            model=_LOADERS[kind](d["model"]),
            params=d.get("params", {}),
            seed=int(d.get("seed", 42)),
            selected=None if d.get("selected") is None else tuple(d["selected"]),
            scaler=None if d.get("scaler") is None else ScalerParams.from_dict(d["scaler"]),
            pca=None if d.get("pca") is None else PcaResult.from_dict(d["pca"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Pipeline":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def resolve_params(kind: str, overrides: dict[str, Any] | None = None) -> dict[str, Any]:
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}")
    params = dict(DEFAULTS[kind])
    for key, value in (overrides or {}).items():
        if key not in params:
            raise ValueError(f"unknown hyperparameter {key!r} for {kind}")
        params[key] = value
    return params


def fit_pipeline(kind: str, train: FeatureMatrix, y: np.ndarray, params: dict[str, Any] | None = None,
                 seed: int = 42, select_k: int | None = None, pca_k: int | None = None) -> Pipeline:
    """Fit optional selection, scaling and PCA on ``train``, then the learner."""
    params = resolve_params(kind, params)
    y = np.asarray(y, dtype=np.int64)
    feature_names = train.column_names
    selected = None
    m = train
    if select_k is not None:
        selected = select_features(m, y, select_k)
        m = m.select(selected)
    scaler = None
    if kind in _SCALED or pca_k is not None:
        scaler = fit_scaler(m)
        m = apply_scaler(m, scaler)
    pca_result = None
    if pca_k is not None:
        full = pca(m, pca_k)
        pca_result = PcaResult(full.column_names, full.mean, full.components, full.explained_variance,
                               full.total_variance)
        m = pca_result.transform(m)
    X = m.values

    if kind == "tree":
        model = train_tree(X, y, params["max_depth"], params["min_leaf"])
    elif kind == "forest":
        if params["m_try"] is None:
            params["m_try"] = math.ceil(math.sqrt(X.shape[1]))
        model = train_forest(X, y, params["n_trees"], params["m_try"], seed, bootstrap=params["bootstrap"],
                             max_depth=params["max_depth"], min_leaf=params["min_leaf"])
    elif kind == "svm":
        model = train_svm(X, y, params["lam"], params["epochs"], seed)
    elif kind == "mlp":
        model = train_mlp(X, y, params["epochs"], seed)
    else:
        result = kmeans(X, params["k"], seed, params["max_iter"])
        table = crosstab(result.assignment, y, params["k"])
        model = KMeansDetector(result, [j for j, (nrm, frd) in enumerate(table) if frd > nrm], table)
    return Pipeline(kind, feature_names, model, params, seed, selected, scaler, pca_result)
