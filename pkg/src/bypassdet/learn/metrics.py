"""Confusion counts and detection metrics; FRAUD (1) is the positive class."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np


@dataclass
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    fpr: float
    flagged: list[str] = field(default_factory=list)
    sim_ids: list[str] = field(default_factory=list)
    model: str = ""
    params: dict[str, Any] = field(default_factory=dict)
    world_id: str = ""

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EvalReport":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [
            f"model      {self.model or '-'}",
            f"rows       {self.n}",
            "",
            "              pred FRAUD  pred NORMAL",
            f"true FRAUD   {self.tp:>10d}  {self.fn:>11d}",
            f"true NORMAL  {self.fp:>10d}  {self.tn:>11d}",
            "",
        ]
        for name in ("accuracy", "precision", "recall", "f1", "fpr"):
            lines.append(f"{name:<10} {getattr(self, name):.4f}")
        return "\n".join(lines) + "\n"


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def evaluate(predictions: Sequence[int], labels: Sequence[int], sim_ids: Sequence[str] | None = None,
             **meta: Any) -> EvalReport:
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(true)} labels")
    if sim_ids is not None and len(sim_ids) != len(pred):
        raise ValueError("sim_ids length does not match predictions")
    tp = int(np.sum((pred == 1) & (true == 1)))
    fp = int(np.sum((pred == 1) & (true == 0)))
    tn = int(np.sum((pred == 0) & (true == 0)))
    fn = int(np.sum((pred == 0) & (true == 1)))
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    ids = list(sim_ids) if sim_ids is not None else []
    return EvalReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        accuracy=_ratio(tp + tn, len(pred)),
        precision=precision,
        recall=recall,
        f1=_ratio(2 * precision * recall, precision + recall) if precision + recall else 0.0,
        fpr=_ratio(fp, fp + tn),
        flagged=[s for s, p in zip(ids, pred) if p == 1],
        sim_ids=ids,
        **meta,
    )
