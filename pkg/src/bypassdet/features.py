"""Per-SIM usage profiles, standardization, feature selection and PCA."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .cdr import Dataset, Direction, Label, Service

FEATURE_NAMES: tuple[str, ...] = (
    "total_calls",
    "distinct_callees",
    "total_minutes",
    "avg_minutes",
    "outgoing_ratio",
    "incoming_calls",
    "sms_count",
    "data_sessions",
    "distinct_cells",
    "cell_entropy_bits",
    "imsi_per_imei",
    "night_ratio",
    "active_hours_per_day",
    "callee_repetition_ratio",
    "intl_presented_ratio",
)
NIGHT_END_HOUR = 6

PCA_TOL = 1e-10
PCA_MAX_ITER = 10_000


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    sim_id: str
    values: np.ndarray
    column_names: tuple[str, ...] = FEATURE_NAMES

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.column_names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.column_names, self.values)}


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    column_names: tuple[str, ...]
    sim_ids: tuple[str, ...]

    def __post_init__(self):
        if self.values.shape != (len(self.sim_ids), len(self.column_names)):
            raise ValueError(
                f"matrix shape {self.values.shape} does not match "
                f"{len(self.sim_ids)} rows x {len(self.column_names)} columns"
            )

    def __len__(self) -> int:
        return len(self.sim_ids)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_names.index(name)]

    def vector(self, sim_id: str) -> FeatureVector:
        return FeatureVector(sim_id, self.values[self.sim_ids.index(sim_id)], self.column_names)

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        missing = [n for n in names if n not in self.column_names]
        if missing:
            raise KeyError(f"unknown columns: {', '.join(missing)}")
        idx = [self.column_names.index(n) for n in names]
        return FeatureMatrix(self.values[:, idx], tuple(names), self.sim_ids)

    def rows(self, idx: Sequence[int] | np.ndarray) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureMatrix(self.values[idx], self.column_names, tuple(self.sim_ids[i] for i in idx))

    def with_values(self, values: np.ndarray, column_names: Sequence[str] | None = None) -> "FeatureMatrix":
        return FeatureMatrix(np.asarray(values, dtype=float), tuple(column_names or self.column_names), self.sim_ids)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("sim_id",) + self.column_names)
        for sim, row in zip(self.sim_ids, self.values):
            writer.writerow([sim] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8", newline="")

    @classmethod
    def from_csv(cls, text: str) -> "FeatureMatrix":
        reader = csv.reader(io.StringIO(text, newline=""))
        header = next(reader, None)
        if not header or header[0] != "sim_id":
            raise ValueError("feature CSV must start with a sim_id column")
        sims, rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"line {line_no}: expected {len(header)} fields")
            sims.append(row[0])
            rows.append([float(v) for v in row[1:]])
        values = np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)
        return cls(values, tuple(header[1:]), tuple(sims))

    @classmethod
    def read_csv(cls, path: str | Path) -> "FeatureMatrix":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


def label_vector(m: FeatureMatrix, labels: Mapping[str, Label]) -> np.ndarray:
    """1 for FRAUD, 0 for NORMAL, aligned with ``m.sim_ids``."""
    missing = [s for s in m.sim_ids if s not in labels]
    if missing:
        raise KeyError(f"{len(missing)} sim_ids have no label, e.g. {missing[0]}")
    return np.array([Label(labels[s]) is Label.FRAUD for s in m.sim_ids], dtype=np.int64)


# ---------------------------------------------------------------- extraction


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(len(num), dtype=float)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def _pair_counts(a: np.ndarray, b: np.ndarray, nb: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct (a, b) pairs and how often each occurs."""
    keys, counts = np.unique(a.astype(np.int64) * nb + b, return_counts=True)
    return keys, counts


def extract(dataset: Dataset) -> FeatureMatrix:
    """Aggregate a cleaned dataset into one feature row per sim_id (sorted)."""
    recs = dataset.records
    if not recs:
        return FeatureMatrix(np.zeros((0, len(FEATURE_NAMES))), FEATURE_NAMES, ())

    sim_ids, s = np.unique(np.array([r.sim_id for r in recs]), return_inverse=True)
    n = len(sim_ids)
    _, peer = np.unique(np.array([r.peer_id for r in recs]), return_inverse=True)
    _, cell = np.unique(np.array([r.cell_id for r in recs]), return_inverse=True)
    _, imei = np.unique(np.array([r.imei for r in recs]), return_inverse=True)
    _, imsi = np.unique(np.array([r.imsi for r in recs]), return_inverse=True)
    mo = np.array([r.direction is Direction.MO for r in recs])
    service = np.array([r.service.value for r in recs])
    dur = np.array([r.duration_sec for r in recs], dtype=np.int64)
    intl = np.array([bool(r.peer_is_international) for r in recs])
    ts = np.array([int(r.timestamp.timestamp()) for r in recs], dtype=np.int64)
    day, hour = ts // 86_400, (ts % 86_400) // 3_600

    voice = service == Service.VOICE.value
    mo_voice, mt_voice = voice & mo, voice & ~mo

    def per_sim(mask: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
        w = None if weights is None else weights[mask]
        return np.bincount(s[mask], weights=w, minlength=n).astype(float)

    total_calls = per_sim(mo_voice)
    incoming = per_sim(mt_voice)
    total_minutes = per_sim(mo_voice, dur.astype(float)) / 60.0
    avg_minutes = _safe_div(total_minutes, total_calls)

    keys, _ = _pair_counts(s[mo_voice], peer[mo_voice], peer.max() + 1)
    distinct_callees = np.bincount(keys // (peer.max() + 1), minlength=n).astype(float)

    nc = cell.max() + 1
    keys, counts = _pair_counts(s, cell, nc)
    owner = keys // nc
    distinct_cells = np.bincount(owner, minlength=n).astype(float)
    totals = np.bincount(s, minlength=n).astype(float)
    p = counts / totals[owner]
    entropy = np.bincount(owner, weights=-p * np.log2(p), minlength=n) + 0.0
    entropy[distinct_cells <= 1] = 0.0

    # modal imei per sim (ties -> lexicographically smallest imei)
    ni = imei.max() + 1
    keys, counts = _pair_counts(s, imei, ni)
    owner, dev = keys // ni, keys % ni
    order = np.lexsort((dev, -counts, owner))
    first = order[np.r_[True, np.diff(owner[order]) != 0]]
    modal = np.empty(n, dtype=np.int64)
    modal[owner[first]] = dev[first]
    keys, _ = _pair_counts(imei, imsi, imsi.max() + 1)
    imsi_on_imei = np.bincount(keys // (imsi.max() + 1), minlength=ni).astype(float)
    imsi_per_imei = imsi_on_imei[modal]

    night = per_sim(mo_voice & (hour < NIGHT_END_HOUR))
    span = day.max() + 1
    hour_keys = np.unique((s * span + day) * 24 + hour)
    day_keys = np.unique(s * span + day)
    active_hours = np.bincount(hour_keys // 24 // span, minlength=n).astype(float)
    active_days = np.bincount(day_keys // span, minlength=n).astype(float)

    values = np.column_stack([
        total_calls,
        distinct_callees,
        total_minutes,
        avg_minutes,
        _safe_div(total_calls, total_calls + incoming),
        incoming,
        per_sim(service == Service.SMS.value),
        per_sim(service == Service.DATA.value),
        distinct_cells,
        entropy,
        imsi_per_imei,
        _safe_div(night, total_calls),
        _safe_div(active_hours, active_days),
        _safe_div(total_calls - distinct_callees, total_calls),
        _safe_div(per_sim(mt_voice & intl), incoming),
    ])
    return FeatureMatrix(values, FEATURE_NAMES, tuple(str(x) for x in sim_ids))


# ---------------------------------------------------------------- scaling


@dataclass(frozen=True)
class ScalerParams:
    column_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return self.std == 0

    def to_dict(self) -> dict:
        return {
            "columns": [
                {"name": n, "mean": float(m), "std": float(s), "constant": bool(s == 0)}
                for n, m, s in zip(self.column_names, self.mean, self.std)
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScalerParams":
        cols = data["columns"]
        return cls(
            tuple(c["name"] for c in cols),
            np.array([c["mean"] for c in cols], dtype=float),
            np.array([c["std"] for c in cols], dtype=float),
        )

    @classmethod
    def identity(cls, column_names: Sequence[str]) -> "ScalerParams":
        d = len(column_names)
        return cls(tuple(column_names), np.zeros(d), np.ones(d))


def fit_scaler(m: FeatureMatrix) -> ScalerParams:
    """Column mean and sample standard deviation (n - 1 denominator)."""
    if len(m) < 2:
        raise ValueError("fit_scaler needs at least 2 rows")
    x = m.values
    std = x.std(axis=0, ddof=1)
    std[np.ptp(x, axis=0) == 0] = 0.0
    return ScalerParams(m.column_names, x.mean(axis=0), std)


def apply_scaler(m: FeatureMatrix, params: ScalerParams) -> FeatureMatrix:
    if m.column_names != params.column_names:
        raise ValueError("scaler columns do not match the matrix")
    const = params.constant
    safe = np.where(const, 1.0, params.std)
    out = (m.values - params.mean) / safe
    out[:, const] = 0.0
    return m.with_values(out)


# ---------------------------------------------------------------- selection


def point_biserial(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pearson correlation of every column of ``x`` with a binary ``y``."""
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    den = np.sqrt((xc**2).sum(axis=0) * (yc**2).sum())
    return _safe_div(xc.T @ yc, den)


def select_features(m: FeatureMatrix, labels: np.ndarray, k: int) -> tuple[str, ...]:
    """Top-``k`` non-constant columns by |point-biserial correlation|, best first."""
    d = len(m.column_names)
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}], got {k}")
    varying = np.flatnonzero(np.ptp(m.values, axis=0) > 0) if len(m) else np.array([], dtype=int)
    if len(varying) == 0:
        raise SelectionError("every column is constant")
    r = np.abs(point_biserial(m.values[:, varying], np.asarray(labels, dtype=float)))
    ranked = sorted(range(len(varying)), key=lambda i: (-r[i], varying[i]))
    return tuple(m.column_names[varying[i]] for i in ranked[:k])


# ---------------------------------------------------------------- PCA


@dataclass(frozen=True)
class PcaResult:
    column_names: tuple[str, ...]
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray  # (k,), non-increasing
    total_variance: float
    projected: np.ndarray | None = None

    @property
    def explained_ratio(self) -> np.ndarray:
        if self.total_variance == 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(f"pc{i + 1}" for i in range(len(self.components)))

    def transform(self, m: FeatureMatrix) -> FeatureMatrix:
        if m.column_names != self.column_names:
            raise ValueError("PCA columns do not match the matrix")
        return FeatureMatrix((m.values - self.mean) @ self.components.T, self.output_names, m.sim_ids)

    def to_dict(self) -> dict:
        return {
            "columns": list(self.column_names),
            "mean": dict(zip(self.column_names, map(float, self.mean))),
            "total_variance": float(self.total_variance),
            "components": [
                {"explained_variance": float(ev), "loadings": dict(zip(self.column_names, map(float, c)))}
                for ev, c in zip(self.explained_variance, self.components)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PcaResult":
        names = tuple(data["columns"])
        comps = data["components"]
        return cls(
            names,
            np.array([data["mean"][n] for n in names]),
            np.array([[c["loadings"][n] for n in names] for c in comps]).reshape(len(comps), len(names)),
            np.array([c["explained_variance"] for c in comps], dtype=float),
            float(data["total_variance"]),
        )


def _top_eigenpairs(cov: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Power iteration with deflation on a symmetric PSD matrix."""
    d = cov.shape[0]
    rng = np.random.default_rng(0)
    scale = max(float(np.trace(cov)), 1.0)
    a = cov.copy()
    vecs: list[np.ndarray] = []
    vals: list[float] = []
    for _ in range(k):
        basis = np.array(vecs).reshape(len(vecs), d)
        v = rng.standard_normal(d)
        v -= basis.T @ (basis @ v)
        v /= np.linalg.norm(v)
        for _ in range(PCA_MAX_ITER):
            w = a @ v
            w -= basis.T @ (basis @ w)
            norm = np.linalg.norm(w)
            if norm < 1e-13 * scale:
                break  # remaining spectrum is zero; v spans part of the null space
            w /= norm
            done = np.linalg.norm(w - v) < PCA_TOL
            v = w
            if done:
                break
        v = v - basis.T @ (basis @ v)
        v /= np.linalg.norm(v)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        lam = max(float(v @ cov @ v), 0.0)
        vecs.append(v)
        vals.append(lam)
        a = a - lam * np.outer(v, v)
    return np.array(vecs).reshape(k, d), np.array(vals)


def pca(m: FeatureMatrix, k: int) -> PcaResult:
    d = len(m.column_names)
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}], got {k}")
    if len(m) < 2:
        raise ValueError("pca needs at least 2 rows")
    x = m.values
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (len(x) - 1)
    comps, vals = _top_eigenpairs(cov, k)
    return PcaResult(m.column_names, mean, comps, vals, float(np.trace(cov)), xc @ comps.T)


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
