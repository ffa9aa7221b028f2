"""Stratified, seeded train/test partition."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    test: np.ndarray


def split(labels: np.ndarray, train_fraction: float = 2 / 3, seed: int = 42) -> Split:
    """Stratify by label; each stratum keeps >= 1 row on both sides.

    Stratum ``s`` first gets ``floor(f * n_s)`` training rows; rows left over
    from ``floor(f * n)`` go one each to the strata with the largest
    fractional parts (lower label first on ties).
    """
    if not 0.0 < train_fraction < 1.0:
        raise SplitError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    labels = np.asarray(labels)
    classes = np.unique(labels)
    strata = [np.flatnonzero(labels == c) for c in classes]
    for c, idx in zip(classes, strata):
        if len(idx) < 2:
            raise SplitError(f"stratum {c!r} has {len(idx)} row(s); need at least 2")

    exact = [train_fraction * len(idx) for idx in strata]
    quota = [min(max(math.floor(e + 1e-9), 1), len(idx) - 1) for e, idx in zip(exact, strata)]
    remainder = math.floor(train_fraction * len(labels) + 1e-9) - sum(quota)
    by_fraction = sorted(range(len(strata)), key=lambda i: (-(exact[i] - math.floor(exact[i] + 1e-9)), i))
    for i in by_fraction:
        if remainder <= 0:
            break
        if quota[i] < len(strata[i]) - 1:
            quota[i] += 1
            remainder -= 1

    rng = np.random.default_rng(seed)
    train, test = [], []
    for idx, q in zip(strata, quota):
        perm = rng.permutation(idx)
        train.append(perm[:q])
        test.append(perm[q:])
    return Split(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)))
