"""Core dataset container, column typing, splitting, and seeded randomness.

Every other module consumes the :class:`Dataset` defined here: an N x d
float64 matrix with a per-column kind (continuous or categorical) and a
per-column name. Datasets are immutable after construction and safe to share
across workers; randomized operations take an explicit :class:`SeededRng` so
that identical (seed, stream) pairs reproduce identical results everywhere.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class FeatureKind(str, Enum):
    CONTINUOUS = "cont"
    CATEGORICAL = "cat"


_MASK64 = (1 << 64) - 1
_MIX = 0x9E3779B97F4A7C15  # splitmix64 increment


@dataclass(frozen=True)
class SeededRng:
    """Reproducible random stream identified by a (seed, stream) pair.

    Identical (seed, stream) pairs yield bit-identical draw sequences on all
    platforms (numpy PCG64 seeded through SeedSequence). Child streams are
    derived with a splitmix-style mix so sibling streams never collide in
    practice.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,)))
        )

    def child(self, index: int) -> "SeededRng":
        mixed = (self.stream * _MIX + index + 1) & _MASK64
        return SeededRng(self.seed, mixed)

    def int32(self) -> int:
        """One 31-bit integer, e.g. for seeding scikit-learn estimators."""
        return int(self.generator().integers(0, 2**31 - 1))


@dataclass(frozen=True)
class Dataset:
    """Immutable N x d numeric table with per-column kinds and names."""

    values: np.ndarray
    kinds: tuple[FeatureKind, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {values.shape}")
        if values.shape[0] == 0 or values.shape[1] == 0:
            raise ValueError("dataset must have at least one row and one column")
        if not np.isfinite(values).all():
            raise ValueError("dataset contains NaN or Inf")
        kinds = tuple(FeatureKind(k) for k in self.kinds)
        names = tuple(str(n) for n in self.names)
        if len(kinds) != values.shape[1] or len(names) != values.shape[1]:
            raise ValueError("kinds/names length must match the number of columns")
        for j, kind in enumerate(kinds):
            if kind is FeatureKind.CATEGORICAL and not np.array_equal(
                values[:, j], np.round(values[:, j])
            ):
                raise ValueError(f"categorical column {j} ({names[j]}) holds non-integer values")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "names", names)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_values(cls, values: np.ndarray, kinds=None, names=None) -> "Dataset":
        """Build a dataset, defaulting to continuous kinds and x0..x{d-1} names."""
        values = np.asarray(values, dtype=np.float64)
        d = values.shape[1] if values.ndim == 2 else 0
        if kinds is None:
            kinds = (FeatureKind.CONTINUOUS,) * d
        if names is None:
            names = tuple(f"x{j}" for j in range(d))
        return cls(values, tuple(kinds), tuple(names))

    def select_columns(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            self.values[:, idx],
            tuple(self.kinds[j] for j in idx),
            tuple(self.names[j] for j in idx),
        )

    def select_rows(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(self.values[np.asarray(indices, dtype=int)], self.kinds, self.names)

    def with_values(self, values: np.ndarray) -> "Dataset":
        """Same columns, new value matrix."""
        return Dataset(values, self.kinds, self.names)


@dataclass(frozen=True)
class CorruptionMask:
    """Strictly increasing column indices flagged as corrupted."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("mask indices must be strictly increasing (no duplicates)")
        if any(i < 0 for i in idx):
            raise ValueError("mask indices must be non-negative")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_indices(cls, indices: Iterable[int]) -> "CorruptionMask":
        return cls(tuple(sorted({int(i) for i in indices})))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int)

    def complement(self, d: int) -> np.ndarray:
        comp = np.setdiff1d(np.arange(d), self.array())
        return comp

    def validate_for(self, d: int) -> None:
        if len(self.indices) == 0:
            return
        if self.indices[-1] >= d:
            raise ValueError(f"mask index {self.indices[-1]} out of range for d={d}")
        if len(self.indices) >= d:
            raise ValueError("mask may not cover every column")


# ---------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class NormalizationParams:
    mins: np.ndarray
    maxs: np.ndarray


def normalize(ds: Dataset) -> tuple[Dataset, NormalizationParams]:
    """Min-max scale every column to [0, 1]; constant columns map to 0.

    Returns the scaled dataset and the per-column (min, max) needed to invert
    the map on non-constant columns.
    """
    mins = ds.values.min(axis=0)
    maxs = ds.values.max(axis=0)
    span = maxs - mins
    safe = np.where(span > 0, span, 1.0)
    scaled = (ds.values - mins) / safe
    scaled[:, span == 0] = 0.0
    return ds.with_values(scaled), NormalizationParams(mins=mins, maxs=maxs)


def apply_normalization(ds: Dataset, params: NormalizationParams) -> Dataset:
    """Scale with previously fitted parameters (e.g. fit on the reference)."""
    span = params.maxs - params.mins
    safe = np.where(span > 0, span, 1.0)
    scaled = (ds.values - params.mins) / safe
    scaled[:, span == 0] = 0.0
    return ds.with_values(scaled)


def denormalize(ds: Dataset, params: NormalizationParams) -> Dataset:
    span = params.maxs - params.mins
    return ds.with_values(ds.values * span + params.mins)


# ---------------------------------------------------------------------------
# splitting


def split_reference_query(ds: Dataset, rng: SeededRng) -> tuple[Dataset, Dataset]:
    """Disjoint row partition into floor(N/2) reference and ceil(N/2) query rows."""
    n = ds.n_rows
    if n < 2:
        raise ValueError("need at least two rows to split")
    perm = rng.generator().permutation(n)
    half = n // 2
    return ds.select_rows(np.sort(perm[:half])), ds.select_rows(np.sort(perm[half:]))


def kfold_indices(n: int, k: int, rng: SeededRng) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled k-fold split of range(n): list of (train_idx, test_idx).

    Test folds partition range(n); remainder rows go to the earliest folds so
    the split is a pure function of (n, k, rng).
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"need at least k={k} rows, got {n}")
    perm = rng.generator().permutation(n)
    base = n // k
    extra = n % k
    folds = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        test = np.sort(perm[start : start + size])
        train = np.sort(np.concatenate([perm[:start], perm[start + size :]]))
        folds.append((train, test))
        start += size
    return folds


# ---------------------------------------------------------------------------
# file I/O: CSV with header + sidecar kinds JSON, masks as JSON index arrays


def kinds_path_for(csv_path: str | Path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".kinds.json")


def save_csv(ds: Dataset, path: str | Path, kinds_sidecar: bool = True) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ds.names)
        for row in ds.values:
            writer.writerow([repr(float(v)) for v in row])
    if kinds_sidecar:
        with open(kinds_path_for(path), "w") as fh:
            json.dump({"kinds": [k.value for k in ds.kinds]}, fh)
            fh.write("\n")


def load_csv(path: str | Path, kinds: Sequence[FeatureKind] | None = None) -> Dataset:
    """Load a header CSV; kinds come from the sidecar JSON when present."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    values = np.asarray(rows, dtype=np.float64)
    if kinds is None:
        sidecar = kinds_path_for(path)
        if sidecar.exists():
            with open(sidecar) as fh:
                payload = json.load(fh)
            kinds = tuple(FeatureKind(k) for k in payload["kinds"])
        else:
            kinds = (FeatureKind.CONTINUOUS,) * values.shape[1]
    return Dataset(values, tuple(kinds), tuple(names))


def save_mask(mask: CorruptionMask, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(list(mask.indices), fh)
        fh.write("\n")


def load_mask(path: str | Path) -> CorruptionMask:
    with open(path) as fh:
        indices = json.load(fh)
    if not isinstance(indices, list):
        raise ValueError(f"{path}: mask file must hold a JSON array of column indices")
    return CorruptionMask.from_indices(indices)
