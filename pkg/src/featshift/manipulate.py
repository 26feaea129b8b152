"""Ten query-side corruptions for benchmarking localization and correction.

Each manipulation rewrites a uniformly chosen fraction of the eligible
columns of a [0, 1]-scaled query table and returns the corrupted table plus
the ground-truth mask. Types span marginal shifts (uniform replacement,
negation, constant noise, binarization, random bit flips, a random MLP
forward pass), pure correlation shifts (per-column vs shared row
permutations), and reconstruction by a nearest-neighbor predictor fit on the
reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CorruptionMask, Dataset, FeatureKind, SeededRng
from .imputers import knn_impute

# type id -> (eligible kinds, needs reference)
_TYPE_INFO: dict[str, tuple[tuple[FeatureKind, ...], bool]] = {
    "1": ((FeatureKind.CONTINUOUS,), False),
    "2": ((FeatureKind.CONTINUOUS, FeatureKind.CATEGORICAL), False),
    "3": ((FeatureKind.CONTINUOUS, FeatureKind.CATEGORICAL), False),
    "4": ((FeatureKind.CONTINUOUS,), False),
    "5": ((FeatureKind.CONTINUOUS,), False),
    "6": ((FeatureKind.CATEGORICAL,), False),
    "7": ((FeatureKind.CONTINUOUS, FeatureKind.CATEGORICAL), False),
    "8": ((FeatureKind.CONTINUOUS, FeatureKind.CATEGORICAL), False),
    "9": ((FeatureKind.CONTINUOUS,), True),
    "10": ((FeatureKind.CATEGORICAL,), True),
}

_ALPHA_BY_SUBTYPE = {"4.1": 0.02, "4.2": 0.05, "4.3": 0.1}
_RHO_BY_SUBTYPE = {"6.1": 0.2, "6.2": 0.4, "6.3": 0.6}


@dataclass(frozen=True)
class ManipulationSpec:
    type_id: str  # "1".."10", with "4.1".."4.3" and "6.1".."6.3" subtypes
    fraction: float = 0.25
    alpha: float | None = None  # noise magnitude for type 4
    rho: float | None = None  # flip probability for type 6
    seed: int = 0

    def base_type(self) -> str:
        return self.type_id.split(".")[0]

    def resolved_alpha(self) -> float:
        if self.alpha is not None:
            return self.alpha
        if self.type_id in _ALPHA_BY_SUBTYPE:
            return _ALPHA_BY_SUBTYPE[self.type_id]
        raise ValueError(f"type {self.type_id} needs an explicit alpha")

    def resolved_rho(self) -> float:
        if self.rho is not None:
            return self.rho
        if self.type_id in _RHO_BY_SUBTYPE:
            return _RHO_BY_SUBTYPE[self.type_id]
        raise ValueError(f"type {self.type_id} needs an explicit rho")


def eligible_columns(y: Dataset, type_id: str) -> np.ndarray:
    base = type_id.split(".")[0]
    if base not in _TYPE_INFO:
        raise ValueError(f"unknown manipulation type {type_id!r}")
    kinds, _ = _TYPE_INFO[base]
    return np.array([j for j, k in enumerate(y.kinds) if k in kinds], dtype=int)


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5)


def apply_manipulation(
    y: Dataset, spec: ManipulationSpec, reference: Dataset | None = None
) -> tuple[Dataset, CorruptionMask]:
    """Corrupt a fraction of eligible query columns; returns (corrupted, mask).

    The query must already be scaled to [0, 1]. Mask size is
    round-half-up(fraction * eligible), floored at one column. Types 9 and 10
    require the clean reference to fit their KNN reconstructor.
    """
    base = spec.base_type()
    if base not in _TYPE_INFO:
        raise ValueError(f"unknown manipulation type {spec.type_id!r}")
    needs_reference = _TYPE_INFO[base][1]
    if needs_reference and reference is None:
        raise ValueError(f"type {spec.type_id} needs the reference dataset")
    if y.values.min() < 0.0 or y.values.max() > 1.0:
        raise ValueError("query must be min-max scaled to [0, 1] before manipulation")
    eligible = eligible_columns(y, spec.type_id)
    if eligible.size == 0:
        raise ValueError(f"no columns of a compatible kind for type {spec.type_id}")
    # epsilon absorbs binary-float dust so e.g. 0.35 * 10 still rounds half-up
    n_cols = int(np.floor(spec.fraction * eligible.size + 0.5 + 1e-9))
    n_cols = max(n_cols, 1)
    if spec.fraction <= 0:
        raise ValueError("fraction must be positive")
    if n_cols > eligible.size:
        raise ValueError("fraction selects more columns than are eligible")

    rng = SeededRng(spec.seed)
    chosen = np.sort(rng.child(0).generator().choice(eligible, size=n_cols, replace=False))
    mask = CorruptionMask.from_indices(chosen.tolist())
    out = y.values.copy()
    block = out[:, chosen]
    n = y.n_rows

    if base == "1":
        out[:, chosen] = rng.child(1).generator().random(block.shape)
    elif base == "2":
        out[:, chosen] = 1.0 - block
    elif base == "3":
        # independent permutation per column: marginals kept, correlations broken
        for i, j in enumerate(chosen):
            perm = rng.child(1).child(i).generator().permutation(n)
            out[:, j] = out[perm, j]
    elif base == "4":
        alpha = spec.resolved_alpha()
        for i, j in enumerate(chosen):
            sign = rng.child(1).child(i).generator().integers(0, 2, size=n) * 2 - 1
            out[:, j] = np.clip(out[:, j] + alpha * sign, 0.0, 1.0)
    elif base == "5":
        out[:, chosen] = _round_half_up(block)
    elif base == "6":
        rho = spec.resolved_rho()
        for i, j in enumerate(chosen):
            flip = rng.child(1).child(i).generator().random(n) < rho
            out[:, j] = np.where(flip, 1.0 - out[:, j], out[:, j])
    elif base == "7":
        out[:, chosen] = _mlp_forward(block, y, chosen, rng.child(1))
    elif base == "8":
        # one shared permutation: within-block joint structure kept,
        # cross-block correlations broken
        perm = rng.child(1).generator().permutation(n)
        out[:, chosen] = block[perm]
    elif base in ("9", "10"):
        if reference.n_cols != y.n_cols:
            raise ValueError("reference and query must have the same columns")
        candidate = knn_impute(reference, y, mask, k=min(10, reference.n_rows))
        out[:, chosen] = candidate.values[:, chosen]

    return y.with_values(out), mask


def _mlp_forward(
    block: np.ndarray, y: Dataset, chosen: np.ndarray, rng: SeededRng
) -> np.ndarray:
    """One hidden tanh layer of width |mask| with N(0,1) weights, then a
    per-column min-max rescale to [0, 1]; categorical outputs are rounded."""
    width = block.shape[1]
    gen = rng.generator()
    w1 = gen.standard_normal((width, width))
    b1 = gen.standard_normal(width)
    w2 = gen.standard_normal((width, width))
    b2 = gen.standard_normal(width)
    hidden = np.tanh(block @ w1 + b1)
    raw = hidden @ w2 + b2
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    scaled = (raw - lo) / span
    scaled[:, hi == lo] = 0.0
    for i, j in enumerate(chosen):
        if y.kinds[j] is FeatureKind.CATEGORICAL:
            scaled[:, i] = _round_half_up(scaled[:, i])
    return scaled
