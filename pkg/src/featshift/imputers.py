"""Baseline column reconstructors used to seed and feed the correction loop.

All three imputers rebuild the masked columns of the query from the reference:
KNN (nearest reference rows in L2 over the observed columns), a single
multi-output least-squares regression, and joint random resampling of masked
blocks from reference rows. Non-masked query columns pass through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CorruptionMask, Dataset, FeatureKind, SeededRng


@dataclass(frozen=True)
class ImputedCandidate:
    values: np.ndarray  # full corrected query matrix
    method: str  # "knn" | "linreg" | "random"


def _split_columns(mask: CorruptionMask, d: int) -> tuple[np.ndarray, np.ndarray]:
    mask.validate_for(d)
    masked = mask.array()
    if masked.size == 0:
        raise ValueError("mask must select at least one column")
    if masked.size >= d:
        raise ValueError("mask may not cover all columns")
    return masked, mask.complement(d)


def _snap_categorical(values: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Round predictions and snap to the nearest value seen in the reference."""
    cats = np.unique(observed)
    rounded = np.floor(values + 0.5)
    pos = np.searchsorted(cats, rounded).clip(1, len(cats) - 1) if len(cats) > 1 else None
    if pos is None:
        return np.full_like(values, cats[0])
    lower = cats[pos - 1]
    upper = cats[pos]
    return np.where(np.abs(rounded - lower) <= np.abs(upper - rounded), lower, upper)


def knn_impute(
    x: Dataset, y: Dataset, mask: CorruptionMask, k: int = 10
) -> ImputedCandidate:
    """Fill masked query columns from the k nearest reference rows.

    Distances are L2 over the non-masked columns; continuous columns take the
    neighbor mean, categorical columns a majority vote with ties resolved
    toward the lowest value.
    """
    masked, observed = _split_columns(mask, x.n_cols)
    if k < 1 or k > x.n_rows:
        raise ValueError(f"k must be in [1, {x.n_rows}]")
    x_obs = x.values[:, observed]
    y_obs = y.values[:, observed]
    out = y.values.copy()

    # chunked brute-force neighbor search; ordering ties broken by row index
    x_sq = np.einsum("ij,ij->i", x_obs, x_obs)
    chunk = max(1, 2_000_000 // max(1, x.n_rows))
    for start in range(0, y.n_rows, chunk):
        q = y_obs[start : start + chunk]
        d2 = np.maximum(
            q @ x_obs.T * -2.0 + np.einsum("ij,ij->i", q, q)[:, None] + x_sq[None, :], 0.0
        )
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        for j_local, j in enumerate(masked):
            neigh_vals = x.values[order, j]
            if y.kinds[j] is FeatureKind.CATEGORICAL:
                filled = np.array([_majority_lowest(row) for row in neigh_vals])
            else:
                filled = neigh_vals.mean(axis=1)
            out[start : start + chunk, j] = filled
    return ImputedCandidate(values=out, method="knn")


def _majority_lowest(values: np.ndarray) -> float:
    cats, counts = np.unique(values, return_counts=True)
    return float(cats[np.argmax(counts)])  # np.unique sorts, argmax takes the lowest tie


def linreg_impute(x: Dataset, y: Dataset, mask: CorruptionMask) -> ImputedCandidate:
    """One multi-output least-squares fit of masked columns on observed ones.

    Solved through the normal equations with an automatic small-ridge fallback
    when the design is singular or underdetermined; categorical predictions
    are rounded and snapped to the categories observed in the reference.
    """
    masked, observed = _split_columns(mask, x.n_cols)
    design = np.column_stack([np.ones(x.n_rows), x.values[:, observed]])
    target = x.values[:, masked]
    gram = design.T @ design
    rhs = design.T @ target
    needs_ridge = x.n_rows <= observed.size
    if not needs_ridge:
        try:
            weights = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            needs_ridge = True
    if needs_ridge:
        weights = np.linalg.solve(gram + 1e-6 * np.eye(gram.shape[0]), rhs)

    query_design = np.column_stack([np.ones(y.n_rows), y.values[:, observed]])
    pred = query_design @ weights
    out = y.values.copy()
    for j_local, j in enumerate(masked):
        col = pred[:, j_local]
        if y.kinds[j] is FeatureKind.CATEGORICAL:
            col = _snap_categorical(col, x.values[:, j])
        out[:, j] = col
    return ImputedCandidate(values=out, method="linreg")


def random_sample_impute(
    x: Dataset, y: Dataset, mask: CorruptionMask, rng: SeededRng = SeededRng(0)
) -> ImputedCandidate:
    """Copy the masked block of one uniformly drawn reference row into each
    query row; the block is copied jointly so within-mask structure survives."""
    masked, _ = _split_columns(mask, x.n_cols)
    gen = rng.generator()
    donors = gen.integers(0, x.n_rows, size=y.n_rows)
    out = y.values.copy()
    out[:, masked] = x.values[np.ix_(donors, masked)]
    return ImputedCandidate(values=out, method="random")
