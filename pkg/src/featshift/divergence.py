"""Empirical total-variation estimation via held-out discriminators.

The estimator trains one binary classifier per fold on 80/20 (k=5)
train/test splits of the reference and query rows and evaluates, on the held
out rows, the variational bound with the total-variation generator
g(u) = 1/2 * sign(u - 1) applied to likelihood ratios. With label 1 = query,
the per-fold statistic is

    D_fold = mean over query test rows of g(r) - mean over reference test rows of g(r)

which equals 2 * (balanced accuracy) - 1 exactly, where a row is predicted
"query" iff its ratio exceeds 1 (ties count as reference-side predictions).
Fold estimates are averaged to reduce variance; negatives are clamped to 0
for policy use since the true distance is non-negative.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import Dataset, SeededRng, kfold_indices
from .trees import (
    BoostedParams,
    ForestParams,
    fit_boosted,
    fit_forest,
    ratio_from_proba,
)


def sign_term(r: np.ndarray | float) -> np.ndarray | float:
    """g(r) = +1/2 if r > 1 else -1/2 (the tie r = 1 maps to -1/2)."""
    if np.isscalar(r):
        return 0.5 if r > 1 else -0.5
    return np.where(np.asarray(r) > 1, 0.5, -0.5)


def fold_tv_from_proba(px_test: np.ndarray, py_test: np.ndarray) -> tuple[float, float]:
    """Per-fold (estimate, balanced accuracy) from held-out class-1 probabilities."""
    gx = sign_term(ratio_from_proba(px_test))
    gy = sign_term(ratio_from_proba(py_test))
    d_hat = float(np.mean(gy) - np.mean(gx))
    ba = 0.5 * (float(np.mean(gx == -0.5)) + float(np.mean(gy == 0.5)))
    return d_hat, ba


@dataclass(frozen=True)
class DivergenceEstimate:
    per_fold: tuple[float, ...]
    balanced_accuracy_per_fold: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_fold))

    @property
    def policy_value(self) -> float:
        """Estimate clamped to [0, 1]; thresholds of the form tau * D must be >= 0."""
        return float(min(max(self.mean, 0.0), 1.0))


def _run_fold(args) -> tuple[float, float, np.ndarray | None]:
    (x_train, y_train, x_test, y_test, model_kind, params, seed, stream) = args
    rng = SeededRng(seed, stream)
    if model_kind == "forest":
        model = fit_forest(x_train, y_train, params, rng)
        importances = model.importances
    elif model_kind == "boosted":
        model = fit_boosted(x_train, y_train, params, rng)
        importances = None
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")
    px = model.predict_proba(x_test)
    py = model.predict_proba(y_test)
    d_hat, ba = fold_tv_from_proba(px, py)
    return d_hat, ba, importances


def run_folds(
    x_rows: np.ndarray,
    y_rows: np.ndarray,
    model_kind: str = "forest",
    k: int = 5,
    rng: SeededRng = SeededRng(0),
    params: ForestParams | BoostedParams | None = None,
    workers: int = 1,
) -> tuple[DivergenceEstimate, np.ndarray | None]:
    """k-fold discriminator training; returns the estimate and, for forests,
    the fold-averaged feature importances."""
    x_rows = np.asarray(x_rows, dtype=np.float64)
    y_rows = np.asarray(y_rows, dtype=np.float64)
    if x_rows.shape[1] != y_rows.shape[1]:
        raise ValueError("reference and query must share the feature dimension")
    if len(x_rows) < k or len(y_rows) < k:
        raise ValueError(f"need at least k={k} rows per dataset")
    if params is None:
        params = ForestParams() if model_kind == "forest" else BoostedParams()

    folds_x = kfold_indices(len(x_rows), k, rng.child(0))
    folds_y = kfold_indices(len(y_rows), k, rng.child(1))
    tasks = []
    for i, ((trx, tex), (tryy, tey)) in enumerate(zip(folds_x, folds_y)):
        fold_rng = rng.child(2 + i)
        tasks.append(
            (
                x_rows[trx],
                y_rows[tryy],
                x_rows[tex],
                y_rows[tey],
                model_kind,
                params,
                fold_rng.seed,
                fold_rng.stream,
            )
        )

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]

    per_fold = tuple(r[0] for r in results)
    bas = tuple(r[1] for r in results)
    estimate = DivergenceEstimate(per_fold=per_fold, balanced_accuracy_per_fold=bas)
    if model_kind == "forest":
        importances = np.mean([r[2] for r in results], axis=0)
        return estimate, importances
    return estimate, None


def estimate_tv(
    x: Dataset | np.ndarray,
    y: Dataset | np.ndarray,
    model_kind: str = "forest",
    k: int = 5,
    rng: SeededRng = SeededRng(0),
    params: ForestParams | BoostedParams | None = None,
    workers: int = 1,
) -> DivergenceEstimate:
    """Empirical total-variation distance between two row samples."""
    x_rows = x.values if isinstance(x, Dataset) else x
    y_rows = y.values if isinstance(y, Dataset) else y
    estimate, _ = run_folds(x_rows, y_rows, model_kind, k, rng, params, workers)
    return estimate
