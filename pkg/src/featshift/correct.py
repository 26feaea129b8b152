"""Iterative correction of localized feature shift.

Starting from the best of three imputed candidates, each epoch trains a pair
of held-out gradient-boosted discriminators on reference vs (current query +
correlation-broken reference permutations), ranks query rows by their odds of
being reference-like, and rewrites the masked block of the worst half with
the proposal — drawn from a pool built out of the reference, the regression
imputation, the incumbents, and permuted reference blocks — that maximizes
those odds under the discriminator that never saw the row. Runs for a small
number of epochs or until the re-estimated divergence falls under the
threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import CorruptionMask, Dataset, SeededRng, kfold_indices
from .divergence import DivergenceEstimate, estimate_tv, fold_tv_from_proba
from .imputers import ImputedCandidate, knn_impute, linreg_impute, random_sample_impute
from .trees import BoostedModel, BoostedParams, fit_boosted, ratio_from_proba


@dataclass(frozen=True)
class CorrectConfig:
    epsilon: float = 0.1
    epochs: int = 2
    folds: int = 2
    n_perm: int = 1
    pool_cap: int = 50_000
    min_delta: float = 0.005  # stop when an epoch fails to improve by this much
    knn_k: int = 10
    boosted: BoostedParams = field(default_factory=BoostedParams)
    workers: int = 1
    tile_rows: int = 200_000


@dataclass(frozen=True)
class ProposalPool:
    blocks: np.ndarray  # (n_blocks, |mask|)
    provenance: tuple[str, ...]  # reference | linreg | current | permutation

    def __post_init__(self):
        if self.blocks.shape[0] == 0:
            raise ValueError("proposal pool may not be empty")
        if self.blocks.shape[0] != len(self.provenance):
            raise ValueError("provenance length must match the number of blocks")


@dataclass(frozen=True)
class EpochRecord:
    d_hat_before: float
    d_hat_after: float
    replaced: int


@dataclass(frozen=True)
class CorrectReport:
    corrected: Dataset
    initial_method: str
    initial_d_hat: float
    epochs: tuple[EpochRecord, ...]
    converged: bool

    def to_json_dict(self) -> dict:
        return {
            "initial": self.initial_method,
            "initial_d_hat": self.initial_d_hat,
            "epochs": [
                {
                    "d_hat_before": e.d_hat_before,
                    "d_hat_after": e.d_hat_after,
                    "replaced": e.replaced,
                }
                for e in self.epochs
            ],
            "converged": self.converged,
        }


def _initial_candidates(
    x: Dataset, y: Dataset, mask: CorruptionMask, cfg: CorrectConfig, rng: SeededRng
) -> list[tuple[ImputedCandidate, DivergenceEstimate]]:
    candidates = [
        knn_impute(x, y, mask, k=min(cfg.knn_k, x.n_rows)),
        linreg_impute(x, y, mask),
        random_sample_impute(x, y, mask, rng.child(0)),
    ]
    scored = []
    for i, cand in enumerate(candidates):
        est = estimate_tv(
            x.values,
            cand.values,
            model_kind="boosted",
            k=cfg.folds,
            rng=rng.child(1 + i),
            params=cfg.boosted,
            workers=cfg.workers,
        )
        scored.append((cand, est))
    return scored


def select_initial(
    x: Dataset,
    y: Dataset,
    mask: CorruptionMask,
    cfg: CorrectConfig = CorrectConfig(),
    rng: SeededRng = SeededRng(0),
) -> tuple[ImputedCandidate, DivergenceEstimate]:
    """Pick the imputed candidate with the lowest estimated divergence.

    Ties resolve in the fixed order KNN, linear regression, random sampling.
    """
    scored = _initial_candidates(x, y, mask, cfg, rng)
    best = min(range(len(scored)), key=lambda i: scored[i][1].mean)
    return scored[best]


def detect_incorrect(reference_odds: np.ndarray) -> np.ndarray:
    """Indices of query rows to rewrite, worst first.

    ``reference_odds`` are per-row odds of being reference-like from a model
    that never saw the row. Rows with odds < 1 are classified as corrupted;
    they are sorted ascending (most corrupted first, ties by index) and
    truncated to floor(N/2), since a chance-level discriminator flags half.
    """
    r = np.asarray(reference_odds, dtype=np.float64)
    flagged = np.nonzero(r < 1.0)[0]
    order = np.lexsort((flagged, r[flagged]))
    return flagged[order][: len(r) // 2]


def build_pool(
    x: Dataset,
    lr_candidate: ImputedCandidate,
    y_current: np.ndarray,
    mask: CorruptionMask,
    n_perm: int = 1,
    rng: SeededRng = SeededRng(0),
    pool_cap: int = 50_000,
) -> ProposalPool:
    """Candidate replacement blocks for the masked columns.

    Pool = reference blocks + regression-imputed query blocks + incumbent
    query blocks + per-column-permuted reference blocks. Incumbents always
    survive the size cap so a rewrite can never lower a row's odds under a
    fixed discriminator.
    """
    cols = mask.array()
    parts = [x.values[:, cols], lr_candidate.values[:, cols], y_current[:, cols]]
    tags = (
        ["reference"] * x.n_rows
        + ["linreg"] * lr_candidate.values.shape[0]
        + ["current"] * y_current.shape[0]
    )
    gen = rng.generator()
    for _ in range(n_perm):
        parts.append(gen.permuted(x.values[:, cols], axis=0))
        tags.extend(["permutation"] * x.n_rows)
    blocks = np.vstack(parts)
    provenance = np.array(tags)

    if blocks.shape[0] > pool_cap:
        current = np.nonzero(provenance == "current")[0]
        others = np.nonzero(provenance != "current")[0]
        keep_others = min(len(others), max(0, pool_cap - len(current)))
        chosen = gen.choice(others, size=keep_others, replace=False)
        keep = np.sort(np.concatenate([current, chosen]))
        blocks = blocks[keep]
        provenance = provenance[keep]
    return ProposalPool(blocks=blocks, provenance=tuple(provenance.tolist()))


def _best_blocks(
    base_rows: np.ndarray,
    blocks: np.ndarray,
    model: BoostedModel,
    mask_cols: np.ndarray,
    tile_rows: int,
) -> np.ndarray:
    """Index of the pool block maximizing each row's reference odds.

    Tiled over pool blocks; results are identical to substituting and scoring
    one row at a time (ties resolve to the earliest pool index).
    """
    n_rows, d = base_rows.shape
    n_blocks = blocks.shape[0]
    base32 = np.ascontiguousarray(base_rows, dtype=np.float32)
    blocks32 = np.ascontiguousarray(blocks, dtype=np.float32)
    best_idx = np.zeros(n_rows, dtype=np.int64)
    best_score = np.full(n_rows, np.inf)  # minimize query-side decision score
    chunk = max(1, tile_rows // max(1, n_rows))
    buf = np.empty((chunk, n_rows, d), dtype=np.float32)
    for start in range(0, n_blocks, chunk):
        nb = min(chunk, n_blocks - start)
        view = buf[:nb]
        view[:] = base32[None, :, :]
        view[:, :, mask_cols] = blocks32[start : start + nb, None, :]
        scores = model.decision_scores(view.reshape(-1, d)).reshape(nb, n_rows)
        local = np.argmin(scores, axis=0)
        local_val = scores[local, np.arange(n_rows)]
        better = local_val < best_score
        best_idx[better] = start + local[better]
        best_score[better] = local_val[better]
    return best_idx


def best_proposal(
    y_row: np.ndarray,
    pool: ProposalPool,
    model: BoostedModel,
    mask: CorruptionMask,
    tile_rows: int = 200_000,
) -> np.ndarray:
    """The pool block giving this row the highest odds of looking reference-like.

    The model must not have trained on ``y_row``; ties go to the earliest
    pool entry.
    """
    row = np.asarray(y_row, dtype=np.float64).reshape(1, -1)
    idx = _best_blocks(row, pool.blocks, model, mask.array(), tile_rows)[0]
    return pool.blocks[idx]


def _train_epoch_discriminators(
    x: Dataset,
    y_current: np.ndarray,
    cfg: CorrectConfig,
    rng: SeededRng,
) -> tuple[list[BoostedModel], np.ndarray, np.ndarray, float]:
    """k=2 held-out boosted discriminators with permutation augmentation.

    Returns the fold models, each query row's fold (the model with that fold
    index never saw the row), per-row reference odds from the held-out model,
    and the fold-averaged divergence estimate before any rewrite.
    """
    gen = rng.child(0).generator()
    augmented = gen.permuted(x.values, axis=0)  # per-column permutation of the reference
    folds_x = kfold_indices(x.n_rows, cfg.folds, rng.child(1))
    folds_y = kfold_indices(y_current.shape[0], cfg.folds, rng.child(2))
    folds_a = kfold_indices(augmented.shape[0], cfg.folds, rng.child(3))

    models: list[BoostedModel] = []
    fold_of_row = np.zeros(y_current.shape[0], dtype=int)
    reference_odds = np.zeros(y_current.shape[0])
    per_fold = []
    for f in range(cfg.folds):
        train_x, test_x = folds_x[f]
        train_y, test_y = folds_y[f]
        train_a, _ = folds_a[f]
        query_side = np.vstack([y_current[train_y], augmented[train_a]])
        model = fit_boosted(x.values[train_x], query_side, cfg.boosted, rng.child(4 + f))
        px = model.predict_proba(x.values[test_x])
        py = model.predict_proba(y_current[test_y])
        d_fold, _ = fold_tv_from_proba(px, py)
        per_fold.append(d_fold)
        reference_odds[test_y] = 1.0 / ratio_from_proba(py)
        fold_of_row[test_y] = f
        models.append(model)
    return models, fold_of_row, reference_odds, float(np.mean(per_fold))


def correct(
    x: Dataset,
    y: Dataset,
    mask: CorruptionMask,
    cfg: CorrectConfig = CorrectConfig(),
    rng: SeededRng = SeededRng(0),
) -> CorrectReport:
    """Rewrite the masked query columns to remove the shift against the reference."""
    if x.n_cols != y.n_cols:
        raise ValueError("reference and query must have the same columns")
    mask.validate_for(x.n_cols)
    if len(mask) == 0:
        raise ValueError("mask must select at least one column")

    scored = _initial_candidates(x, y, mask, cfg, rng.child(0))
    best_i = min(range(len(scored)), key=lambda i: scored[i][1].mean)
    candidate, initial_est = scored[best_i]
    lr_candidate = scored[1][0]
    y_cur = candidate.values.copy()
    initial_d = initial_est.mean

    epochs: list[EpochRecord] = []
    converged = initial_d < cfg.epsilon
    if not converged and cfg.epochs > 0:
        mask_cols = mask.array()
        previous = initial_d
        pending: tuple[float, int] | None = None  # awaiting its post-replacement estimate
        for epoch in range(cfg.epochs):
            # retraining measures the state left by the previous replacement
            # with discriminators that never saw the rows they score
            models, fold_of_row, reference_odds, d_now = _train_epoch_discriminators(
                x, y_cur, cfg, rng.child(100 + epoch)
            )
            if pending is not None:
                epochs.append(EpochRecord(pending[0], d_now, pending[1]))
                pending = None
            if d_now < cfg.epsilon:
                converged = True
                break
            if epoch > 0 and previous - d_now < cfg.min_delta:
                break
            previous = d_now
            to_fix = detect_incorrect(reference_odds)
            pool = build_pool(
                x,
                lr_candidate,
                y_cur,
                mask,
                n_perm=cfg.n_perm,
                rng=rng.child(200 + epoch),
                pool_cap=cfg.pool_cap,
            )
            for f in range(cfg.folds):
                rows = to_fix[fold_of_row[to_fix] == f]
                if rows.size == 0:
                    continue
                chosen = _best_blocks(
                    y_cur[rows], pool.blocks, models[f], mask_cols, cfg.tile_rows
                )
                y_cur[np.ix_(rows, mask_cols)] = pool.blocks[chosen]
            pending = (d_now, len(to_fix))
        if pending is not None:
            final_est = estimate_tv(
                x.values,
                y_cur,
                model_kind="boosted",
                k=cfg.folds,
                rng=rng.child(300),
                params=cfg.boosted,
                workers=cfg.workers,
            )
            epochs.append(EpochRecord(pending[0], final_est.mean, pending[1]))
            converged = final_est.mean < cfg.epsilon

    return CorrectReport(
        corrected=y.with_values(y_cur),
        initial_method=candidate.method,
        initial_d_hat=initial_d,
        epochs=tuple(epochs),
        converged=converged,
    )


def save_report_json(report: CorrectReport, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
