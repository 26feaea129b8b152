"""Binary tree-ensemble discriminators: bagged forest and gradient-boosted trees.

Both models expose class-1 probabilities (label 0 = reference rows, label 1 =
query rows), likelihood ratios r = p/(1-p), and, for the forest, normalized
mean-decrease-of-impurity feature importances. Single-tree fitting is
delegated to scikit-learn's CART implementation; bagging, probability
averaging, importance aggregation, and the boosting loop (logistic loss with
Newton leaf values) live here.

Because label 1 is the query side, r < 1 means "looks like reference". The
correction pipeline relies on this orientation when ranking query samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.tree import DecisionTreeRegressor

from .data import SeededRng

PROB_CLIP = 1e-6  # keeps likelihood ratios finite
_RIDGE = 1e-6  # hessian regularizer for Newton leaf values


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    max_features: str | int | float = "sqrt"
    bootstrap: bool = True
    n_jobs: int = 1


@dataclass(frozen=True)
class BoostedParams:
    n_rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 6


@dataclass
class ForestModel:
    """Bagged classification trees with aggregated Gini importances."""

    trees: list
    importances: np.ndarray
    n_features: int
    params: ForestParams = field(default_factory=ForestParams)

    def predict_proba(self, rows: np.ndarray) -> np.ndarray:
        rows = _check_rows(rows, self.n_features)
        acc = np.zeros(rows.shape[0])
        for tree in self.trees:
            proba = tree.predict_proba(rows)
            # column index of class 1 within this tree (single-class trees
            # can occur on degenerate bootstrap samples)
            cls = list(tree.classes_)
            acc += proba[:, cls.index(1)] if 1 in cls else 0.0
        return acc / len(self.trees)


@dataclass
class BoostedModel:
    """Gradient-boosted regression trees on log-odds, logistic loss."""

    trees: list
    learning_rate: float
    base_score: float
    n_features: int
    params: BoostedParams = field(default_factory=BoostedParams)
    train_loss: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def decision_scores(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows)
        if rows.ndim == 1:
            rows = rows[None, :]
        if rows.shape[1] != self.n_features:
            raise ValueError(
                f"row width {rows.shape[1]} does not match model width {self.n_features}"
            )
        score = np.full(rows.shape[0], self.base_score)
        if not self.trees:
            return score
        # float32 is scikit-learn's tree dtype; keeping it avoids copying the
        # large substitution tiles built by the correction loop
        rows32 = np.ascontiguousarray(rows, dtype=np.float32)
        for tree in self.trees:
            score += self.learning_rate * _raw_tree_values(tree, rows32)
        return score

    def predict_proba(self, rows: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision_scores(rows))


def _check_rows(rows: np.ndarray, d: int) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[1] != d:
        raise ValueError(f"row width {rows.shape[1]} does not match model width {d}")
    return rows


def _raw_tree_values(tree, rows32: np.ndarray) -> np.ndarray:
    # leaf-value lookup through the low-level apply path; avoids per-call
    # input validation, which dominates when scoring millions of rows
    leaves = tree.tree_.apply(rows32)
    return tree.tree_.value[leaves, 0, 0]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _validate_two_class(x_rows: np.ndarray, y_rows: np.ndarray) -> None:
    if x_rows.ndim != 2 or y_rows.ndim != 2:
        raise ValueError("training inputs must be 2-D row matrices")
    if x_rows.shape[0] == 0 or y_rows.shape[0] == 0:
        raise ValueError("both classes must be non-empty")
    if x_rows.shape[1] != y_rows.shape[1]:
        raise ValueError("reference and query must have the same number of columns")
    if x_rows.shape[1] == 0:
        raise ValueError("cannot train on zero features")


def fit_forest(
    x_rows: np.ndarray,
    y_rows: np.ndarray,
    params: ForestParams = ForestParams(),
    rng: SeededRng = SeededRng(0),
) -> ForestModel:
    """Train a random forest to separate reference rows (0) from query rows (1).

    Gini splits, bootstrap resampling per tree, sqrt(d) features per split by
    default; importances are the forest-averaged normalized mean decrease of
    impurity. Deterministic under the given rng.
    """
    x_rows = np.asarray(x_rows, dtype=np.float64)
    y_rows = np.asarray(y_rows, dtype=np.float64)
    _validate_two_class(x_rows, y_rows)
    data = np.vstack([x_rows, y_rows])
    labels = np.concatenate([np.zeros(len(x_rows), dtype=int), np.ones(len(y_rows), dtype=int)])
    rf = RandomForestClassifier(
        n_estimators=params.n_trees,
        criterion="gini",
        max_depth=params.max_depth,
        min_samples_split=params.min_samples_split,
        max_features=params.max_features,
        bootstrap=params.bootstrap,
        random_state=rng.int32(),
        n_jobs=params.n_jobs,
    )
    rf.fit(data, labels)
    return ForestModel(
        trees=list(rf.estimators_),
        importances=np.asarray(rf.feature_importances_, dtype=np.float64),
        n_features=data.shape[1],
        params=params,
    )


def fit_boosted(
    x_rows: np.ndarray,
    y_rows: np.ndarray,
    params: BoostedParams = BoostedParams(),
    rng: SeededRng = SeededRng(0),
) -> BoostedModel:
    """Train gradient-boosted trees (logistic loss) on reference vs query rows.

    Each round fits a depth-limited regression tree to the loss gradient and
    replaces its leaf values with Newton steps sum(g)/sum(h); predictions are
    sigmoid(base_score + lr * sum of tree outputs).
    """
    x_rows = np.asarray(x_rows, dtype=np.float64)
    y_rows = np.asarray(y_rows, dtype=np.float64)
    _validate_two_class(x_rows, y_rows)
    data = np.ascontiguousarray(np.vstack([x_rows, y_rows]), dtype=np.float32)
    labels = np.concatenate([np.zeros(len(x_rows)), np.ones(len(y_rows))])

    p1 = np.clip(labels.mean(), PROB_CLIP, 1 - PROB_CLIP)
    base = float(np.log(p1 / (1 - p1)))
    score = np.full(len(labels), base)
    gen = rng.generator()
    trees = []
    losses = np.empty(params.n_rounds + 1)
    losses[0] = _logloss(labels, score)
    for round_idx in range(params.n_rounds):
        p = _sigmoid(score)
        residual = labels - p
        hessian = p * (1 - p)
        tree = DecisionTreeRegressor(
            max_depth=params.max_depth,
            random_state=int(gen.integers(0, 2**31 - 1)),
        )
        tree.fit(data, residual)
        leaves = tree.tree_.apply(data)
        num = np.bincount(leaves, weights=residual, minlength=tree.tree_.node_count)
        den = np.bincount(leaves, weights=hessian, minlength=tree.tree_.node_count)
        newton = num / (den + _RIDGE)
        tree.tree_.value[:, 0, 0] = newton
        score = score + params.learning_rate * newton[leaves]
        trees.append(tree)
        losses[round_idx + 1] = _logloss(labels, score)

    return BoostedModel(
        trees=trees,
        learning_rate=params.learning_rate,
        base_score=base,
        n_features=data.shape[1],
        params=params,
        train_loss=losses,
    )


def _logloss(labels: np.ndarray, score: np.ndarray) -> float:
    p = np.clip(_sigmoid(score), PROB_CLIP, 1 - PROB_CLIP)
    return float(-np.mean(labels * np.log(p) + (1 - labels) * np.log(1 - p)))


def predict_proba(model: ForestModel | BoostedModel, rows: np.ndarray) -> np.ndarray:
    """P(class = 1) per row; forest = mean of tree leaf probabilities,
    boosted = sigmoid of the additive score."""
    return model.predict_proba(rows)


def likelihood_ratio(model: ForestModel | BoostedModel, rows: np.ndarray) -> np.ndarray:
    """r = p/(1-p) with probabilities clipped to [1e-6, 1-1e-6].

    r > 1 means the row looks like query, r < 1 like reference.
    """
    p = np.clip(predict_proba(model, rows), PROB_CLIP, 1 - PROB_CLIP)
    return p / (1 - p)


def ratio_from_proba(proba: np.ndarray) -> np.ndarray:
    p = np.clip(np.asarray(proba, dtype=np.float64), PROB_CLIP, 1 - PROB_CLIP)
    return p / (1 - p)


def dump_model_json(model: ForestModel | BoostedModel, path: str | Path) -> None:
    """Debug dump of tree node arrays (split feature, threshold, children, value)."""
    payload = {"kind": type(model).__name__, "n_features": model.n_features, "trees": []}
    if isinstance(model, BoostedModel):
        payload["base_score"] = model.base_score
        payload["learning_rate"] = model.learning_rate
    for tree in model.trees:
        t = tree.tree_
        payload["trees"].append(
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.children_left.tolist(),
                "right": t.children_right.tolist(),
                "value": t.value[:, 0, :].tolist(),
            }
        )
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")
