"""Iterative feature-shift localization.

Each iteration trains k-fold forest discriminators, estimates the empirical
total-variation distance, converts the fold-averaged Gini importances into a
set of suspect columns through the removal policy, drops those columns, and
repeats until the estimate falls to the noise floor, half of the columns are
gone, or the policy returns nothing. A refinement pass then re-examines the
divergence-vs-removed-count curve (smoothed, forced non-increasing) and cuts
the removal history at its knee, discarding the trailing iterations that only
chased estimator noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import savgol_filter

from .data import CorruptionMask, Dataset, SeededRng
from .divergence import run_folds
from .trees import ForestParams


@dataclass(frozen=True)
class RefineConfig:
    zeta: float = 2.0  # window = max(5, 2*floor(zeta*delta/2)+1)
    polyorder: int = 4
    sensitivity: float = 5.0
    # a curve whose full dynamic range stays below this is estimator noise;
    # refining it to the empty mask beats keeping arbitrary removals
    flat_tol: float = 0.05


@dataclass(frozen=True)
class LocateConfig:
    tau: float = 0.1
    epsilon: float = 0.02
    folds: int = 5
    max_removed_frac: float = 0.5
    forest: ForestParams = field(default_factory=ForestParams)
    refine: RefineConfig = field(default_factory=RefineConfig)
    workers: int = 1


@dataclass(frozen=True)
class LocateIteration:
    removed: tuple[int, ...]  # original column indices dropped this iteration
    d_hat: float  # clamped estimate measured before the removal
    d_hat_raw: float
    cum_removed_before: int


@dataclass(frozen=True)
class LocateTrace:
    iterations: tuple[LocateIteration, ...]
    final_d_hat: float | None  # measurement taken after the last removal, if any
    final_d_hat_raw: float | None
    stop_reason: str

    def curve(self) -> tuple[np.ndarray, np.ndarray]:
        """(cumulative removed, clamped divergence) points, in measurement order."""
        xs = [it.cum_removed_before for it in self.iterations]
        ys = [it.d_hat for it in self.iterations]
        if self.final_d_hat is not None:
            xs.append(self.total_removed())
            ys.append(self.final_d_hat)
        return np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)

    def total_removed(self) -> int:
        return sum(len(it.removed) for it in self.iterations)


@dataclass(frozen=True)
class LocateReport:
    trace: LocateTrace
    raw_mask: CorruptionMask
    refined_mask: CorruptionMask

    def to_json_dict(self) -> dict:
        return {
            "iterations": [
                {
                    "removed": list(it.removed),
                    "d_hat": it.d_hat_raw,
                    "cum_removed": it.cum_removed_before,
                }
                for it in self.trace.iterations
            ],
            "initial_d_hat": (
                self.trace.iterations[0].d_hat_raw
                if self.trace.iterations
                else self.trace.final_d_hat_raw
            ),
            "final_d_hat": self.trace.final_d_hat_raw,
            "stop_reason": self.trace.stop_reason,
            "raw_mask": list(self.raw_mask.indices),
            "refined_mask": list(self.refined_mask.indices),
        }


# ---------------------------------------------------------------------------
# removal policy


def feature_removal_policy(beta: np.ndarray, d_hat: float, tau: float) -> CorruptionMask:
    """Select suspect columns from importance scores and the current estimate.

    Normalizes |beta| to sum 1, sorts descending (ties toward the lower
    index), takes the shortest prefix whose cumulative mass reaches
    tau * d_hat, and keeps the prefix members whose individual share strictly
    exceeds 1/d.
    """
    beta = np.abs(np.asarray(beta, dtype=np.float64))
    d = beta.size
    if d == 0:
        raise ValueError("empty importance vector")
    total = beta.sum()
    if total == 0:
        return CorruptionMask(())
    share = beta / total
    order = np.argsort(-share, kind="stable")
    cumulative = np.cumsum(share[order])
    threshold = tau * d_hat
    reached = np.nonzero(cumulative >= threshold)[0]
    j = int(reached[0]) if reached.size else d - 1
    prefix = order[: j + 1]
    keep = prefix[share[prefix] > 1.0 / d]
    return CorruptionMask.from_indices(keep.tolist())


# ---------------------------------------------------------------------------
# curve processing


def savitzky_golay(y: np.ndarray, window: int, polyorder: int) -> np.ndarray:
    """Least-squares local polynomial smoothing with polynomial-preserving edges.

    Inputs shorter than the window are edge-replicated up to the window length
    before filtering and cropped back afterwards.
    """
    y = np.asarray(y, dtype=np.float64)
    if window % 2 == 0 or window < 1:
        raise ValueError("window must be a positive odd integer")
    if polyorder >= window:
        raise ValueError("polyorder must be smaller than the window")
    if y.ndim != 1 or y.size == 0:
        raise ValueError("y must be a non-empty 1-D array")
    n = y.size
    if n >= window:
        return savgol_filter(y, window_length=window, polyorder=polyorder, mode="interp")
    pad_left = (window - n + 1) // 2
    pad_right = window - n - pad_left
    padded = np.pad(y, (pad_left, pad_right), mode="edge")
    smoothed = savgol_filter(padded, window_length=window, polyorder=polyorder, mode="interp")
    return smoothed[pad_left : pad_left + n]


def enforce_nonincreasing(y: np.ndarray) -> np.ndarray:
    """Remove local maxima: grey opening (size 3) followed by a running minimum.

    The opening keeps boundary values fixed so already non-increasing curves
    pass through unchanged; interior points are clipped against the
    erode-then-dilate envelope. Output is pointwise <= input and
    non-increasing.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("empty curve")
    if y.size >= 3:
        eroded = y.copy()
        eroded[1:-1] = np.minimum(np.minimum(y[:-2], y[1:-1]), y[2:])
        opened = eroded.copy()
        opened[1:-1] = np.maximum(np.maximum(eroded[:-2], eroded[1:-1]), eroded[2:])
        y = np.minimum(y, opened)
    return np.minimum.accumulate(y)


def find_knee(x: np.ndarray, y: np.ndarray, sensitivity: float = 5.0) -> int:
    """Knee of a convex non-increasing curve (Kneedle, offline mode).

    The curve is normalized to the unit square and flipped to concave
    increasing; the knee is the first local maximum of the difference curve
    confirmed by a drop below its sensitivity threshold. Returns the last
    index when no knee is confirmed and 0 for a flat curve.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    if n < 3 or x.size != n:
        raise ValueError("need at least 3 aligned curve points")
    y_range = y.max() - y.min()
    x_range = x.max() - x.min()
    if y_range == 0 or x_range == 0:
        return 0
    x_n = (x - x.min()) / x_range
    y_n = (y - y.min()) / y_range
    diff = (1.0 - y_n) - x_n

    threshold_step = sensitivity * np.mean(np.diff(x_n))
    candidate = None
    threshold = -np.inf
    for i in range(1, n):
        is_local_max = i < n - 1 and diff[i] >= diff[i - 1] and diff[i] >= diff[i + 1]
        if is_local_max and (candidate is None or diff[i] > diff[candidate]):
            candidate = i
            threshold = diff[i] - threshold_step
        elif candidate is not None and diff[i] < threshold:
            return candidate
    return n - 1


def refine(trace: LocateTrace, cfg: RefineConfig = RefineConfig()) -> CorruptionMask:
    """Cut the removal history at the knee of the processed divergence curve.

    Returns the union of the per-iteration masks up to and including the knee
    iteration. Curves whose whole dynamic range sits below ``flat_tol`` are
    treated as estimator noise and refine to the empty mask.
    """
    iterations = trace.iterations
    if not iterations:
        return CorruptionMask(())
    x, y = trace.curve()
    if y.max() - y.min() <= cfg.flat_tol:
        return CorruptionMask(())
    if x.size < 3:
        return _union_masks(iterations)

    removals = [len(it.removed) for it in iterations]
    delta = float(np.mean(removals))
    window = max(5, 2 * int(np.floor(cfg.zeta * delta / 2.0)) + 1)
    smoothed = savitzky_golay(y, window, cfg.polyorder)
    monotone = enforce_nonincreasing(smoothed)
    knee = find_knee(x, monotone, cfg.sensitivity)
    return _union_masks(iterations[: knee + 1])


def _union_masks(iterations) -> CorruptionMask:
    union: set[int] = set()
    for it in iterations:
        union.update(it.removed)
    return CorruptionMask.from_indices(union)


# ---------------------------------------------------------------------------
# main loop


def locate(
    x: Dataset,
    y: Dataset,
    cfg: LocateConfig = LocateConfig(),
    rng: SeededRng = SeededRng(0),
) -> LocateReport:
    """Run the iterative localization loop and refinement; see module docstring."""
    if x.n_cols != y.n_cols:
        raise ValueError("reference and query must have the same columns")
    if x.kinds != y.kinds:
        raise ValueError("reference and query column kinds differ")
    d = x.n_cols
    if d < 2:
        raise ValueError("need at least two columns to localize a shift")

    alive = np.arange(d)
    x_vals = x.values
    y_vals = y.values
    iterations: list[LocateIteration] = []
    cum_removed = 0
    final_d = None
    final_raw = None
    stop_reason = "max_removed"
    max_removed = int(np.floor(d * cfg.max_removed_frac))

    for step in range(d + 1):
        if cum_removed >= max_removed:
            stop_reason = "max_removed"
            break
        estimate, beta = run_folds(
            x_vals[:, alive],
            y_vals[:, alive],
            model_kind="forest",
            k=cfg.folds,
            rng=rng.child(step),
            params=cfg.forest,
            workers=cfg.workers,
        )
        d_hat = estimate.policy_value
        if d_hat <= cfg.epsilon:
            final_d, final_raw = d_hat, estimate.mean
            stop_reason = "epsilon"
            break
        selected = feature_removal_policy(beta, d_hat, cfg.tau)
        if len(selected) == 0:
            final_d, final_raw = d_hat, estimate.mean
            stop_reason = "policy_empty"
            break
        removed_original = tuple(int(alive[j]) for j in selected.indices)
        iterations.append(
            LocateIteration(
                removed=removed_original,
                d_hat=d_hat,
                d_hat_raw=estimate.mean,
                cum_removed_before=cum_removed,
            )
        )
        alive = np.delete(alive, selected.array())
        cum_removed += len(selected)

    trace = LocateTrace(
        iterations=tuple(iterations),
        final_d_hat=final_d,
        final_d_hat_raw=final_raw,
        stop_reason=stop_reason,
    )
    raw_mask = _union_masks(iterations)
    refined = refine(trace, cfg.refine)
    return LocateReport(trace=trace, raw_mask=raw_mask, refined_mask=refined)


# ---------------------------------------------------------------------------
# report output


def save_report_json(report: LocateReport, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def curve_svg(report: LocateReport, cfg: RefineConfig = RefineConfig()) -> str:
    """Divergence-vs-removed-features curve with the knee marked, as an SVG string."""
    x, y = report.trace.curve()
    width, height, margin = 480, 320, 45
    if x.size == 0:
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
            "<text x='20' y='30'>empty trace</text></svg>"
        )
    x_max = max(float(x.max()), 1.0)
    span_w = width - 2 * margin
    span_h = height - 2 * margin

    def sx(v):
        return margin + span_w * v / x_max

    def sy(v):
        return height - margin - span_h * min(max(v, 0.0), 1.0)

    points = " ".join(f"{sx(xi):.2f},{sy(yi):.2f}" for xi, yi in zip(x, y))
    # the refined mask is the union of removals up to the knee, so its size
    # is the knee's cumulative-removed coordinate
    knee_cum = len(report.refined_mask)
    knee_y = float(np.interp(knee_cum, x, y))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<polyline fill="none" stroke="steelblue" stroke-width="2" points="{points}"/>',
        f'<circle cx="{sx(knee_cum):.2f}" cy="{sy(knee_y):.2f}" r="5" fill="crimson"/>',
        f'<text x="{width / 2 - 60:.0f}" y="{height - 8}">features removed</text>',
        f'<text x="10" y="{margin - 10}">empirical TV</text>',
        "</svg>",
    ]
    return "\n".join(parts)


def save_curve_svg(report: LocateReport, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(curve_svg(report))
        fh.write("\n")
