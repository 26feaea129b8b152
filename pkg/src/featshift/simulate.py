"""Probabilistic dataset pairs with known corrupted columns and exact densities.

Fifteen reference/query generator pairs cover mean, scale, and correlation
shifts over multivariate Gaussians (optionally pushed through exp or sigmoid),
independent Bernoulli vectors, and three-component Gaussian/Bernoulli
mixtures. Non-corrupted columns share identical parameters across the pair,
so any divergence is attributable to the masked block. Because both densities
are available in closed form, a Monte Carlo oracle for the true total
variation distance is provided for end-to-end verification.

Correlated families draw their covariance from a squared-exponential kernel
over shuffled per-column latent positions i/d, so correlation structure does
not follow column order; the scale s controls the correlation length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp, xlogy

from .data import CorruptionMask, Dataset, FeatureKind, SeededRng

_JITTER = 1e-9  # keeps near-singular kernel matrices factorizable
_LOG_2PI = float(np.log(2.0 * np.pi))

# dataset id -> (family, transform, kernel scale s, shift kind, shift value)
_DATASET_TABLE: dict[int, tuple[str, str | None, float | None, str, float]] = {
    1: ("gauss", "identity", None, "mean", 0.5),
    2: ("gauss", "identity", None, "scale", 1.5),
    3: ("gauss", "identity", 0.05, "mean", 0.5),
    4: ("gauss", "exp", 0.05, "mean", 0.5),
    5: ("gauss", "exp", 0.002, "decorrelate", 0.0),
    6: ("gauss", "sigmoid", 0.05, "mean", 0.5),
    7: ("gauss", "sigmoid", 0.002, "decorrelate", 0.0),
    8: ("gauss", "sigmoid", 0.002, "crossblock", 0.0),
    9: ("bernoulli", None, None, "mean", 0.05),
    10: ("bernoulli", None, None, "mean", 0.1),
    11: ("bernoulli", None, None, "mean", 0.5),
    12: ("bernoulli", None, None, "mean", 1.0),
    13: ("gmm", None, 0.3, "mean", 10.0),
    14: ("bmm", None, None, "collapse", 0.0),
    15: ("bmm", None, None, "mean", 0.2),
}


@dataclass
class SimSpec:
    dataset_id: int
    d: int
    n_corrupted: int
    shuffle_seed: int
    family: str
    transform: str | None
    s: float | None
    mask: CorruptionMask
    params: dict

    def to_json_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "d": self.d,
            "n_corrupted": self.n_corrupted,
            "shuffle_seed": self.shuffle_seed,
            "family": self.family,
            "transform": self.transform,
            "kernel_scale": self.s,
            "mask": list(self.mask.indices),
        }


@dataclass
class DensityHandle:
    """Closed-form log densities for the pair plus samplers for both sides."""

    logpdf_p: Callable[[np.ndarray], np.ndarray]
    logpdf_q: Callable[[np.ndarray], np.ndarray]
    sample_p: Callable[[int, SeededRng], np.ndarray]
    sample_q: Callable[[int, SeededRng], np.ndarray]


def kernel_covariance(d: int, s: float, rng: SeededRng) -> np.ndarray:
    """Squared-exponential kernel over shuffled latent positions i/d.

    Unit diagonal up to the 1e-9 jitter that keeps Cholesky viable when the
    correlation length approaches the full index range.
    """
    coords = rng.generator().permutation(d) / d
    diff = coords[:, None] - coords[None, :]
    cov = np.exp(-(diff**2) / s)
    return cov + _JITTER * np.eye(d)


def build_spec(dataset_id: int, d: int, n_corrupted: int, shuffle_seed: int = 0) -> SimSpec:
    """Resolve one of the 15 generator pairs at the requested size."""
    if dataset_id not in _DATASET_TABLE:
        raise ValueError(f"unknown dataset id {dataset_id}; expected 1..15")
    if n_corrupted < 1:
        raise ValueError("need at least one corrupted column")
    if n_corrupted >= d - n_corrupted:
        raise ValueError("corrupted columns must be fewer than non-corrupted ones")
    family, transform, s, shift_kind, shift = _DATASET_TABLE[dataset_id]
    rng = SeededRng(shuffle_seed)
    mask_cols = np.sort(rng.child(1).generator().choice(d, size=n_corrupted, replace=False))
    mask = CorruptionMask.from_indices(mask_cols.tolist())
    corrupted = mask.array()

    if family == "gauss":
        cov_p = kernel_covariance(d, s, rng.child(0)) if s is not None else np.eye(d)
        mean_q = np.zeros(d)
        cov_q = cov_p
        if shift_kind == "mean":
            mean_q = np.zeros(d)
            mean_q[corrupted] = shift
        elif shift_kind == "scale":
            cov_q = cov_p.copy()
            cov_q[corrupted, corrupted] = shift
        elif shift_kind == "decorrelate":
            # corrupted columns lose all correlation, marginals unchanged
            cov_q = cov_p.copy()
            cov_q[corrupted, :] = 0.0
            cov_q[:, corrupted] = 0.0
            cov_q[corrupted, corrupted] = 1.0 + _JITTER
        elif shift_kind == "crossblock":
            # within-block correlation kept on both sides, cross-block zeroed
            other = mask.complement(d)
            cov_q = cov_p.copy()
            cov_q[np.ix_(corrupted, other)] = 0.0
            cov_q[np.ix_(other, corrupted)] = 0.0
        params = {"mean_p": np.zeros(d), "mean_q": mean_q, "cov_p": cov_p, "cov_q": cov_q}
    elif family == "bernoulli":
        latent = rng.child(2).generator().standard_normal(d) * np.sqrt(2.0)
        freq_p = _sigmoid(latent)
        eps = rng.child(3).generator().standard_normal(n_corrupted)
        freq_q = freq_p.copy()
        freq_q[corrupted] = np.clip(freq_p[corrupted] + shift * eps, 0.0, 1.0)
        params = {"freq_p": freq_p, "freq_q": freq_q}
    elif family == "gmm":
        cov = kernel_covariance(d, s, rng.child(0))
        means_p = rng.child(4).generator().standard_normal((3, d)) * 0.1
        means_q = means_p.copy()
        means_q[0, corrupted] += shift
        params = {"means_p": means_p, "means_q": means_q, "cov": cov}
    else:  # bmm
        freqs_p = rng.child(5).generator().random((3, d))
        freqs_q = freqs_p.copy()
        if shift_kind == "collapse":
            freqs_q[:, corrupted] = freqs_p[:, corrupted].mean(axis=0)[None, :]
        else:
            freqs_q[0, corrupted] = np.clip(freqs_p[0, corrupted] + shift, 0.0, 1.0)
        params = {"freqs_p": freqs_p, "freqs_q": freqs_q}

    return SimSpec(
        dataset_id=dataset_id,
        d=d,
        n_corrupted=n_corrupted,
        shuffle_seed=shuffle_seed,
        family=family,
        transform=transform,
        s=s,
        mask=mask,
        params=params,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# density building blocks


class _GaussianDensity:
    def __init__(self, mean: np.ndarray, cov: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.chol = np.linalg.cholesky(np.asarray(cov, dtype=np.float64))
        self.log_det = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        self.d = self.mean.size

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        centered = (np.atleast_2d(x) - self.mean).T
        z = solve_triangular(self.chol, centered, lower=True)
        quad = np.einsum("ij,ij->j", z, z)
        return -0.5 * (self.d * _LOG_2PI + self.log_det + quad)

    def sample(self, n: int, rng: SeededRng) -> np.ndarray:
        z = rng.generator().standard_normal((n, self.d))
        return self.mean + z @ self.chol.T


def _transformed_logpdf(gauss: _GaussianDensity, transform: str, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    if transform == "identity":
        return gauss.logpdf(x)
    out = np.full(x.shape[0], -np.inf)
    if transform == "exp":
        valid = (x > 0).all(axis=1)
        if valid.any():
            logs = np.log(x[valid])
            out[valid] = gauss.logpdf(logs) - logs.sum(axis=1)
        return out
    if transform == "sigmoid":
        valid = ((x > 0) & (x < 1)).all(axis=1)
        if valid.any():
            xv = x[valid]
            logit = np.log(xv) - np.log1p(-xv)
            log_jac = np.log(xv) + np.log1p(-xv)  # log x(1-x) per column
            out[valid] = gauss.logpdf(logit) - log_jac.sum(axis=1)
        return out
    raise ValueError(f"unknown transform {transform!r}")


def _apply_transform(transform: str, v: np.ndarray) -> np.ndarray:
    if transform == "identity":
        return v
    if transform == "exp":
        return np.exp(v)
    if transform == "sigmoid":
        return _sigmoid(v)
    raise ValueError(f"unknown transform {transform!r}")


def _bernoulli_logpdf(freq: np.ndarray, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return xlogy(x, freq[None, :]).sum(axis=1) + xlogy(1.0 - x, 1.0 - freq[None, :]).sum(axis=1)


def make_gaussian_handle(
    mean_p: np.ndarray,
    cov_p: np.ndarray,
    mean_q: np.ndarray,
    cov_q: np.ndarray,
    transform: str = "identity",
) -> DensityHandle:
    """Handle for a Gaussian pair, optionally pushed through exp or sigmoid."""
    gp = _GaussianDensity(mean_p, cov_p)
    gq = _GaussianDensity(mean_q, cov_q)
    return DensityHandle(
        logpdf_p=lambda x: _transformed_logpdf(gp, transform, x),
        logpdf_q=lambda x: _transformed_logpdf(gq, transform, x),
        sample_p=lambda n, rng: _apply_transform(transform, gp.sample(n, rng)),
        sample_q=lambda n, rng: _apply_transform(transform, gq.sample(n, rng)),
    )


def make_bernoulli_handle(freq_p: np.ndarray, freq_q: np.ndarray) -> DensityHandle:
    def sample(freq, n, rng):
        return (rng.generator().random((n, freq.size)) < freq[None, :]).astype(np.float64)

    return DensityHandle(
        logpdf_p=lambda x: _bernoulli_logpdf(freq_p, x),
        logpdf_q=lambda x: _bernoulli_logpdf(freq_q, x),
        sample_p=lambda n, rng: sample(freq_p, n, rng),
        sample_q=lambda n, rng: sample(freq_q, n, rng),
    )


def make_gmm_handle(means_p: np.ndarray, means_q: np.ndarray, cov: np.ndarray) -> DensityHandle:
    comps_p = [_GaussianDensity(m, cov) for m in means_p]
    comps_q = [_GaussianDensity(m, cov) for m in means_q]

    def logpdf(comps, x):
        stacked = np.stack([c.logpdf(x) for c in comps])
        return logsumexp(stacked, axis=0) - np.log(len(comps))

    def sample(comps, n, rng):
        picks = rng.child(0).generator().integers(0, len(comps), size=n)
        out = np.empty((n, comps[0].d))
        for k, comp in enumerate(comps):
            rows = np.nonzero(picks == k)[0]
            if rows.size:
                out[rows] = comp.sample(rows.size, rng.child(1 + k))
        return out

    return DensityHandle(
        logpdf_p=lambda x: logpdf(comps_p, x),
        logpdf_q=lambda x: logpdf(comps_q, x),
        sample_p=lambda n, rng: sample(comps_p, n, rng),
        sample_q=lambda n, rng: sample(comps_q, n, rng),
    )


def make_bmm_handle(freqs_p: np.ndarray, freqs_q: np.ndarray) -> DensityHandle:
    def logpdf(freqs, x):
        stacked = np.stack([_bernoulli_logpdf(f, x) for f in freqs])
        return logsumexp(stacked, axis=0) - np.log(len(freqs))

    def sample(freqs, n, rng):
        picks = rng.child(0).generator().integers(0, len(freqs), size=n)
        uniforms = rng.child(1).generator().random((n, freqs.shape[1]))
        return (uniforms < freqs[picks]).astype(np.float64)

    return DensityHandle(
        logpdf_p=lambda x: logpdf(freqs_p, x),
        logpdf_q=lambda x: logpdf(freqs_q, x),
        sample_p=lambda n, rng: sample(freqs_p, n, rng),
        sample_q=lambda n, rng: sample(freqs_q, n, rng),
    )


def make_density_handle(spec: SimSpec) -> DensityHandle:
    p = spec.params
    if spec.family == "gauss":
        return make_gaussian_handle(
            p["mean_p"], p["cov_p"], p["mean_q"], p["cov_q"], transform=spec.transform
        )
    if spec.family == "bernoulli":
        return make_bernoulli_handle(p["freq_p"], p["freq_q"])
    if spec.family == "gmm":
        return make_gmm_handle(p["means_p"], p["means_q"], p["cov"])
    return make_bmm_handle(p["freqs_p"], p["freqs_q"])


def sample_pair(
    spec: SimSpec, n_ref: int, n_query: int, rng: SeededRng = SeededRng(0)
) -> tuple[Dataset, Dataset, CorruptionMask]:
    """Draw (reference, query, ground-truth mask) from the generator pair."""
    if n_ref < 1 or n_query < 1:
        raise ValueError("sample sizes must be positive")
    handle = make_density_handle(spec)
    x_vals = handle.sample_p(n_ref, rng.child(0))
    y_vals = handle.sample_q(n_query, rng.child(1))
    if spec.family in ("bernoulli", "bmm"):
        kinds = (FeatureKind.CATEGORICAL,) * spec.d
    else:
        kinds = (FeatureKind.CONTINUOUS,) * spec.d
    names = tuple(f"x{j}" for j in range(spec.d))
    return Dataset(x_vals, kinds, names), Dataset(y_vals, kinds, names), spec.mask


@dataclass(frozen=True)
class MonteCarloTV:
    estimate: float
    std_error: float


def mc_tv_oracle(
    handle: DensityHandle, n_mc: int, rng: SeededRng = SeededRng(0), chunk: int = 100_000
) -> MonteCarloTV:
    """Monte Carlo estimate of D_TV(p, q) = E_p[max(0, 1 - q(x)/p(x))].

    One-sided positive-part form, unbiased for exact densities; q-density
    zeros under p-samples contribute 1.
    """
    if n_mc < 2:
        raise ValueError("need at least two draws")
    total = 0.0
    total_sq = 0.0
    done = 0
    i = 0
    while done < n_mc:
        n = min(chunk, n_mc - done)
        x = handle.sample_p(n, rng.child(i))
        log_ratio = handle.logpdf_q(x) - handle.logpdf_p(x)
        term = -np.expm1(np.minimum(log_ratio, 0.0))  # max(0, 1 - q/p)
        total += float(term.sum())
        total_sq += float((term**2).sum())
        done += n
        i += 1
    mean = total / n_mc
    var = max(total_sq / n_mc - mean**2, 0.0)
    return MonteCarloTV(estimate=mean, std_error=float(np.sqrt(var / n_mc)))
