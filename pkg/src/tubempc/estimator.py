"""Nonparametric dynamics estimation.

Local linear regression with an Epanechnikov kernel gives a point
estimate of the unknown transition map; bootstrap resampling of the
dataset gives component-wise percentile bands around it.  The band union
over a region grid (in deviation form) is the worst-case estimation
spread attached to each local model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import Box
from .errors import EstimationError, UsageError
from .plant import STREAM_BOOTSTRAP, Dataset, substream

_MAX_DOUBLINGS = 64


@dataclass(frozen=True)
class KernelSpec:
    """Kernel and regularization settings for the local fits.

    bandwidth None means the rate-motivated default
    2 * (data diameter) / M^(1/(n+4)) computed per dataset.
    """

    bandwidth: float | None = None
    min_support: int = 3
    ridge: float = 1e-8

    def __post_init__(self):
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise UsageError("bandwidth must be positive")
        if self.min_support < 2:
            raise UsageError("min_support must be at least 2")
        if self.ridge < 0:
            raise UsageError("ridge must be nonnegative")


@dataclass(frozen=True)
class LocalFit:
    """Affine fit y ~ a_hat + A_hat x around one query point."""

    a_hat: np.ndarray       # (n,)
    A_hat: np.ndarray       # (n, n)
    query: np.ndarray       # (n,)
    effective_support: int
    bandwidth_used: float


@dataclass(frozen=True)
class ConfidenceBand:
    """Component-wise bootstrap percentile interval at one query."""

    query: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    replicates: int
    widened: bool = False   # True if interval had to stretch to cover the
    #                         point estimate (degenerate resamples)


def epanechnikov_weight(x_query, x_j, bandwidth: float) -> float:
    if bandwidth <= 0:
        raise UsageError("bandwidth must be positive")
    d = np.linalg.norm(np.atleast_1d(x_query) - np.atleast_1d(x_j))
    return max(0.0, 0.75 * (1.0 - (d / bandwidth) ** 2))


def default_bandwidth(data: Dataset) -> float:
    span = data.x.max(axis=0) - data.x.min(axis=0)
    diameter = float(np.linalg.norm(span))
    if diameter == 0.0:
        diameter = 1.0
    return 2.0 * diameter / len(data) ** (1.0 / (data.n + 4))


def _weights(data: Dataset, query: np.ndarray, bandwidth: float) -> np.ndarray:
    d2 = np.sum((data.x - query) ** 2, axis=1)
    return np.maximum(0.0, 0.75 * (1.0 - d2 / bandwidth**2))


def _resolve_bandwidth(data: Dataset, query: np.ndarray, spec: KernelSpec):
    """Initial bandwidth, doubled until min_support points carry weight."""
    if len(data) < spec.min_support:
        raise UsageError(
            f"dataset of {len(data)} records cannot reach support {spec.min_support}"
        )
    bw = spec.bandwidth if spec.bandwidth is not None else default_bandwidth(data)
    for _ in range(_MAX_DOUBLINGS):
        w = _weights(data, query, bw)
        support = int(np.count_nonzero(w))
        if support >= spec.min_support:
            return bw, w, support
        bw *= 2.0
    raise EstimationError("bandwidth doubling failed to reach min_support")


def _features(data: Dataset):
    """Design rows z_j = [1, x_j] and targets y_j = x_plus_j - B u_j."""
    z = np.hstack([np.ones((len(data), 1)), data.x])     # (M, p)
    y = data.f_targets()                                  # (M, n)
    return z, y


def _solve_wls(z, y, w, ridge):
    """Single weighted least squares solve; returns coefficients (p, n)."""
    G = (z * w[:, None]).T @ z
    G[np.diag_indices_from(G)] += ridge
    rhs = (z * w[:, None]).T @ y
    try:
        return np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(G, rhs, rcond=None)[0]


def local_fit(data: Dataset, x_query, spec: KernelSpec) -> LocalFit:
    """Fit y = a + A x by kernel-weighted least squares around x_query."""
    query = np.atleast_1d(np.asarray(x_query, dtype=float))
    if query.shape[0] != data.n:
        raise UsageError("query dimension does not match dataset")
    bw, w, support = _resolve_bandwidth(data, query, spec)
    z, y = _features(data)
    coef = _solve_wls(z, y, w, spec.ridge)
    a_hat = coef[0, :].copy()
    A_hat = coef[1:, :].T.copy()
    if not np.all(np.isfinite(a_hat)) or not np.all(np.isfinite(A_hat)):
        raise EstimationError("non-finite local fit")
    return LocalFit(a_hat, A_hat, query, support, bw)


def point_estimate(fit: LocalFit) -> np.ndarray:
    return fit.a_hat + fit.A_hat @ fit.query


def estimate_at(data: Dataset, x_query, spec: KernelSpec) -> np.ndarray:
    """Convenience: point estimate of the transition map at one state."""
    return point_estimate(local_fit(data, x_query, spec))


# -- bootstrap ------------------------------------------------------------

def _resample_counts(m: int, b_reps: int, seed) -> np.ndarray:
    """Multiplicity matrix (b_reps, m); replicate r is a pure function of
    (seed, r), so results do not depend on evaluation order.  ``seed``
    may be an int or a tuple of ints (namespaced streams)."""
    key = tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)
    counts = np.empty((b_reps, m), dtype=np.int64)
    for r in range(b_reps):
        idx = substream(*key, STREAM_BOOTSTRAP, r).integers(0, m, size=m)
        counts[r] = np.bincount(idx, minlength=m)
    return counts


def _replicate_estimates(data: Dataset, query: np.ndarray, spec: KernelSpec,
                         counts: np.ndarray, min_support: int):
    """Point estimates of every bootstrap refit at one query.

    Returns (estimates (kept, n), kept_count).  Replicates whose weighted
    support falls below min_support are discarded; when more than half
    would be discarded (sparse window, e.g. a grid point past the data
    range) the bandwidth is doubled first, mirroring the base fit.
    """
    bw, w, _ = _resolve_bandwidth(data, query, spec)
    z, y = _features(data)
    b_reps = counts.shape[0]
    counts_pos = counts > 0
    for _ in range(_MAX_DOUBLINGS):
        support = np.count_nonzero(counts_pos & (w > 0)[None, :], axis=1)
        keep = support >= min_support
        if int(keep.sum()) * 2 >= b_reps or np.all(w > 0):
            break
        bw *= 2.0
        w = _weights(data, query, bw)
    if not np.any(keep):
        return np.zeros((0, data.n)), 0
    cw = (counts * w[None, :])[keep]              # (kept, M) combined weights
    p = data.n + 1
    zzT = z[:, :, None] * z[:, None, :]           # (M, p, p)
    zy = z[:, :, None] * y[:, None, :]            # (M, p, n)
    G = np.einsum("bm,mpq->bpq", cw, zzT)
    G[:, np.arange(p), np.arange(p)] += max(spec.ridge, 1e-12)
    rhs = np.einsum("bm,mpn->bpn", cw, zy)
    try:
        coefs = np.linalg.solve(G, rhs)           # (B, p, n)
    except np.linalg.LinAlgError:
        # Isolate the rare singular replicate instead of failing the batch.
        coefs = []
        kept_rows = []
        for i in range(cw.shape[0]):
            try:
                coefs.append(np.linalg.solve(G[i], rhs[i]))
                kept_rows.append(i)
            except np.linalg.LinAlgError:
                continue
        if not coefs:
            return np.zeros((0, data.n)), 0
        coefs = np.stack(coefs)
    zq = np.concatenate([[1.0], query])
    est = np.einsum("p,bpn->bn", zq, coefs)
    finite = np.all(np.isfinite(est), axis=1)
    est = est[finite]
    return est, est.shape[0]


def bootstrap_band(data: Dataset, x_query, spec: KernelSpec, alpha: float,
                   b_reps: int, seed: int) -> ConfidenceBand:
    """Percentile interval of b_reps bootstrap refits at one query."""
    if not 0.0 < alpha < 1.0:
        raise UsageError("alpha must lie in (0, 1)")
    if b_reps < 50:
        raise UsageError("need at least 50 bootstrap replicates")
    query = np.atleast_1d(np.asarray(x_query, dtype=float))
    counts = _resample_counts(len(data), b_reps, seed)
    est, kept = _replicate_estimates(data, query, spec, counts, spec.min_support)
    if kept < b_reps / 2:
        raise EstimationError(
            f"{b_reps - kept} of {b_reps} bootstrap refits discarded"
        )
    lower = np.percentile(est, 100.0 * alpha / 2.0, axis=0)
    upper = np.percentile(est, 100.0 * (1.0 - alpha / 2.0), axis=0)
    center = estimate_at(data, query, spec)
    widened = bool(np.any(lower > center) or np.any(upper < center))
    lower = np.minimum(lower, center)
    upper = np.maximum(upper, center)
    return ConfidenceBand(query, lower, upper, alpha, kept, widened)


def estimation_error_set(data: Dataset, region_grid, spec: KernelSpec,
                         alpha: float, b_reps: int, seed: int,
                         center_band: bool = True) -> Box:
    """Worst-case estimation spread over a region grid.

    Component-wise union of the per-point bands, each re-centered on its
    point estimate (deviation form) so the result is a valid Minkowski
    summand for the error tube.  One set of resamples is shared by all
    grid points.
    """
    grid = [np.atleast_1d(np.asarray(g, dtype=float)) for g in region_grid]
    if not grid:
        raise UsageError("region grid must be nonempty")
    if not 0.0 < alpha < 1.0:
        raise UsageError("alpha must lie in (0, 1)")
    if b_reps < 50:
        raise UsageError("need at least 50 bootstrap replicates")
    counts = _resample_counts(len(data), b_reps, seed)
    lo = np.full(data.n, np.inf)
    hi = np.full(data.n, -np.inf)
    for q in grid:
        est, kept = _replicate_estimates(data, q, spec, counts, spec.min_support)
        if kept < b_reps / 2:
            raise EstimationError("too many bootstrap refits discarded on grid")
        lower = np.percentile(est, 100.0 * alpha / 2.0, axis=0)
        upper = np.percentile(est, 100.0 * (1.0 - alpha / 2.0), axis=0)
        point = estimate_at(data, q, spec)
        lower = np.minimum(lower, point)
        upper = np.maximum(upper, point)
        if center_band:
            lower = lower - point
            upper = upper - point
        lo = np.minimum(lo, lower)
        hi = np.maximum(hi, upper)
    return Box.from_bounds(lo, hi)
