"""
Per-window sample statistics: moments, covariance/correlation, spectra,
third-order covariances and bootstrap confidence intervals.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

THIRD_ORDER_MAX_N = 128  # O(N^3 T) cost guard


@dataclass(frozen=True)
class WindowStats:
    """First, second and (optionally) third order statistics of one window.

    All moments use population (1/T) normalization.  Kurtosis is excess
    kurtosis, zero for a Gaussian.  Eigenvalues/eigenvectors are those of
    the covariance matrix, sorted descending, each eigenvector scaled to
    unit norm with its largest-magnitude entry positive.
    """

    means: np.ndarray          # (N,)
    covariance: np.ndarray     # (N, N)
    correlation: np.ndarray    # (N, N)
    volatilities: np.ndarray   # (N,)
    skewness: np.ndarray       # (N,)
    kurtosis: np.ndarray       # (N,)
    eigenvalues: np.ndarray    # (N,) descending
    eigenvectors: np.ndarray   # (N, N) columns
    n_obs: int
    third_order: np.ndarray | None = None  # (N, N, N) central moments


def _sorted_eigh(m: np.ndarray):
    lam, vec = np.linalg.eigh(m)
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    vec = vec[:, order]
    # sign convention: largest-magnitude entry of each eigenvector positive
    for k in range(vec.shape[1]):
        if vec[np.argmax(np.abs(vec[:, k])), k] < 0:
            vec[:, k] = -vec[:, k]
    return lam, vec


def third_order_tensor(window: np.ndarray, max_n: int = THIRD_ORDER_MAX_N) -> np.ndarray:
    """Central third moments <(s_i - m_i)(s_j - m_j)(s_k - m_k)> of an (N, T) window."""
    x = np.asarray(window, dtype=np.float64)
    n, t = x.shape
    if n > max_n:
        raise ValueError(f"third-order tensor limited to N <= {max_n} (got {n})")
    xc = x - x.mean(axis=1, keepdims=True)
    return np.einsum("it,jt,kt->ijk", xc, xc, xc) / t


def window_stats(window: np.ndarray, with_third_order: bool = False,
                 labels=None) -> WindowStats:
    """Compute WindowStats for an (N, T) window.

    Warns when T < N (covariance not positive definite for inversion
    consumers); raises when any series has zero variance.
    """
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("window must be a 2-d (N, T) array")
    n, t = x.shape
    if t < 2:
        raise ValueError("window needs at least two observations")
    if t < n:
        logger.warning("window has T=%d < N=%d; covariance is rank deficient", t, n)

    m = x.mean(axis=1)
    xc = x - m[:, None]
    cov = (xc @ xc.T) / t
    cov = (cov + cov.T) / 2.0
    var = np.diag(cov).copy()
    dead = np.flatnonzero(var <= 0.0)
    if dead.size:
        name = labels[dead[0]] if labels is not None else f"series {dead[0]}"
        raise ValueError(f"{name} has zero variance in this window")
    vol = np.sqrt(var)
    corr = cov / np.outer(vol, vol)
    np.fill_diagonal(corr, 1.0)
    corr = np.clip(corr, -1.0, 1.0)
    skew = (xc**3).mean(axis=1) / vol**3
    kurt = (xc**4).mean(axis=1) / vol**4 - 3.0
    lam, vec = _sorted_eigh(cov)
    third = third_order_tensor(x) if with_third_order else None
    return WindowStats(m, cov, corr, vol, skew, kurt, lam, vec, t, third)


def top_eigenpairs(m: np.ndarray, k: int):
    """Top-k (eigenvalue, eigenvector) pairs of a symmetric matrix, descending."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(m, m.T, atol=1e-10):
        raise ValueError("matrix must be symmetric")
    if k > m.shape[0]:
        raise ValueError(f"k={k} exceeds matrix size {m.shape[0]}")
    lam, vec = _sorted_eigh(m)
    return [(float(lam[i]), vec[:, i].copy()) for i in range(k)]


def eigen_top(stats: WindowStats, k: int, which: str = "covariance"):
    """Top-k eigenpairs of a window's covariance or correlation matrix."""
    if k > len(stats.eigenvalues):
        raise ValueError(f"k={k} exceeds N={len(stats.eigenvalues)}")
    if which == "covariance":
        return [(float(stats.eigenvalues[i]), stats.eigenvectors[:, i].copy())
                for i in range(k)]
    if which == "correlation":
        return top_eigenpairs(stats.correlation, k)
    raise ValueError(f"unknown matrix {which!r}")


# ---------------------------------------------------------------------------
# Collection summaries and bootstrap intervals
# ---------------------------------------------------------------------------

_STATISTICS = {
    "mean": lambda v: float(np.mean(v)),
    "std": lambda v: float(np.std(v)),
    "skew": lambda v: _skew(v),
    "kurt": lambda v: _kurt(v),
}


def _skew(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    s = v.std()
    if s == 0.0:
        return float("nan")
    return float(((v - v.mean()) ** 3).mean() / s**3)


def _kurt(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    s = v.std()
    if s == 0.0:
        return float("nan")
    return float(((v - v.mean()) ** 4).mean() / s**4 - 3.0)


@dataclass(frozen=True)
class MomentSummary:
    """First four moments of a value collection, with optional bootstrap CIs.

    skew/kurt are NaN (flagged by `degenerate`) when the collection has zero
    spread.  `ci` maps statistic name -> (lower, upper) at `ci_level`.
    """

    mean: float
    std: float
    skew: float
    kurt: float
    n_values: int
    degenerate: bool = False
    ci: dict[str, tuple[float, float]] | None = None
    ci_level: float | None = None


def moment_summary(values, n_boot: int = 0, level: float = 0.95,
                   seed: int | None = None) -> MomentSummary:
    """Summarize a 1-d value collection; bootstrap CIs when n_boot > 0."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("empty value collection")
    degenerate = v.std() == 0.0
    ci = None
    if n_boot:
        stats = ["mean", "std"] if degenerate else ["mean", "std", "skew", "kurt"]
        rng_seed = np.random.SeedSequence(seed).spawn(len(stats))
        ci = {name: bootstrap_ci(v, name, n_boot, level, seed=s)
              for name, s in zip(stats, rng_seed)}
    return MomentSummary(
        mean=float(v.mean()), std=float(v.std()), skew=_skew(v), kurt=_kurt(v),
        n_values=v.size, degenerate=degenerate, ci=ci,
        ci_level=level if n_boot else None,
    )


def off_diagonal_values(m: np.ndarray) -> np.ndarray:
    """Off-diagonal entries of a square matrix, each unordered pair once when
    the matrix is symmetric, all N(N-1) entries otherwise."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
        raise ValueError("need a square matrix with N >= 2")
    if np.allclose(m, m.T, atol=1e-12):
        iu = np.triu_indices(m.shape[0], k=1)
        return m[iu]
    mask = ~np.eye(m.shape[0], dtype=bool)
    return m[mask]


def off_diagonal_summary(m: np.ndarray, n_boot: int = 0, level: float = 0.95,
                         seed: int | None = None) -> MomentSummary:
    """Moment summary of a matrix's off-diagonal elements."""
    return moment_summary(off_diagonal_values(m), n_boot, level, seed)


def bootstrap_ci(values, statistic: str, n_resamples: int, level: float = 0.95,
                 seed=None) -> tuple[float, float]:
    """Percentile bootstrap interval for a statistic of a value collection.

    Resamples with replacement; resamples on which the statistic is
    undefined (zero spread for skew/kurt) are redrawn and the redraw count
    logged.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("empty value collection")
    if n_resamples < 100:
        raise ValueError("use at least 100 bootstrap resamples")
    if statistic not in _STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}")
    fn = _STATISTICS[statistic]
    rng = np.random.default_rng(seed)
    out = np.empty(n_resamples)
    redraws = 0
    max_redraws = 10 * n_resamples
    i = 0
    while i < n_resamples:
        sample = v[rng.integers(0, v.size, v.size)]
        stat = fn(sample)
        if np.isnan(stat):
            redraws += 1
            if redraws > max_redraws:
                raise ValueError(
                    f"statistic {statistic!r} undefined on nearly all resamples"
                )
            continue
        out[i] = stat
        i += 1
    if redraws:
        logger.info("bootstrap_ci: redrew %d degenerate resamples", redraws)
    lo, hi = np.percentile(out, [100 * (1 - level) / 2, 100 * (1 + level) / 2])
    return float(lo), float(hi)


def dft_amplitudes(series) -> np.ndarray:
    """Amplitudes of the discrete Fourier transform at nonnegative frequencies.

    Normalized by 1/L so a constant series c gives amplitude |c| at
    frequency zero.  No taper is applied.
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("series needs at least two samples")
    return np.abs(np.fft.rfft(x)) / x.size


# ---------------------------------------------------------------------------
# Serialization helpers
# ---------------------------------------------------------------------------

def matrix_to_json(m: np.ndarray, tickers) -> str:
    """Row-major JSON with ticker labels."""
    return json.dumps({"tickers": list(tickers),
                       "matrix": np.asarray(m, dtype=float).tolist()})


def stats_csv_rows(date: str, tickers, stats: WindowStats,
                   summary: MomentSummary | None = None):
    """Flatten WindowStats into `date,series,stat,value,ci_lo,ci_hi` rows."""
    rows = []
    for i, t in enumerate(tickers):
        rows.append((date, t, "mean", stats.means[i], "", ""))
        rows.append((date, t, "vol", stats.volatilities[i], "", ""))
        rows.append((date, t, "skew", stats.skewness[i], "", ""))
        rows.append((date, t, "kurt", stats.kurtosis[i], "", ""))
    if summary is not None:
        for name in ("mean", "std", "skew", "kurt"):
            lo, hi = ("", "")
            if summary.ci and name in summary.ci:
                lo, hi = summary.ci[name]
            rows.append((date, "__offdiag__", name, getattr(summary, name), lo, hi))
    return rows
