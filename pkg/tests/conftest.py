"""Shared test helpers: exact-moment bridges and brute-force oracles."""

from __future__ import annotations

from itertools import product

import numpy as np

from isingmarket.model import IsingParams, exact_moments_small
from isingmarket.stats import WindowStats


def stats_from_params(params: IsingParams, n_obs: int = 10_000) -> WindowStats:
    """WindowStats whose means/covariance are the exact model moments.

    Skewness/kurtosis are filled with the closed-form values for a +-1
    variable; inference routines only consume means and covariance.
    """
    mom = exact_moments_small(params, max_n=16)
    m = mom.means
    cov = mom.pair_moments - np.outer(m, m)
    cov = (cov + cov.T) / 2.0
    np.fill_diagonal(cov, 1.0 - m**2)
    return stats_from_moments(m, cov, n_obs)


def stats_from_moments(m: np.ndarray, cov: np.ndarray, n_obs: int = 10_000) -> WindowStats:
    vol = np.sqrt(np.diag(cov))
    corr = cov / np.outer(vol, vol)
    np.fill_diagonal(corr, 1.0)
    lam, vec = np.linalg.eigh(cov)
    order = np.argsort(lam)[::-1]
    # skew/kurt of a +-1 variable with mean m, in closed form
    skew = -2.0 * m / np.sqrt(np.maximum(1.0 - m**2, 1e-300))
    kurt = (1.0 + 3.0 * m**2) / np.maximum(1.0 - m**2, 1e-300) - 3.0
    return WindowStats(m, cov, corr, vol, skew, kurt, lam[order], vec[:, order],
                       n_obs)


def brute_force_max_tree_weight(w: np.ndarray) -> float:
    """Maximum spanning-tree weight by enumerating all trees via Pruefer codes."""
    n = w.shape[0]
    if n == 2:
        return float(w[0, 1])
    best = -np.inf
    for code in product(range(n), repeat=n - 2):
        edges = _pruefer_to_edges(code, n)
        best = max(best, sum(w[i, j] for i, j in edges))
    return float(best)


def _pruefer_to_edges(code, n):
    degree = [1] * n
    for v in code:
        degree[v] += 1
    edges = []
    code = list(code)
    for v in code:
        for leaf in range(n):
            if degree[leaf] == 1:
                edges.append((leaf, v))
                degree[leaf] -= 1
                degree[v] -= 1
                break
    last = [v for v in range(n) if degree[v] == 1]
    edges.append((last[0], last[1]))
    return edges
