"""
Pairwise maximum-entropy (Ising) model over binary market states.

Convention used throughout this package: the energy of a configuration
s in {-1,+1}^N is

    H(s) = -h.s - s'Js         (beta fixed at 1)

with J symmetric and zero on the diagonal, so each unordered pair (i, j)
contributes 2*J_ij to the energy.  The N=2, h=0 closed form under this
convention is <s1 s2> = tanh(2*J12), and the single-flip energy change is
dE = 2*s_i*(h_i + 2*sum_j J_ij s_j).  Inference routines that are exact
in the conventional single-count parameterization are calibrated to this
convention (see `inference`), so sampling from inferred parameters
reproduces the moments they were fit to.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import stats as _stats

ENUMERATION_HARD_CAP = 20  # 2^N states; above this exact sums are refused


@dataclass(frozen=True)
class IsingParams:
    """External fields h (N,) and symmetric zero-diagonal couplings J (N, N)."""

    h: np.ndarray
    J: np.ndarray
    beta: float = 1.0
    tickers: tuple[str, ...] | None = None

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64)
        j = np.asarray(self.J, dtype=np.float64)
        if h.ndim != 1 or j.shape != (h.size, h.size):
            raise ValueError(f"shape mismatch: h {h.shape}, J {j.shape}")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(j))):
            raise ValueError("parameters must be finite")
        if not np.allclose(j, j.T, atol=1e-10):
            raise ValueError("J must be symmetric")
        if not np.allclose(np.diag(j), 0.0, atol=1e-12):
            raise ValueError("J must have zero diagonal")
        if self.beta != 1.0:
            raise ValueError("beta is fixed at 1")
        j = (j + j.T) / 2.0
        np.fill_diagonal(j, 0.0)
        h = h.copy()
        h.flags.writeable = False
        j.flags.writeable = False
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "J", j)
        if self.tickers is not None:
            if len(self.tickers) != h.size:
                raise ValueError("tickers do not match parameter dimension")
            object.__setattr__(self, "tickers", tuple(self.tickers))

    @property
    def n(self) -> int:
        return self.h.size


@dataclass(frozen=True)
class SampleStats:
    """Model moments estimated from samples (or computed exactly).

    pair_moments holds raw second moments <s_i s_j> with unit diagonal.
    Standard errors, when present, come from the spread of independent
    chain means.  state_counts (for small N) indexes configurations by
    sum_i (s_i > 0) << i.
    """

    means: np.ndarray           # (N,)
    pair_moments: np.ndarray    # (N, N), diag 1
    sample_count: int
    settings: dict = field(default_factory=dict)
    third_order: np.ndarray | None = None
    state_counts: np.ndarray | None = None
    se_means: np.ndarray | None = None
    se_pairs: np.ndarray | None = None

    def __post_init__(self):
        if np.any(np.abs(self.means) > 1.0 + 1e-12):
            raise ValueError("spin means must lie in [-1, 1]")
        p = self.pair_moments
        if not np.allclose(p, p.T, atol=1e-10) or not np.allclose(np.diag(p), 1.0):
            raise ValueError("pair moments must be symmetric with unit diagonal")


def hamiltonian(params: IsingParams, s) -> float:
    """Energy -h.s - s'Js of one configuration."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (params.n,):
        raise ValueError(f"state has shape {s.shape}, expected ({params.n},)")
    if not np.all(np.abs(s) == 1.0):
        raise ValueError("state entries must be -1 or +1")
    return float(-params.h @ s - s @ params.J @ s)


def enumerate_states(n: int) -> np.ndarray:
    """All 2^n spin configurations as a (2^n, n) array of +-1 floats.

    State k has spin i up iff bit i of k is set.
    """
    if n > ENUMERATION_HARD_CAP:
        raise ValueError(f"refusing to enumerate 2^{n} states (cap {ENUMERATION_HARD_CAP})")
    codes = np.arange(2**n, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n)) & 1
    return bits.astype(np.float64) * 2.0 - 1.0


def encode_states(s: np.ndarray) -> np.ndarray:
    """Inverse of enumerate_states' ordering for an (..., n) array of spins."""
    s = np.asarray(s)
    up = (s > 0).astype(np.int64)
    return up @ (1 << np.arange(s.shape[-1], dtype=np.int64))


def boltzmann_distribution(params: IsingParams) -> np.ndarray:
    """Exact state probabilities exp(-H)/Z over the enumerate_states ordering."""
    s = enumerate_states(params.n)
    g = s @ params.h + np.einsum("si,si->s", s @ params.J, s)
    g -= g.max()  # stabilize before exponentiation
    p = np.exp(g)
    return p / p.sum()


def exact_moments_small(params: IsingParams, max_n: int = 16) -> SampleStats:
    """Exact first and second moments by summing over all 2^N states.

    Practical up to max_n (default 16); hard-refused above
    ENUMERATION_HARD_CAP regardless of max_n.
    """
    n = params.n
    if n > min(max_n, ENUMERATION_HARD_CAP):
        raise ValueError(f"exact enumeration limited to N <= {min(max_n, ENUMERATION_HARD_CAP)}")
    s = enumerate_states(n)
    p = boltzmann_distribution(params)
    means = p @ s
    pair = (s * p[:, None]).T @ s
    pair = (pair + pair.T) / 2.0
    np.fill_diagonal(pair, 1.0)
    return SampleStats(means, pair, sample_count=2**n, settings={"kind": "exact"})


def _simulate(params: IsingParams, n_chains: int, n_sweeps: int, n_burnin: int,
              rng: np.random.Generator, init: str = "random") -> np.ndarray:
    """Single-spin-flip Metropolis chains, vectorized across chains.

    One sweep is N attempted flips at uniformly random sites (drawn per
    chain).  Returns recorded states of shape (n_chains, n_sweeps, N),
    one record per chain per post-burn-in sweep.

    init='exact' draws the starting states from the exhaustively
    enumerated distribution (N <= 16 only), so the ensemble starts in
    equilibrium; strongly coupled systems whose modes single-flip dynamics
    cannot cross in any reasonable budget are then weighted correctly.
    """
    n = params.n
    h, j = params.h, params.J
    if init == "exact":
        states = enumerate_states(n)
        picks = rng.choice(2**n, size=n_chains, p=boltzmann_distribution(params))
        s = states[picks].copy()
    elif init == "random":
        s = rng.choice(np.array([-1.0, 1.0]), size=(n_chains, n))
    else:
        raise ValueError(f"unknown init {init!r}")
    out = np.empty((n_chains, n_sweeps, n), dtype=np.int8)
    rows = np.arange(n_chains)
    for sweep in range(n_burnin + n_sweeps):
        for _ in range(n):
            sites = rng.integers(0, n, size=n_chains)
            local = h[sites] + 2.0 * np.einsum("cn,cn->c", j[sites], s)
            cur = s[rows, sites]
            de = 2.0 * cur * local
            accept = rng.random(n_chains) < np.exp(np.minimum(-de, 0.0))
            s[rows[accept], sites[accept]] = -cur[accept]
        if sweep >= n_burnin:
            out[:, sweep - n_burnin, :] = s
    return out


def sample_configurations(params: IsingParams, n_samples: int, n_chains: int = 10,
                          n_burnin: int = 1000, seed=None) -> np.ndarray:
    """Draw n_samples configurations, stacked chain-major so each chain's
    block is a contiguous stretch of its trajectory.  Returns (n_samples, N)."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    n_chains = min(n_chains, n_samples)
    per_chain = -(-n_samples // n_chains)  # ceil
    rng = np.random.default_rng(seed)
    configs = _simulate(params, n_chains, per_chain, n_burnin, rng)
    return configs.reshape(-1, params.n)[:n_samples]


def metropolis_sample(params: IsingParams, n_sweeps: int, n_burnin: int = 1000,
                      n_chains: int = 10, seed=None, with_third_order: bool = False,
                      track_states: bool = False, init: str = "random") -> SampleStats:
    """Estimate model moments by Metropolis sampling.

    Runs n_chains independent chains for n_burnin + n_sweeps sweeps and
    records one sample per chain per post-burn-in sweep (n_chains*n_sweeps
    samples total).  Deterministic for a given seed.  See `_simulate` for
    the init='exact' warm start.
    """
    if n_sweeps < 1:
        raise ValueError("need at least one sweep")
    rng = np.random.default_rng(seed)
    configs = _simulate(params, n_chains, n_sweeps, n_burnin, rng, init=init)
    n = params.n
    flat = configs.reshape(-1, n).astype(np.float64)
    count = flat.shape[0]
    means = flat.mean(axis=0)
    pair = flat.T @ flat / count
    pair = (pair + pair.T) / 2.0
    np.fill_diagonal(pair, 1.0)

    # standard errors from the spread of independent chain means
    chain_means = configs.mean(axis=1)  # (chains, N)
    se_means = chain_means.std(axis=0, ddof=1) / math.sqrt(n_chains) if n_chains > 1 else None
    se_pairs = None
    if n_chains > 1:
        cf = configs.astype(np.float64)
        chain_pairs = np.einsum("cti,ctj->cij", cf, cf) / configs.shape[1]
        se_pairs = chain_pairs.std(axis=0, ddof=1) / math.sqrt(n_chains)

    third = third_order_from_samples(flat) if with_third_order else None
    counts = None
    if track_states:
        if n > 16:
            raise ValueError("state tracking limited to N <= 16")
        counts = np.bincount(encode_states(flat), minlength=2**n)

    settings = {"kind": "metropolis", "n_sweeps": n_sweeps, "n_burnin": n_burnin,
                "n_chains": n_chains, "seed": seed, "init": init}
    return SampleStats(means, pair, count, settings, third, counts, se_means, se_pairs)


def third_order_from_samples(samples: np.ndarray,
                             max_n: int = _stats.THIRD_ORDER_MAX_N) -> np.ndarray:
    """Central third moments from an (n_samples, N) sample matrix.

    Accumulated slice-by-slice via matrix products (a different route from
    the window-statistics einsum, so the two can cross-check each other).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must be (n_samples, N)")
    count, n = x.shape
    if n > max_n:
        raise ValueError(f"third-order tensor limited to N <= {max_n} (got {n})")
    xc = x - x.mean(axis=0)
    tensor = np.empty((n, n, n))
    for k in range(n):
        tensor[:, :, k] = (xc * xc[:, k : k + 1]).T @ xc / count
    return tensor


@dataclass(frozen=True)
class EnergySplit:
    """Decomposition of mean energy into field-driven and coupling-driven parts.

    h_int = J <s> is the internal bias each series feels from the rest of
    the system; E_ext/E_int are the corresponding energy contributions
    -h_ext.<s> and -h_int.<s>.  Zero denominators yield signed infinities
    (flagged by the ratio value), never exceptions.
    """

    h_ext: np.ndarray
    h_int: np.ndarray
    e_ext: float
    e_int: float
    energy_ratio: float
    bias_ratio: float
    bias_ratio_sign: float


def _safe_ratio(num: float, den: float) -> float:
    if den == 0.0:
        if num == 0.0:
            return 0.0
        return math.copysign(math.inf, num)
    return num / den


def energy_split(params: IsingParams, means) -> EnergySplit:
    """Split -h.<s> - <s>'J<s> into external and internal energies."""
    m = np.asarray(means, dtype=np.float64)
    if m.shape != (params.n,):
        raise ValueError("means must match parameter dimension")
    if np.any(np.abs(m) > 1.0 + 1e-12):
        raise ValueError("spin means must lie in [-1, 1]")
    h_ext = params.h.copy()
    h_int = params.J @ m
    e_ext = float(-h_ext @ m)
    e_int = float(-h_int @ m)
    bias = _safe_ratio(float(h_ext.mean()), float(h_int.mean()))
    return EnergySplit(
        h_ext=h_ext, h_int=h_int, e_ext=e_ext, e_int=e_int,
        energy_ratio=_safe_ratio(e_ext, e_int),
        bias_ratio=bias,
        bias_ratio_sign=float(np.sign(bias)) if np.isfinite(bias) else math.copysign(1.0, bias),
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def params_to_json(params: IsingParams) -> str:
    return json.dumps({
        "tickers": list(params.tickers) if params.tickers else None,
        "h": params.h.tolist(),
        "J": params.J.tolist(),
    })


def params_from_json(text: str) -> IsingParams:
    obj = json.loads(text)
    tickers = tuple(obj["tickers"]) if obj.get("tickers") else None
    return IsingParams(np.asarray(obj["h"], dtype=float),
                       np.asarray(obj["J"], dtype=float), tickers=tickers)
