"""
Synthetic market generation from planted models, for end-to-end pipeline
verification against known ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .model import IsingParams, params_to_json, sample_configurations
from .network import SectorMap

PRICE_STEP = 0.01  # log-return magnitude; cosmetic, sign carries the signal


@dataclass(frozen=True)
class BlockSpec:
    """Equal-size sector blocks with intra/inter-sector couplings."""

    n_stocks: int
    n_sectors: int
    j_intra: float
    j_inter: float = 0.0
    h_scale: float = 0.0

    def __post_init__(self):
        if self.n_stocks < 2 or self.n_sectors < 1:
            raise ValueError("need at least two stocks and one sector")
        if self.n_stocks % self.n_sectors:
            raise ValueError("n_stocks must divide evenly into n_sectors blocks")


def synthetic_tickers(n: int) -> tuple[str, ...]:
    return tuple(f"S{i:03d}" for i in range(n))


def block_model(spec: BlockSpec, seed=None) -> tuple[IsingParams, SectorMap]:
    """Planted block model: couplings j_intra inside sectors, j_inter across,
    fields drawn uniformly in [-h_scale, h_scale]."""
    rng = np.random.default_rng(seed)
    n = spec.n_stocks
    per = n // spec.n_sectors
    sector_of = np.repeat(np.arange(spec.n_sectors), per)
    same = sector_of[:, None] == sector_of[None, :]
    j = np.where(same, spec.j_intra, spec.j_inter).astype(np.float64)
    np.fill_diagonal(j, 0.0)
    h = rng.uniform(-spec.h_scale, spec.h_scale, size=n) if spec.h_scale else np.zeros(n)
    tickers = synthetic_tickers(n)
    mapping = {t: f"SEC{sector_of[i]}" for i, t in enumerate(tickers)}
    return IsingParams(h, j, tickers=tickers), SectorMap(mapping)


def random_model(n: int, h_scale: float, j_scale: float, seed=None,
                 tickers=None) -> IsingParams:
    """Planted model with uniform fields and couplings."""
    rng = np.random.default_rng(seed)
    h = rng.uniform(-h_scale, h_scale, size=n)
    j = rng.uniform(-j_scale, j_scale, size=(n, n))
    j = np.triu(j, k=1)
    j = j + j.T
    return IsingParams(h, j, tickers=tickers or synthetic_tickers(n))


def sample_binary_panel(params: IsingParams, n_steps: int, seed=None,
                        n_chains: int = 8, n_burnin: int = 500) -> np.ndarray:
    """Sample an (N, n_steps) +-1 panel from the model.

    Columns are Metropolis trajectories, chain-major, so each chain
    contributes one contiguous quasi-stationary segment.
    """
    configs = sample_configurations(params, n_steps, n_chains=n_chains,
                                    n_burnin=n_burnin, seed=seed)
    return configs.T.astype(np.float64)


def trading_dates(n: int, start: str = "1990-01-02") -> tuple[str, ...]:
    """n consecutive calendar-day identifiers in ISO format."""
    d0 = date.fromisoformat(start)
    return tuple((d0 + timedelta(days=k)).isoformat() for k in range(n))


def prices_from_signs(signs: np.ndarray, s0: float = 100.0,
                      step: float = PRICE_STEP) -> np.ndarray:
    """Price paths S(t+1) = S(t) exp(step * sign) from an (N, L-1) sign panel."""
    log_prices = np.cumsum(np.concatenate(
        [np.full((signs.shape[0], 1), np.log(s0)), step * signs], axis=1), axis=1)
    return np.exp(log_prices)


def prices_to_csv(tickers, dates, prices: np.ndarray) -> str:
    lines = ["date," + ",".join(tickers)]
    for t, d in enumerate(dates):
        lines.append(d + "," + ",".join(repr(float(p)) for p in prices[:, t]))
    return "\n".join(lines) + "\n"


def sectors_to_csv(sector_map: SectorMap) -> str:
    lines = ["ticker,name,sector"]
    for ticker in sorted(sector_map.mapping):
        lines.append(f"{ticker},{ticker},{sector_map.mapping[ticker]}")
    return "\n".join(lines) + "\n"


def generate_synthetic(out_prices, out_truth, n_days: int,
                       model: IsingParams | BlockSpec, seed=None,
                       out_sectors=None, n_chains: int = 8,
                       n_burnin: int = 500) -> IsingParams:
    """Write a synthetic price CSV plus its ground-truth parameter JSON.

    `model` is either planted parameters or a BlockSpec (in which case a
    sector CSV can be written too).  Binarizing the log returns of the
    emitted prices recovers exactly the sampled spin panel.
    """
    if n_days < 2:
        raise ValueError("need at least two price days")
    sector_map = None
    if isinstance(model, BlockSpec):
        ss = np.random.SeedSequence(seed).spawn(2)
        params, sector_map = block_model(model, seed=ss[0])
        sample_seed = ss[1]
    else:
        params = model
        sample_seed = seed
    signs = sample_binary_panel(params, n_days - 1, seed=sample_seed,
                                n_chains=n_chains, n_burnin=n_burnin)
    prices = prices_from_signs(signs)
    tickers = params.tickers or synthetic_tickers(params.n)
    dates = trading_dates(n_days)
    with open(out_prices, "w") as fh:
        fh.write(prices_to_csv(tickers, dates, prices))
    with open(out_truth, "w") as fh:
        fh.write(params_to_json(params))
    if out_sectors is not None:
        if sector_map is None:
            raise ValueError("sector output requested but model has no sectors")
        with open(out_sectors, "w") as fh:
            fh.write(sectors_to_csv(sector_map))
    return params


def truth_from_json(path) -> IsingParams:
    from .model import params_from_json
    with open(path) as fh:
        return params_from_json(fh.read())
