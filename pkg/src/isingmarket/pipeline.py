"""
End-to-end pipeline: ingest, transform, per-window statistics and inference,
network/scaling/energy analyses, and a reproducibility manifest.

All outputs are plain CSV/JSON/DOT.  A run is deterministic for a given
config and seed: per-window seeds derive from SeedSequence([seed, window
index]) regardless of worker scheduling.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import compare_methods, scaling_exponents, subset_coupling_scan
from .inference import METHODS, InferenceConfig, infer
from .model import energy_split, metropolis_sample, params_to_json
from .network import (coupling_cutoff_scan, edges_to_dot,
                      eigen_cutoff_scan, mst_result)
from .panels import (WindowSpec, binarize, load_price_csv, load_sector_csv,
                     log_returns, standardize_window, windows)
from .stats import (dft_amplitudes, matrix_to_json, off_diagonal_summary,
                    stats_csv_rows, window_stats)

STAGES = ("stats", "infer", "mst", "cutoff", "scaling", "subset", "energy",
          "compare")


class ConfigError(Exception):
    """Bad run configuration; maps to exit code 2."""


class NonConvergenceError(Exception):
    """Strict mode: some window failed to converge; maps to exit code 4."""


@dataclass
class RunConfig:
    prices: str
    out_dir: str
    sectors: str | None = None
    kind: str = "binary"                  # raw | standardized | binary
    window_size: int = 250
    stride: int = 1
    stages: tuple[str, ...] = ("stats", "infer")
    methods: tuple[str, ...] = ("nmf",)
    compare_pairs: tuple[tuple[str, str], ...] = ()
    seed: int = 0
    jobs: int = 1
    strict: bool = False
    # inference knobs (forwarded into InferenceConfig)
    diag_trick: bool | None = None
    eta_h: float = 0.1
    eta_j: float = 0.1
    eta_decay: float = 0.99
    max_iters: int = 1000
    tol: float = 5e-3
    ridge: float = 0.0
    mc_sweeps: int = 100
    mc_chains: int = 500
    mc_burnin: int = 100
    exact_max_n: int = 16
    # analysis knobs
    eigen_top_k: int = 4
    n_boot: int = 0
    boot_level: float = 0.95
    with_third_order: bool = False
    emit_matrices: bool = False
    cutoff_points: int = 15
    scaling_sizes: tuple[int, ...] = ()
    scaling_repeats: int = 20
    subset_indices: tuple[int, ...] = ()
    subset_totals: tuple[int, ...] = ()

    def validate(self):
        if self.window_size < 1 or self.stride < 1:
            raise ConfigError("window_size and stride must be positive")
        if self.kind not in ("raw", "standardized", "binary"):
            raise ConfigError(f"unknown transform kind {self.kind!r}")
        unknown = set(self.stages) - set(STAGES)
        if unknown:
            raise ConfigError(f"unknown stages {sorted(unknown)}; choose from {STAGES}")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigError(f"unknown methods {sorted(bad)}")
        if not Path(self.prices).exists():
            raise ConfigError(f"prices file {self.prices} does not exist")
        if self.sectors is not None and not Path(self.sectors).exists():
            raise ConfigError(f"sectors file {self.sectors} does not exist")
        needs_params = {"infer", "mst", "cutoff", "scaling", "subset", "energy",
                        "compare"}
        if needs_params & set(self.stages) and self.kind != "binary":
            raise ConfigError("inference-based stages require kind=binary")
        if needs_params & set(self.stages) and not self.methods:
            raise ConfigError("no inference methods selected")
        if {"mst", "cutoff"} & set(self.stages) and self.sectors is None:
            raise ConfigError("mst/cutoff stages need a sectors file")
        for a, b in self.compare_pairs:
            if a not in self.methods or b not in self.methods:
                raise ConfigError(f"compare pair {a}:{b} not covered by methods")
        if "scaling" in self.stages and len(set(self.scaling_sizes)) < 3:
            raise ConfigError("scaling stage needs at least three subset sizes")
        if "subset" in self.stages and (not self.subset_indices or
                                        not self.subset_totals):
            raise ConfigError("subset stage needs subset_indices and subset_totals")

    def inference_config(self, method: str, seed) -> InferenceConfig:
        return InferenceConfig(
            method=method, diagonal_trick=self.diag_trick, eta_h=self.eta_h,
            eta_j=self.eta_j, eta_decay=self.eta_decay, max_iters=self.max_iters,
            tol=self.tol, ridge=self.ridge, mc_sweeps=self.mc_sweeps,
            mc_chains=self.mc_chains, mc_burnin=self.mc_burnin, seed=seed,
            exact_max_n=self.exact_max_n)


def parse_config_file(path) -> dict:
    """key=value text config; '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_LIST_KEYS = {"stages", "methods"}
_INT_LIST_KEYS = {"scaling_sizes", "subset_indices", "subset_totals"}
_BOOL_KEYS = {"strict", "with_third_order", "emit_matrices"}


def config_from_mapping(mapping: dict) -> RunConfig:
    """Build a RunConfig from a string mapping (config file and/or CLI)."""
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    kwargs = {}
    for key, value in mapping.items():
        if value is None:
            continue
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        if key == "compare_pairs":
            kwargs[key] = _parse_pairs(value)
        elif key in _LIST_KEYS:
            if isinstance(value, (tuple, list)):
                kwargs[key] = tuple(value)
            else:
                kwargs[key] = tuple(v.strip() for v in str(value).split(",")
                                    if v.strip())
        elif key in _INT_LIST_KEYS:
            if isinstance(value, (tuple, list)):
                kwargs[key] = tuple(int(v) for v in value)
            else:
                kwargs[key] = tuple(int(v) for v in str(value).split(",")
                                    if v.strip())
        elif key in _BOOL_KEYS or key == "diag_trick":
            kwargs[key] = _parse_bool(key, value)
        else:
            typ = fields[key].type
            if isinstance(value, str) and typ in ("int", "float"):
                kwargs[key] = int(value) if typ == "int" else float(value)
            else:
                kwargs[key] = value
    missing = {"prices", "out_dir"} - set(kwargs)
    if missing:
        raise ConfigError(f"missing required config keys: {sorted(missing)}")
    try:
        cfg = RunConfig(**{k: _coerce(fields[k].type, v) for k, v in kwargs.items()})
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err
    cfg.validate()
    return cfg


def _coerce(typ, value):
    if typ == "int" and isinstance(value, str):
        return int(value)
    if typ == "float" and isinstance(value, str):
        return float(value)
    return value


def _parse_bool(key, value):
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("1", "true", "on", "yes"):
        return True
    if v in ("0", "false", "off", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _parse_pairs(value):
    if not value:
        return ()
    if isinstance(value, tuple):
        return value
    pairs = []
    for chunk in str(value).split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ConfigError(f"compare pair {chunk!r} must look like nmf:exact")
        a, b = chunk.split(":", 1)
        pairs.append((a.strip(), b.strip()))
    return tuple(pairs)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):  # includes numpy floats; repr via the builtin
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: str, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# The run orchestrator
# ---------------------------------------------------------------------------

def _window_seed(root_seed: int, index: int, salt: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence([root_seed, index, salt])


def _prepare_window(cfg: RunConfig, raw_block: np.ndarray, date: str) -> np.ndarray:
    if cfg.kind == "raw":
        return raw_block
    if cfg.kind == "standardized":
        return standardize_window(raw_block, label=f"window ending {date}")
    return np.where(raw_block >= 0.0, 1.0, -1.0)


def run(cfg: RunConfig) -> dict:
    """Execute the configured stages; returns the manifest dictionary.

    On stage failure, partial outputs are kept, a `.partial` marker is
    written and the manifest records the failure point before the
    exception propagates.
    """
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "version": __version__,
        "config": dataclasses.asdict(cfg),
        "seed_rule": "SeedSequence([seed, window_index, stage_salt])",
        "stages": {},
        "failure": None,
    }
    marker = out / ".partial"
    try:
        _run_stages(cfg, out, manifest)
    except Exception as err:
        manifest["failure"] = {"stage": manifest.get("_current_stage"),
                               "error": f"{type(err).__name__}: {err}"}
        manifest.pop("_current_stage", None)
        write_json(out / "manifest.json", manifest)
        marker.touch()
        raise
    manifest.pop("_current_stage", None)
    write_json(out / "manifest.json", manifest)
    if marker.exists():
        marker.unlink()
    return manifest


def _run_stages(cfg: RunConfig, out: Path, manifest: dict) -> None:
    timer = time.perf_counter
    manifest["_current_stage"] = "ingest"
    t0 = timer()
    panel, report = load_price_csv(cfg.prices)
    sector_map = load_sector_csv(cfg.sectors) if cfg.sectors else None
    labels = sector_map.labels_for(panel.tickers) if sector_map else None
    returns = log_returns(panel)
    write_json(out / "ingest_report.json",
               {"n_rows": report.n_rows, "kept": report.kept,
                "dropped": report.dropped, "n_return_steps": returns.n_steps})
    manifest["stages"]["ingest"] = {"seconds": timer() - t0}

    spec = WindowSpec(cfg.window_size, cfg.stride)
    if cfg.window_size > returns.n_steps:
        raise ConfigError(f"window_size {cfg.window_size} exceeds the "
                          f"{returns.n_steps}-step return history")
    window_list = list(windows(returns, spec))
    manifest["windows"] = len(window_list)
    binary = binarize(returns)

    results: dict[int, dict] = {}

    def process_window(item):
        idx, (date, raw_block) = item
        entry: dict = {"date": date}
        block = _prepare_window(cfg, raw_block, date)
        if "stats" in cfg.stages:
            entry["stats"] = window_stats(block, with_third_order=cfg.with_third_order,
                                          labels=panel.tickers)
        if _needs_inference(cfg):
            if cfg.kind == "binary" and "stats" in entry:
                st = entry["stats"]
            else:
                bin_block = binary.values[:, _col_slice(idx, cfg)]
                st = window_stats(bin_block, labels=panel.tickers)
            entry["bin_stats"] = st
            entry["params"] = {}
            entry["diag"] = {}
            for m_i, method in enumerate(cfg.methods):
                seed = _window_seed(cfg.seed, idx, salt=100 + m_i)
                res = infer(st, cfg.inference_config(method, seed),
                            tickers=panel.tickers)
                entry["params"][method] = res
        return idx, entry

    manifest["_current_stage"] = "windows"
    t0 = timer()
    items = list(enumerate(window_list))
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            for idx, entry in pool.map(process_window, items):
                results[idx] = entry
    else:
        for item in items:
            idx, entry = process_window(item)
            results[idx] = entry
    manifest["stages"]["windows"] = {"seconds": timer() - t0}

    ordered = [results[i] for i in sorted(results)]

    if "stats" in cfg.stages:
        manifest["_current_stage"] = "stats"
        t0 = timer()
        _write_stats_outputs(cfg, out, panel.tickers, ordered, returns, binary)
        manifest["stages"]["stats"] = {"seconds": timer() - t0}

    if _needs_inference(cfg):
        manifest["_current_stage"] = "infer"
        t0 = timer()
        diag_rows = _write_inference_outputs(cfg, out, ordered)
        manifest["stages"]["infer"] = {"seconds": timer() - t0}
        manifest["convergence"] = diag_rows
        if cfg.strict and any(not row["converged"] for row in diag_rows):
            raise NonConvergenceError(
                f"{sum(not r['converged'] for r in diag_rows)} window/method "
                "fits did not converge")

    if "mst" in cfg.stages or "cutoff" in cfg.stages:
        manifest["_current_stage"] = "mst"
        t0 = timer()
        _write_network_outputs(cfg, out, ordered, panel.tickers, labels)
        manifest["stages"]["mst"] = {"seconds": timer() - t0}

    if "energy" in cfg.stages:
        manifest["_current_stage"] = "energy"
        t0 = timer()
        _write_energy_outputs(cfg, out, ordered)
        manifest["stages"]["energy"] = {"seconds": timer() - t0}

    if "compare" in cfg.stages and cfg.compare_pairs:
        manifest["_current_stage"] = "compare"
        t0 = timer()
        _write_compare_outputs(cfg, out, ordered)
        manifest["stages"]["compare"] = {"seconds": timer() - t0}

    if "scaling" in cfg.stages:
        manifest["_current_stage"] = "scaling"
        t0 = timer()
        _write_scaling_outputs(cfg, out, binary)
        manifest["stages"]["scaling"] = {"seconds": timer() - t0}

    if "subset" in cfg.stages:
        manifest["_current_stage"] = "subset"
        t0 = timer()
        _write_subset_outputs(cfg, out, binary)
        manifest["stages"]["subset"] = {"seconds": timer() - t0}


def _needs_inference(cfg: RunConfig) -> bool:
    return bool({"infer", "mst", "cutoff", "energy", "compare"} & set(cfg.stages))


def _col_slice(idx: int, cfg: RunConfig) -> slice:
    end = cfg.window_size - 1 + idx * cfg.stride
    return slice(end - cfg.window_size + 1, end + 1)


def _write_stats_outputs(cfg, out, tickers, ordered, returns, binary) -> None:
    rows = []
    eigen_rows = []
    for w_i, entry in enumerate(ordered):
        st = entry["stats"]
        date = entry["date"]
        boot_seed = _window_seed(cfg.seed, w_i, salt=7).generate_state(1)[0]
        summary = off_diagonal_summary(st.covariance, n_boot=cfg.n_boot,
                                       level=cfg.boot_level, seed=int(boot_seed))
        rows.extend(stats_csv_rows(date, tickers, st, summary))
        for k in range(min(cfg.eigen_top_k, len(st.eigenvalues))):
            eigen_rows.append((date, k + 1, st.eigenvalues[k]))
        if cfg.emit_matrices:
            write_json(out / "stats" / "matrices" / f"{date}_cov.json",
                       json.loads(matrix_to_json(st.covariance, tickers)))
            write_json(out / "stats" / "matrices" / f"{date}_corr.json",
                       json.loads(matrix_to_json(st.correlation, tickers)))
    write_csv(out / "stats" / "stats.csv",
              "date,series,stat,value,ci_lo,ci_hi", rows)
    write_csv(out / "stats" / "eigen.csv", "date,rank,eigenvalue", eigen_rows)
    # spectrum of the cross-sectional mean return, raw vs binary
    dft_rows = []
    for kind, panel_values in (("raw", returns.values), ("binary", binary.values)):
        amps = dft_amplitudes(panel_values.mean(axis=0))
        dft_rows.extend((kind, k, a) for k, a in enumerate(amps))
    write_csv(out / "stats" / "dft_mean_return.csv", "kind,bin,amplitude", dft_rows)


def _write_inference_outputs(cfg, out, ordered):
    diag_rows = []
    for entry in ordered:
        for method, res in entry["params"].items():
            path = out / "params" / method / f"{entry['date']}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(params_to_json(res.params) + "\n")
            diag_rows.append({
                "date": entry["date"], "method": method,
                "converged": bool(res.converged),
                "iterations": res.iterations,
                "residual": res.residual,
                "cond_cov": res.diagnostics.get("cond_cov"),
                "tap_fallbacks": res.diagnostics.get("tap_fallbacks"),
            })
    write_csv(out / "infer_diagnostics.csv",
              "date,method,converged,iterations,residual,cond_cov,tap_fallbacks",
              [tuple("" if row[k] is None else row[k] for k in
                     ("date", "method", "converged", "iterations", "residual",
                      "cond_cov", "tap_fallbacks")) for row in diag_rows])
    return diag_rows


def _cutoff_thresholds(values: np.ndarray, n_points: int) -> list[float]:
    # interior grid: the extremes would discard everything (or nothing) and
    # sit one rounding error away from emptiness
    lo, hi = float(values.min()), float(values.max())
    return list(np.linspace(lo, hi, n_points + 2)[1:-1])


def _write_network_outputs(cfg, out, ordered, tickers, labels) -> None:
    q_rows = []
    for entry in ordered:
        date = entry["date"]
        for method, res in entry["params"].items():
            j = res.params.J
            if "mst" in cfg.stages:
                tree = mst_result(j, labels)
                base = out / "mst" / method
                write_csv(base / f"{date}.csv",
                          "i_ticker,j_ticker,weight,i_sector,j_sector",
                          [(tickers[i], tickers[k], w, labels[i], labels[k])
                           for i, k, w in tree.edges])
                (base / f"{date}.dot").parent.mkdir(parents=True, exist_ok=True)
                (base / f"{date}.dot").write_text(
                    edges_to_dot(tree.edges, tickers, labels))
                q_rows.append((date, method, tree.q_mst))
            if "cutoff" in cfg.stages:
                iu = np.triu_indices(j.shape[0], k=1)
                th = _cutoff_thresholds(j[iu], cfg.cutoff_points)
                pts = coupling_cutoff_scan(j, labels, th, "discard_above")
                write_csv(out / "cutoff" / method / f"coupling_{date}.csv",
                          "threshold,q_mst,disconnected",
                          [(p.threshold, p.q_mst, p.disconnected) for p in pts])
                lam = np.linalg.eigvalsh(j)
                th_e = _cutoff_thresholds(lam, cfg.cutoff_points)
                pts_e = eigen_cutoff_scan(j, labels, th_e, "discard_above")
                write_csv(out / "cutoff" / method / f"eigen_{date}.csv",
                          "threshold,q_mst,disconnected",
                          [(p.threshold, p.q_mst, p.disconnected) for p in pts_e])
    if q_rows:
        write_csv(out / "mst" / "q_mst.csv", "date,method,q_mst", q_rows)


def _write_energy_outputs(cfg, out, ordered) -> None:
    rows = []
    for entry in ordered:
        means = entry["bin_stats"].means
        for method, res in entry["params"].items():
            split = energy_split(res.params, means)
            rows.append((entry["date"], method, split.e_ext, split.e_int,
                         split.energy_ratio, split.bias_ratio,
                         split.bias_ratio_sign))
    write_csv(out / "energy" / "energy.csv",
              "date,method,e_ext,e_int,energy_ratio,bias_ratio,bias_ratio_sign",
              rows)


def _write_compare_outputs(cfg, out, ordered) -> None:
    rows = []
    for entry in ordered:
        for a, b in cfg.compare_pairs:
            cmp = compare_methods(entry["params"][a].params,
                                  entry["params"][b].params)
            rows.append((entry["date"], f"{a}:{b}", "h", cmp.h.nrmse, cmp.h.pearson))
            rows.append((entry["date"], f"{a}:{b}", "J", cmp.j.nrmse, cmp.j.pearson))
    write_csv(out / "compare" / "compare.csv",
              "date,pair,target,nrmse,pearson", rows)


def _write_scaling_outputs(cfg, out, binary) -> None:
    method = cfg.methods[0]
    report = scaling_exponents(
        binary, binary.dates[-1], cfg.window_size, cfg.scaling_sizes,
        cfg.scaling_repeats, method=method, seed=cfg.seed,
        cfg=cfg.inference_config(method, None))
    rows = []
    summary = {}
    for param_name, fits in (("h", report.h), ("J", report.j)):
        for moment, fit in fits.items():
            for r, alpha in enumerate(fit.alphas):
                for size in report.sizes:
                    rows.append((size, r, f"{param_name}.{moment}", alpha))
            summary[f"{param_name}.{moment}"] = {
                "alpha": fit.alpha, "alpha_se": fit.alpha_se,
                "n_excluded": fit.n_excluded}
    write_csv(out / "scaling" / "scaling.csv", "size,repeat,moment,alpha", rows)
    write_json(out / "scaling" / "scaling.json",
               {"sizes": list(report.sizes), "repeats": report.repeats,
                "method": method, "exponents": summary})


def _write_subset_outputs(cfg, out, binary) -> None:
    method = cfg.methods[0]
    scan = subset_coupling_scan(
        binary, binary.dates[-1], cfg.window_size, cfg.subset_indices,
        cfg.subset_totals, method=method, seed=cfg.seed,
        cfg=cfg.inference_config(method, None))
    rows = [(e.total, e.mean, e.std,
             ";".join(f"{i}-{j}" for i, j, _ in e.top_pairs),
             ";".join(f"{i}-{j}" for i, j, _ in e.bottom_pairs))
            for e in scan.entries]
    write_csv(out / "subset" / "subset_summary.csv",
              "total,mean,std,top_pairs,bottom_pairs", rows)
    write_json(out / "subset" / "subset_scan.json", {
        "subset": list(scan.subset),
        "method": method,
        "entries": [{"total": e.total, "members": list(e.members),
                     "couplings": e.couplings.tolist(),
                     "mean": e.mean, "std": e.std} for e in scan.entries],
    })


# ---------------------------------------------------------------------------
# One-shot helpers used by CLI subcommands
# ---------------------------------------------------------------------------

def sample_to_files(params, out_dir, n_sweeps, n_burnin, n_chains, seed,
                    with_third_order=False, track_states=False) -> None:
    out = Path(out_dir)
    stats = metropolis_sample(params, n_sweeps=n_sweeps, n_burnin=n_burnin,
                              n_chains=n_chains, seed=seed,
                              with_third_order=with_third_order,
                              track_states=track_states)
    tickers = params.tickers or [f"S{i:03d}" for i in range(params.n)]
    write_csv(out / "sample_means.csv", "ticker,mean,se",
              [(t, stats.means[i],
                stats.se_means[i] if stats.se_means is not None else "")
               for i, t in enumerate(tickers)])
    write_csv(out / "sample_pair_moments.csv", "ticker," + ",".join(tickers),
              [(t, *stats.pair_moments[i]) for i, t in enumerate(tickers)])
    if with_third_order:
        write_json(out / "sample_third_order.json",
                   {"tickers": list(tickers),
                    "tensor": stats.third_order.tolist()})
    if track_states:
        write_csv(out / "sample_state_counts.csv", "state,count",
                  list(enumerate(stats.state_counts.tolist())))
