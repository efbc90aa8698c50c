"""
Command-line interface.

Subcommands either orchestrate the windowed pipeline (stats, infer, mst,
cutoff, scaling, subset-scan, energy, compare, run) or operate one-shot on
parameter/price files (ingest, synth, sample, and the --params modes of
mst/cutoff/energy/compare).

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 non-convergence under --strict.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import compare_methods
from .model import energy_split, params_from_json
from .network import (coupling_cutoff_scan, edges_to_csv, edges_to_dot,
                      eigen_cutoff_scan, mst_result)
from .panels import binarize, load_price_csv, load_sector_csv, log_returns
from .pipeline import (ConfigError, NonConvergenceError, config_from_mapping,
                       parse_config_file, run, sample_to_files, write_csv,
                       write_json)
from .stats import window_stats
from .synthetic import BlockSpec, generate_synthetic, truth_from_json


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--seed", type=int, help="global random seed")
    p.add_argument("--jobs", type=int, help="parallel window workers")
    p.add_argument("--out-dir", help="output directory")


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--prices", help="price CSV (date,TICKER1,...)")
    p.add_argument("--sectors", help="sector CSV (ticker,name,sector)")
    p.add_argument("--kind", choices=["raw", "standardized", "binary"])
    p.add_argument("-T", "--window-size", type=int, dest="window_size")
    p.add_argument("--stride", type=int)
    p.add_argument("--method", dest="methods",
                   help="comma-separated inference methods")
    p.add_argument("--diag-trick", dest="diag_trick", choices=["on", "off"])
    p.add_argument("--eta-h", type=float, dest="eta_h")
    p.add_argument("--eta-j", type=float, dest="eta_j")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--tol", type=float)
    p.add_argument("--ridge", type=float)
    p.add_argument("--mc-sweeps", type=int, dest="mc_sweeps")
    p.add_argument("--mc-chains", type=int, dest="mc_chains")
    p.add_argument("--mc-burnin", type=int, dest="mc_burnin")
    p.add_argument("--strict", action="store_true", default=None)


def _pipeline_mapping(args, stages: str | None) -> dict:
    mapping: dict = {}
    if args.config:
        mapping.update(parse_config_file(args.config))
    for key in ("prices", "sectors", "kind", "window_size", "stride", "methods",
                "eta_h", "eta_j", "max_iters", "tol", "ridge", "mc_sweeps",
                "mc_chains", "mc_burnin", "seed", "jobs", "strict"):
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = value
    if getattr(args, "diag_trick", None) is not None:
        mapping["diag_trick"] = args.diag_trick == "on"
    if args.out_dir is not None:
        mapping["out_dir"] = args.out_dir
    if stages is not None:
        mapping["stages"] = stages
    for key in ("scaling_sizes", "scaling_repeats", "subset_indices",
                "subset_totals", "compare_pairs", "n_boot", "emit_matrices",
                "with_third_order", "eigen_top_k", "cutoff_points"):
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = value
    return mapping


def _run_pipeline(args, stages: str | None) -> int:
    cfg = config_from_mapping(_pipeline_mapping(args, stages))
    manifest = run(cfg)
    print(f"wrote {cfg.out_dir} ({manifest['windows']} windows)")
    return 0


# ---------------------------------------------------------------------------
# One-shot commands
# ---------------------------------------------------------------------------

def _cmd_ingest(args) -> int:
    panel, report = load_price_csv(args.prices)
    out = Path(args.out_dir or ".")
    payload = {"n_rows": report.n_rows, "kept": report.kept,
               "dropped": report.dropped,
               "n_tickers": panel.n_series, "n_days": panel.n_days}
    if args.sectors:
        sector_map = load_sector_csv(args.sectors)
        payload["sectors"] = {t: sector_map.mapping[t] for t in panel.tickers
                              if t in sector_map.mapping}
        missing = [t for t in panel.tickers if t not in sector_map.mapping]
        if missing:
            raise ConfigError(f"tickers without sector assignment: {missing}")
    write_json(out / "ingest_report.json", payload)
    if args.emit_returns:
        returns = log_returns(panel)
        if args.emit_returns == "binary":
            returns = binarize(returns)
        write_csv(out / f"returns_{args.emit_returns}.csv",
                  "date," + ",".join(panel.tickers),
                  [(returns.dates[t], *returns.values[:, t])
                   for t in range(returns.n_steps)])
    print(f"kept {panel.n_series} tickers x {panel.n_days} days; "
          f"dropped {len(report.dropped)}")
    return 0


def _cmd_synth(args) -> int:
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    if args.truth:
        model = truth_from_json(args.truth)
        sectors_path = None
    else:
        model = BlockSpec(args.n_stocks, args.n_sectors, args.j_intra,
                          args.j_inter, args.h_scale)
        sectors_path = out / "sectors.csv"
    generate_synthetic(out / "prices.csv", out / "truth.json",
                       n_days=args.n_days, model=model,
                       seed=args.seed if args.seed is not None else 0,
                       out_sectors=sectors_path)
    print(f"wrote {out / 'prices.csv'} and ground truth")
    return 0


def _cmd_sample(args) -> int:
    params = params_from_json(Path(args.params).read_text())
    sample_to_files(params, args.out_dir or ".", n_sweeps=args.sweeps,
                    n_burnin=args.burnin, n_chains=args.chains,
                    seed=args.seed if args.seed is not None else 0,
                    with_third_order=args.third_order,
                    track_states=args.track_states)
    print(f"sampled {args.chains * args.sweeps} configurations")
    return 0


def _load_params_and_labels(args):
    params = params_from_json(Path(args.params).read_text())
    if not params.tickers:
        raise ConfigError(f"{args.params} carries no tickers; cannot join sectors")
    sector_map = load_sector_csv(args.sectors)
    return params, list(params.tickers), sector_map.labels_for(params.tickers)


def _cmd_mst(args) -> int:
    if not args.params:
        return _run_pipeline(args, "mst")
    params, tickers, labels = _load_params_and_labels(args)
    tree = mst_result(params.J, labels)
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "mst.csv").write_text(edges_to_csv(tree.edges, tickers, labels))
    (out / "mst.dot").write_text(edges_to_dot(tree.edges, tickers, labels))
    write_json(out / "mst_summary.json",
               {"q_mst": tree.q_mst,
                "clusters": tree.cluster_sizes,
                "disconnected": tree.disconnected})
    print(f"Q_mst = {tree.q_mst:.4f}")
    return 0


def _cmd_cutoff(args) -> int:
    if not args.params:
        return _run_pipeline(args, "cutoff")
    params, _, labels = _load_params_and_labels(args)
    j = params.J
    out = Path(args.out_dir or ".")
    iu = np.triu_indices(j.shape[0], k=1)
    n_pts = args.cutoff_points or 15
    th = np.linspace(j[iu].min(), j[iu].max(), n_pts + 2)[1:-1]
    pts = coupling_cutoff_scan(j, labels, list(th), args.direction)
    write_csv(out / "coupling_scan.csv", "threshold,q_mst,disconnected",
              [(p.threshold, p.q_mst, p.disconnected) for p in pts])
    lam = np.linalg.eigvalsh(j)
    th_e = np.linspace(lam.min(), lam.max(), n_pts + 2)[1:-1]
    pts_e = eigen_cutoff_scan(j, labels, list(th_e), args.direction)
    write_csv(out / "eigen_scan.csv", "threshold,q_mst,disconnected",
              [(p.threshold, p.q_mst, p.disconnected) for p in pts_e])
    print(f"wrote scans over {len(pts)} coupling and {len(pts_e)} eigen thresholds")
    return 0


def _cmd_energy(args) -> int:
    if not args.params:
        return _run_pipeline(args, "energy")
    params = params_from_json(Path(args.params).read_text())
    panel, _ = load_price_csv(args.prices)
    binary = binarize(log_returns(panel))
    t = args.window_size or binary.n_steps
    means = window_stats(binary.values[:, -t:]).means
    split = energy_split(params, means)
    out = Path(args.out_dir or ".")
    write_json(out / "energy.json", {
        "e_ext": split.e_ext, "e_int": split.e_int,
        "energy_ratio": split.energy_ratio, "bias_ratio": split.bias_ratio,
        "bias_ratio_sign": split.bias_ratio_sign,
        "h_ext_mean": float(np.mean(split.h_ext)),
        "h_int_mean": float(np.mean(split.h_int)),
    })
    print(f"E_ext={split.e_ext:.4f} E_int={split.e_int:.4f} "
          f"ratio={split.energy_ratio:.4f}")
    return 0


def _cmd_compare(args) -> int:
    if not args.a:
        return _run_pipeline(args, "compare")
    a = params_from_json(Path(args.a).read_text())
    b = params_from_json(Path(args.b).read_text())
    cmp = compare_methods(a, b)
    payload = {"h": {"nrmse": cmp.h.nrmse, "pearson": cmp.h.pearson},
               "J": {"nrmse": cmp.j.nrmse, "pearson": cmp.j.pearson}}
    if args.out_dir:
        write_json(Path(args.out_dir) / "compare.json", payload)
    print(json.dumps(payload, indent=1))
    return 0


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isingmarket",
        description="Pairwise maximum-entropy models of binarized stock returns")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a price CSV and report drops")
    _add_common(p)
    p.add_argument("--prices", required=True)
    p.add_argument("--sectors")
    p.add_argument("--emit-returns", choices=["raw", "binary"])
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("synth", help="generate synthetic prices from a planted model")
    _add_common(p)
    p.add_argument("--n-stocks", type=int, default=24)
    p.add_argument("--n-days", type=int, default=1001)
    p.add_argument("--n-sectors", type=int, default=3)
    p.add_argument("--j-intra", type=float, default=0.08)
    p.add_argument("--j-inter", type=float, default=0.0)
    p.add_argument("--h-scale", type=float, default=0.05)
    p.add_argument("--truth", help="sample from an existing parameter JSON instead")
    p.set_defaults(fn=_cmd_synth)

    for name, stages, extra in (
        ("stats", "stats", "per-window moments, spectra and summaries"),
        ("infer", "infer", "per-window parameter inference"),
        ("run", None, "full configured pipeline"),
    ):
        p = sub.add_parser(name, help=extra)
        _add_common(p)
        _add_pipeline_flags(p)
        if name == "stats":
            p.add_argument("--n-boot", type=int, dest="n_boot")
            p.add_argument("--emit-matrices", action="store_true",
                           default=None, dest="emit_matrices")
            p.add_argument("--third-order", action="store_true",
                           default=None, dest="with_third_order")
            p.add_argument("--eigen-top", type=int, dest="eigen_top_k")
        p.set_defaults(fn=lambda a, s=stages: _run_pipeline(a, s))

    p = sub.add_parser("sample", help="Monte Carlo moments of a parameter file")
    _add_common(p)
    p.add_argument("--params", required=True)
    p.add_argument("--sweeps", type=int, default=5000)
    p.add_argument("--burnin", type=int, default=1000)
    p.add_argument("--chains", type=int, default=10)
    p.add_argument("--third-order", action="store_true")
    p.add_argument("--track-states", action="store_true")
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("mst", help="maximum spanning tree and sector clustering")
    _add_common(p)
    _add_pipeline_flags(p)
    p.add_argument("--params", help="one-shot mode: parameter JSON with tickers")
    p.set_defaults(fn=_cmd_mst)

    p = sub.add_parser("cutoff", help="coupling/eigenvalue threshold scans")
    _add_common(p)
    _add_pipeline_flags(p)
    p.add_argument("--params")
    p.add_argument("--direction", choices=["discard_above", "discard_below"],
                   default="discard_above")
    p.add_argument("--cutoff-points", type=int, dest="cutoff_points")
    p.set_defaults(fn=_cmd_cutoff)

    p = sub.add_parser("scaling", help="moment scaling exponents with subset size")
    _add_common(p)
    _add_pipeline_flags(p)
    p.add_argument("--sizes", dest="scaling_sizes", required=True,
                   help="comma-separated subset sizes")
    p.add_argument("--repeats", type=int, dest="scaling_repeats")
    p.set_defaults(fn=lambda a: _run_pipeline(_coerce_int_list(a), "scaling"))

    p = sub.add_parser("subset-scan", help="fixed-subset couplings vs universe size")
    _add_common(p)
    _add_pipeline_flags(p)
    p.add_argument("--subset", dest="subset_indices", required=True,
                   help="comma-separated panel indices")
    p.add_argument("--totals", dest="subset_totals", required=True,
                   help="comma-separated universe sizes")
    p.set_defaults(fn=lambda a: _run_pipeline(_coerce_int_list(a), "subset"))

    p = sub.add_parser("energy", help="external/internal energy decomposition")
    _add_common(p)
    _add_pipeline_flags(p)
    p.add_argument("--params")
    p.set_defaults(fn=_cmd_energy)

    p = sub.add_parser("compare", help="agreement between two parameter sets")
    _add_common(p)
    _add_pipeline_flags(p)
    p.add_argument("--a", help="candidate parameter JSON")
    p.add_argument("--b", help="reference parameter JSON")
    p.add_argument("--pairs", dest="compare_pairs",
                   help="pipeline mode: comma list like nmf:exact,tap:nmf")
    p.set_defaults(fn=_cmd_compare)

    return parser


def _coerce_int_list(args):
    for key in ("scaling_sizes", "subset_indices", "subset_totals"):
        value = getattr(args, key, None)
        if isinstance(value, str):
            setattr(args, key, tuple(int(v) for v in value.split(",") if v.strip()))
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except NonConvergenceError as err:
        print(f"non-convergence: {err}", file=sys.stderr)
        return 4
    except (ValueError, ArithmeticError, KeyError, np.linalg.LinAlgError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
