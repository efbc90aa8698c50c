"""
isingmarket: pairwise maximum-entropy models of binarized stock returns.

Infers external fields and couplings from windowed binary return panels
(iterative moment matching plus four closed-form approximations), samples
the fitted models, and analyzes the resulting market structure: spanning
trees with sector clustering quality, cutoff filtering, distribution
scaling and external/internal energy decomposition.
"""

from .evaluation import (ComparisonReport, ExponentFit, MethodComparison,
                         ScalingReport, SubsetScanResult, compare_methods,
                         fit_power_law, nrmse, scaling_exponents,
                         subset_coupling_scan)
from .inference import (InferenceConfig, InferenceResult, infer, infer_exact,
                        infer_from_window, infer_ip, infer_nmf, infer_sm,
                        infer_tap, moment_residual)
from .model import (EnergySplit, IsingParams, SampleStats,
                    boltzmann_distribution, energy_split, enumerate_states,
                    exact_moments_small, hamiltonian, metropolis_sample,
                    params_from_json, params_to_json, sample_configurations,
                    third_order_from_samples)
from .network import (MstResult, ScanPoint, SectorMap, build_mst,
                      coupling_cutoff_scan, eigen_cutoff_scan, mst_result,
                      q_mst, sector_clusters, spectral_truncation)
from .panels import (IngestReport, PricePanel, ReturnPanel, WindowSpec,
                     binarize, load_price_csv, load_sector_csv, log_returns,
                     n_windows, shuffle_window, standardize,
                     standardize_window, windows)
from .stats import (MomentSummary, WindowStats, bootstrap_ci, dft_amplitudes,
                    eigen_top, moment_summary, off_diagonal_summary,
                    top_eigenpairs, window_stats)
from .synthetic import (BlockSpec, block_model, generate_synthetic,
                        random_model, sample_binary_panel)

__version__ = "0.1.0"

__all__ = [
    "BlockSpec", "ComparisonReport", "EnergySplit", "ExponentFit",
    "InferenceConfig", "InferenceResult", "IngestReport", "IsingParams",
    "MethodComparison", "MomentSummary", "MstResult", "PricePanel",
    "ReturnPanel", "SampleStats", "ScalingReport", "ScanPoint", "SectorMap",
    "SubsetScanResult", "WindowSpec", "WindowStats", "binarize", "block_model",
    "boltzmann_distribution", "bootstrap_ci", "build_mst", "compare_methods",
    "coupling_cutoff_scan", "dft_amplitudes", "eigen_cutoff_scan", "eigen_top",
    "energy_split", "enumerate_states", "exact_moments_small", "fit_power_law",
    "generate_synthetic", "hamiltonian", "infer", "infer_exact",
    "infer_from_window", "infer_ip", "infer_nmf", "infer_sm", "infer_tap",
    "load_price_csv", "load_sector_csv", "log_returns", "metropolis_sample",
    "moment_residual", "moment_summary", "mst_result", "n_windows", "nrmse",
    "off_diagonal_summary", "params_from_json", "params_to_json", "q_mst",
    "random_model", "sample_binary_panel", "sample_configurations",
    "scaling_exponents", "sector_clusters", "shuffle_window",
    "spectral_truncation", "standardize", "standardize_window",
    "subset_coupling_scan", "third_order_from_samples", "top_eigenpairs",
    "window_stats", "windows",
]
