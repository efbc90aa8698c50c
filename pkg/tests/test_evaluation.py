import numpy as np
import pytest

from isingmarket.evaluation import (compare_methods, fit_power_law, nrmse,
                                    pearson, scaling_exponents,
                                    subset_coupling_scan)
from isingmarket.inference import InferenceConfig, infer_nmf
from isingmarket.model import IsingParams
from isingmarket.panels import ReturnPanel
from isingmarket.stats import window_stats
from isingmarket.synthetic import (BlockSpec, block_model, random_model,
                                   sample_binary_panel, synthetic_tickers)


def binary_panel_from(params, n_steps, seed):
    values = sample_binary_panel(params, n_steps, seed=seed, n_chains=64,
                                 n_burnin=200)
    tickers = params.tickers or synthetic_tickers(params.n)
    dates = tuple(f"d{t:05d}" for t in range(n_steps))
    return ReturnPanel(tickers, dates, values, "binary")


class TestNrmse:
    def test_identical_vectors(self):
        y = np.array([1.0, 2.0, 3.0])
        assert nrmse(y, y) == 0.0

    def test_constant_at_reference_mean_is_one(self):
        y = np.array([1.0, 2.0, 3.0, 6.0])
        x = np.full(4, y.mean())
        assert nrmse(x, y) == pytest.approx(1.0, abs=1e-12)

    def test_invariant_under_common_affine_map(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=30)
        y = rng.normal(size=30)
        base = nrmse(x, y)
        for a, b in ((2.0, 1.0), (-0.5, 3.0), (10.0, -7.0)):
            assert nrmse(a * x + b, a * y + b) == pytest.approx(base, rel=1e-10)

    def test_zero_iff_equal(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=20)
        y = x.copy()
        y[3] += 1e-6
        assert nrmse(x, x) == 0.0
        assert nrmse(x, y) > 1e-12

    def test_constant_reference_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            nrmse(np.array([1.0, 2.0]), np.array([3.0, 3.0]))


class TestPearson:
    def test_invariant_under_separate_positive_affine_maps(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=40)
        y = x + rng.normal(size=40)
        base = pearson(x, y)
        assert pearson(3 * x + 1, 0.5 * y - 2) == pytest.approx(base, rel=1e-10)

    def test_equal_constants_define_unit_correlation(self):
        assert pearson(np.ones(5), np.ones(5)) == 1.0


class TestCompareMethods:
    def test_identical_params(self):
        p = random_model(4, 0.5, 0.3, seed=3)
        cmp = compare_methods(p, p)
        assert cmp.h.nrmse == 0.0 and cmp.j.nrmse == 0.0
        assert cmp.h.pearson == pytest.approx(1.0)
        assert cmp.j.pearson == pytest.approx(1.0)

    def test_doubled_zero_mean_reference(self):
        # hand computation: x = a, y = 2a with zero-mean a gives
        # nrmse = sqrt(mean(a^2) / (4 var(a))) = 0.5 and perfect correlation
        h = np.array([-1.0, 0.0, 1.0])
        j = np.zeros((3, 3))
        j[0, 1] = j[1, 0] = 0.2
        j[0, 2] = j[2, 0] = -0.2
        a = IsingParams(h, j)
        b = IsingParams(2 * h, 2 * j)
        cmp = compare_methods(a, b)
        assert cmp.h.pearson == pytest.approx(1.0)
        assert cmp.h.nrmse == pytest.approx(0.5, abs=1e-12)
        assert cmp.j.nrmse > 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            compare_methods(random_model(3, 0.1, 0.1, seed=4),
                            random_model(4, 0.1, 0.1, seed=5))


class TestFitPowerLaw:
    def test_exact_plants(self):
        sizes = np.array([10, 20, 40, 80])
        for alpha in (-0.75, 0.0, 0.5):
            values = 3.0 * sizes.astype(float) ** alpha
            assert fit_power_law(sizes, values) == pytest.approx(alpha, abs=1e-12)

    def test_negative_values_allowed_with_common_sign(self):
        sizes = np.array([10, 20, 40])
        values = -2.0 * sizes.astype(float) ** 0.3
        assert fit_power_law(sizes, values) == pytest.approx(0.3, abs=1e-12)

    def test_sign_crossing_rejected(self):
        with pytest.raises(ValueError, match="sign"):
            fit_power_law([10, 20, 40], [1.0, -1.0, 1.0])

    def test_zero_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            fit_power_law([10, 20, 40], [1.0, 0.0, 1.0])


def planted_moment_params(n_sub: int) -> IsingParams:
    """Parameter source with exactly known moment scaling: the field vector
    has mean n^-0.75, population std n^0.5, skew 0 and kurtosis -2."""
    alt = np.resize([1.0, -1.0], n_sub)
    h = n_sub**-0.75 + n_sub**0.5 * alt
    return IsingParams(h, np.zeros((n_sub, n_sub)))


class TestScalingExponents:
    def make_panel(self, n=40, steps=60):
        rng = np.random.default_rng(6)
        values = np.sign(rng.normal(size=(n, steps)))
        tickers = synthetic_tickers(n)
        dates = tuple(f"d{t:05d}" for t in range(steps))
        return ReturnPanel(tickers, dates, values, "binary")

    def test_planted_power_laws_recovered(self):
        panel = self.make_panel()
        report = scaling_exponents(
            panel, panel.dates[-1], window_size=50,
            sizes=[10, 20, 40], repeats=4,
            method=lambda window: planted_moment_params(window.shape[0]),
            seed=0)
        assert report.h["mean"].alpha == pytest.approx(-0.75, abs=1e-9)
        assert report.h["std"].alpha == pytest.approx(0.5, abs=1e-9)
        assert report.h["kurt"].alpha == pytest.approx(0.0, abs=1e-9)
        # skew is exactly zero at every size: excluded, not fabricated
        assert report.h["skew"].n_excluded == 4
        assert np.isnan(report.h["skew"].alpha)
        # couplings were identically zero: every moment excluded
        assert report.j["mean"].n_excluded == 4

    def test_size_independent_std_has_zero_exponent(self):
        panel = self.make_panel()

        def flat_std(window):
            n_sub = window.shape[0]
            alt = np.resize([1.0, -1.0], n_sub)
            return IsingParams(2.0 + alt, np.zeros((n_sub, n_sub)))

        report = scaling_exponents(panel, panel.dates[-1], 50,
                                   sizes=[10, 20, 40], repeats=3,
                                   method=flat_std, seed=1)
        assert report.h["std"].alpha == pytest.approx(0.0, abs=1e-9)

    def test_inference_method_end_to_end(self):
        truth = random_model(24, 0.2, 0.05, seed=7)
        panel = binary_panel_from(truth, 600, seed=8)
        report = scaling_exponents(panel, panel.dates[-1], 600,
                                   sizes=[6, 12, 24], repeats=3,
                                   method="nmf", seed=2)
        fit = report.h["std"]
        assert np.isfinite(fit.alpha)
        assert len(fit.alphas) + fit.n_excluded == 3

    def test_needs_three_sizes(self):
        panel = self.make_panel()
        with pytest.raises(ValueError, match="three distinct"):
            scaling_exponents(panel, panel.dates[-1], 50, sizes=[10, 20],
                              repeats=2, method="nmf")

    def test_unknown_date_rejected(self):
        panel = self.make_panel()
        with pytest.raises(ValueError, match="not in panel"):
            scaling_exponents(panel, "never", 50, sizes=[5, 10, 20], repeats=1,
                              method="nmf")


class TestSubsetCouplingScan:
    def test_single_total_matches_direct_inference(self):
        truth = random_model(30, 0.1, 0.08, seed=9)
        panel = binary_panel_from(truth, 700, seed=10)
        subset = list(range(3, 23))  # 20 tickers
        scan = subset_coupling_scan(panel, panel.dates[-1], 700, subset,
                                    totals=[20], method="nmf", seed=11)
        window = panel.values[:, -700:]
        direct = infer_nmf(window_stats(window[np.asarray(subset)]),
                           InferenceConfig()).params.J
        assert np.array_equal(scan.entries[0].couplings, direct)

    def test_totals_validated(self):
        truth = random_model(10, 0.1, 0.05, seed=12)
        panel = binary_panel_from(truth, 200, seed=13)
        with pytest.raises(ValueError, match="exceeds"):
            subset_coupling_scan(panel, panel.dates[-1], 200, list(range(5)),
                                 totals=[11], method="nmf")
        with pytest.raises(ValueError, match="at least the subset"):
            subset_coupling_scan(panel, panel.dates[-1], 200, list(range(5)),
                                 totals=[4], method="nmf")

    def test_block_model_extremes_stable_across_totals(self):
        # strongest subset couplings keep their identity as the universe grows
        params, _ = block_model(BlockSpec(n_stocks=30, n_sectors=3,
                                          j_intra=0.12, j_inter=0.0), seed=14)
        panel = binary_panel_from(params, 1500, seed=15)
        subset = [0, 1, 2, 3, 10, 11, 12, 13, 20, 21, 22, 23]
        scan = subset_coupling_scan(panel, panel.dates[-1], 1500, subset,
                                    totals=[12, 20, 30], method="nmf", seed=16)
        tops = [{(i, j) for i, j, _ in entry.top_pairs} for entry in scan.entries]
        assert len(tops[0] & tops[-1]) >= 8
        # couplings shrink as more of the system is modeled explicitly
        assert scan.entries[-1].mean < scan.entries[0].mean
