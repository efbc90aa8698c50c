import numpy as np
import pytest

from isingmarket.panels import (PricePanel, ReturnPanel, WindowSpec, binarize,
                                load_price_csv, load_sector_csv, log_returns,
                                n_windows, shuffle_window, standardize,
                                standardize_window, windows)


def make_prices(values):
    values = np.asarray(values, dtype=float)
    n, length = values.shape
    tickers = tuple(f"T{i}" for i in range(n))
    dates = tuple(f"d{t:05d}" for t in range(length))
    return PricePanel(tickers, dates, values)


def make_returns(values, kind="raw"):
    values = np.asarray(values, dtype=float)
    n, length = values.shape
    tickers = tuple(f"T{i}" for i in range(n))
    dates = tuple(f"d{t:05d}" for t in range(length))
    return ReturnPanel(tickers, dates, values, kind)


class TestLogReturns:
    def test_flat_prices_give_zero(self):
        r = log_returns(make_prices([[100.0, 100.0]]))
        np.testing.assert_array_equal(r.values, [[0.0]])

    def test_direct_definition(self):
        r = log_returns(make_prices([[100.0, 110.0, 99.0]]))
        np.testing.assert_allclose(r.values, [[np.log(1.1), np.log(0.9)]], rtol=1e-12)
        assert r.kind == "raw"

    def test_length_bookkeeping_full_history(self):
        # 5828 trading days of prices give 5827 return steps
        rng = np.random.default_rng(0)
        prices = np.exp(np.cumsum(rng.normal(0, 0.01, size=(2, 5828)), axis=1)) * 100
        r = log_returns(make_prices(prices))
        assert r.n_steps == 5827
        spec = WindowSpec(window_size=250)
        assert n_windows(r.n_steps, spec) == 5578
        assert sum(1 for _ in windows(r, spec)) == 5578

    def test_dates_shift_to_later_price(self):
        panel = make_prices([[1.0, 2.0, 3.0]])
        r = log_returns(panel)
        assert r.dates == panel.dates[1:]


class TestBinarize:
    def test_sign_with_zero_rule(self):
        r = make_returns([[0.02, -0.01, 0.0]])
        np.testing.assert_array_equal(binarize(r).values, [[1.0, -1.0, 1.0]])

    def test_all_negative(self):
        r = make_returns([[-0.1, -0.2, -0.3]])
        np.testing.assert_array_equal(binarize(r).values, [[-1.0, -1.0, -1.0]])

    def test_idempotent_on_binary(self):
        r = binarize(make_returns([[0.5, -0.5, 0.1, -0.1]]))
        again = binarize(r)
        np.testing.assert_array_equal(again.values, r.values)

    def test_sign_agrees_with_input(self):
        rng = np.random.default_rng(1)
        r = make_returns(rng.normal(size=(4, 100)))
        b = binarize(r)
        assert np.all(b.values * r.values >= 0.0)

    def test_rejects_standardized(self):
        r = make_returns([[1.0, -1.0, 0.5, -0.5]], kind="standardized")
        with pytest.raises(ValueError):
            binarize(r)


class TestStandardize:
    def test_three_point_window(self):
        r = make_returns([[1.0, 2.0, 3.0]])
        out = standardize(r, WindowSpec(window_size=3, stride=3))
        sigma = np.std([1.0, 2.0, 3.0])  # population
        np.testing.assert_allclose(out.values, [[-1 / sigma, 0.0, 1 / sigma]],
                                   rtol=1e-12)

    def test_constant_window_rejected(self):
        r = make_returns([[1.0, 1.0, 1.0]])
        with pytest.raises(ValueError, match="zero variance"):
            standardize(r, WindowSpec(window_size=3, stride=3))

    def test_gaussian_windows_have_unit_moments(self):
        rng = np.random.default_rng(2)
        r = make_returns(rng.normal(2.0, 5.0, size=(3, 400)))
        out = standardize(r, WindowSpec(window_size=100, stride=100))
        for k in range(4):
            block = out.values[:, k * 100 : (k + 1) * 100]
            np.testing.assert_allclose(block.mean(axis=1), 0.0, atol=1e-10)
            np.testing.assert_allclose(block.std(axis=1), 1.0, atol=1e-10)

    def test_overlapping_stride_rejected(self):
        r = make_returns(np.random.default_rng(3).normal(size=(2, 10)))
        with pytest.raises(ValueError, match="non-overlapping"):
            standardize(r, WindowSpec(window_size=5, stride=1))

    def test_window_helper_names_series(self):
        with pytest.raises(ValueError, match="series 1"):
            standardize_window(np.array([[1.0, 2.0], [3.0, 3.0]]))


class TestWindows:
    def test_counts_and_end_dates(self):
        r = make_returns(np.arange(10.0).reshape(2, 5))
        got = list(windows(r, WindowSpec(window_size=3)))
        assert len(got) == 3
        assert [d for d, _ in got] == ["d00002", "d00003", "d00004"]
        np.testing.assert_array_equal(got[0][1], r.values[:, 0:3])

    def test_single_full_window(self):
        r = make_returns(np.arange(10.0).reshape(2, 5))
        got = list(windows(r, WindowSpec(window_size=5)))
        assert len(got) == 1

    def test_too_long_window_rejected(self):
        r = make_returns(np.arange(10.0).reshape(2, 5))
        with pytest.raises(ValueError):
            list(windows(r, WindowSpec(window_size=6)))

    def test_stride_one_reconstructs_tail(self):
        rng = np.random.default_rng(4)
        r = make_returns(rng.normal(size=(3, 40)))
        t = 7
        tail = np.stack([w[:, -1] for _, w in windows(r, WindowSpec(t))], axis=1)
        np.testing.assert_array_equal(tail, r.values[:, t - 1 :])


class TestShuffleWindow:
    def test_rows_are_permutations(self):
        w = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        out = shuffle_window(w, seed=0)
        np.testing.assert_array_equal(np.sort(out, axis=1), np.sort(w, axis=1))

    def test_sorted_rows_bit_exact(self):
        rng = np.random.default_rng(5)
        w = rng.normal(size=(6, 50))
        out = shuffle_window(w, seed=9)
        assert np.array_equal(np.sort(out, axis=1), np.sort(w, axis=1))

    def test_means_preserved(self):
        rng = np.random.default_rng(6)
        w = rng.normal(size=(4, 200))
        out = shuffle_window(w, seed=3)
        np.testing.assert_allclose(out.mean(axis=1), w.mean(axis=1), atol=1e-14)

    def test_deterministic_given_seed(self):
        w = np.random.default_rng(7).normal(size=(3, 20))
        assert np.array_equal(shuffle_window(w, 11), shuffle_window(w, 11))
        assert not np.array_equal(shuffle_window(w, 11), shuffle_window(w, 12))

    def test_cross_series_covariance_killed(self):
        # correlated +-1 rows; shuffling should drive the mean off-diagonal
        # covariance to zero on average over seeds
        rng = np.random.default_rng(8)
        common = np.sign(rng.normal(size=300))
        w = np.where(rng.random((5, 300)) < 0.8, common, -common)
        offdiag_means = []
        for seed in range(100):
            s = shuffle_window(w, seed)
            c = np.cov(s, bias=True)
            offdiag_means.append(c[~np.eye(5, dtype=bool)].mean())
        offdiag_means = np.asarray(offdiag_means)
        se = offdiag_means.std(ddof=1) / np.sqrt(len(offdiag_means))
        assert abs(offdiag_means.mean()) < max(3 * se, 1e-3)
        # the unshuffled window is strongly correlated by construction
        raw = np.cov(w, bias=True)
        assert raw[~np.eye(5, dtype=bool)].mean() > 0.2


class TestPanelValidation:
    def test_prices_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            make_prices([[1.0, -2.0]])

    def test_dates_must_increase(self):
        with pytest.raises(ValueError, match="increasing"):
            PricePanel(("A",), ("d2", "d1"), np.array([[1.0, 2.0]]))

    def test_binary_kind_enforced(self):
        with pytest.raises(ValueError, match="binary"):
            make_returns([[0.5, 1.0]], kind="binary")

    def test_values_read_only(self):
        r = make_returns([[1.0, 2.0]])
        with pytest.raises(ValueError):
            r.values[0, 0] = 9.0


class TestCsvIngest:
    def test_loads_and_drops_bad_tickers(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text(
            "date,AAA,BBB,CCC,DDD\n"
            "2001-01-01,10.0,5.0,,3.0\n"
            "2001-01-02,10.5,-5.0,2.0,3.1\n"
            "2001-01-03,10.2,5.1,2.1,3.2\n"
        )
        panel, report = load_price_csv(path)
        assert panel.tickers == ("AAA", "DDD")
        assert set(report.dropped) == {"BBB", "CCC"}
        assert "non-positive" in report.dropped["BBB"]
        assert report.n_rows == 3

    def test_all_bad_is_an_error(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("date,AAA\n2001-01-01,0\n2001-01-02,1\n")
        with pytest.raises(ValueError, match="every ticker"):
            load_price_csv(path)

    def test_header_checked(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("day,AAA\n2001-01-01,1\n2001-01-02,1\n")
        with pytest.raises(ValueError, match="header"):
            load_price_csv(path)

    def test_sector_csv(self, tmp_path):
        path = tmp_path / "sectors.csv"
        path.write_text("ticker,name,sector\nAAA,Alpha Inc.,Tech\nBBB,Beta Co.,Energy\n")
        smap = load_sector_csv(path)
        assert smap.labels_for(["BBB", "AAA"]) == ["Energy", "Tech"]
        assert smap.sectors == ("Energy", "Tech")
        with pytest.raises(KeyError):
            smap.labels_for(["ZZZ"])
