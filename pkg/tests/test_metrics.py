"""Evaluation metrics: RMSE, median/MAD, RAPSD, LSD, and the scoring harness."""

import numpy as np
import pytest

from conftest import random_pair
from windscale.errors import ConfigurationError, NumericError, ShapeError
from windscale.grids import PREDICTANDS, FieldGrid
from windscale.infer import trim_pair
from windscale.metrics import (MetricRow, Rapsd, aggregate, baseline_method,
                               evaluate, lsd, lsd_fields, load_rapsd_csv,
                               load_report, median_mad, rapsd, rapsd_curves,
                               rmse, save_rapsd_csv, save_report,
                               summary_table)

RNG = np.random.default_rng(3)


def brute_force_rapsd(x):
    """Direct-DFT ring average, the slow reference implementation."""
    h, w = x.shape
    m = min(h, w)
    f = np.zeros((h, w), dtype=complex)
    for p in range(h):
        for q in range(w):
            for i in range(h):
                for j in range(w):
                    f[p, q] += x[i, j] * np.exp(-2j * np.pi * (p * i / h + q * j / w))
    f /= np.sqrt(h * w)  # ortho normalization
    power = np.abs(f) ** 2 / (h * w)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    ring = np.rint(np.hypot(fy, fx) * m).astype(int)
    sums, counts = {}, {}
    for p in range(h):
        for q in range(w):
            if p == 0 and q == 0:
                continue
            k = ring[p, q]
            sums[k] = sums.get(k, 0.0) + power[p, q]
            counts[k] = counts.get(k, 0) + 1
    rings = sorted(sums)
    return (np.array([r / m for r in rings]),
            np.array([sums[r] / counts[r] for r in rings]),
            np.array([counts[r] for r in rings]))


class TestScalarMetrics:
    def test_rmse_hand_case(self):
        a = np.array([[0.0, 0.0], [0.0, 0.0]])
        b = np.array([[3.0, 4.0], [3.0, 4.0]])
        assert rmse(a, b) == pytest.approx(np.sqrt(12.5))

    def test_rmse_shape_check(self):
        with pytest.raises(ShapeError):
            rmse(np.zeros(3), np.zeros(4))

    def test_median_mad_hand_cases(self):
        assert median_mad([1.0, 2.0, 3.0]) == (2.0, 1.0)
        assert median_mad([5.0, 5.0, 5.0]) == (5.0, 0.0)
        with pytest.raises(ConfigurationError):
            median_mad([])


class TestRapsd:
    def test_matches_brute_force_oracle(self):
        x = RNG.normal(size=(8, 8))
        got = rapsd(x)
        r, power, counts = brute_force_rapsd(x)
        assert np.allclose(got.r, r, atol=1e-12)
        assert np.allclose(got.power, power, rtol=1e-10)
        assert np.array_equal(got.counts, counts)

    def test_total_power_is_variance(self):
        # Parseval with the DC bin removed: ring-binned total power equals
        # the population variance of the field
        x = RNG.normal(size=(16, 24))
        spec = rapsd(x)
        assert spec.total_power() == pytest.approx(x.var(), rel=1e-12)

    def test_dc_excluded(self):
        x = RNG.normal(size=(16, 16))
        a = rapsd(x)
        b = rapsd(x + 1000.0)
        assert np.allclose(a.power, b.power, rtol=1e-6)

    def test_pure_cosine_lands_in_one_ring(self):
        n = 16
        i = np.arange(n)
        x = np.cos(2 * np.pi * 3 * i / n)[None, :] * np.ones((n, 1))
        spec = rapsd(x)
        k = np.argmin(np.abs(spec.r - 3 / n))
        assert spec.power[k] * spec.counts[k] == pytest.approx(spec.total_power())

    def test_small_fields_rejected(self):
        with pytest.raises(ShapeError):
            rapsd(np.zeros((4, 16)))
        with pytest.raises(ShapeError):
            rapsd(np.zeros((16,)))


class TestLsd:
    def test_identical_fields_give_zero(self):
        x = RNG.normal(size=(16, 16))
        assert lsd_fields(x, x) == 0.0

    def test_uniform_power_ratio_gives_ten_db(self):
        x = RNG.normal(size=(16, 16))
        assert lsd_fields(x, np.sqrt(10.0) * x) == pytest.approx(10.0)

    def test_symmetry_is_bitwise(self):
        a = RNG.normal(size=(16, 16))
        b = RNG.normal(size=(16, 16))
        assert lsd_fields(a, b) == lsd_fields(b, a)

    def test_zero_power_raises_listing_rings(self):
        flat = np.zeros((16, 16))
        x = RNG.normal(size=(16, 16))
        with pytest.raises(NumericError, match="rings"):
            lsd_fields(x, flat)

    def test_power_floor_is_explicit_opt_in(self):
        flat = np.zeros((16, 16))
        x = RNG.normal(size=(16, 16))
        val = lsd_fields(x, flat, power_floor=1e-12)
        assert np.isfinite(val) and val > 0
        with pytest.raises(ConfigurationError):
            lsd_fields(x, flat, power_floor=0.0)

    def test_binning_mismatch_rejected(self):
        a = rapsd(RNG.normal(size=(16, 16)))
        b = rapsd(RNG.normal(size=(24, 24)))
        with pytest.raises(ShapeError):
            lsd(a, b)


def perfect_method(pair):
    return trim_pair(pair).high


class TestEvaluate:
    @pytest.fixture()
    def pairs(self):
        return [random_pair(seed=i, timestamp=f"h{i:04d}") for i in range(3)]

    def test_rows_per_pair_method_component(self, pairs):
        rows = evaluate(pairs, {"perfect": perfect_method,
                                "near": baseline_method("nearest")})
        assert len(rows) == 3 * 2 * 2
        perfect = [r for r in rows if r.method == "perfect"]
        assert all(r.rmse == 0.0 and r.lsd == 0.0 for r in perfect)
        assert {r.component for r in rows} == set(PREDICTANDS)

    def test_regions_add_windows(self, pairs):
        regions = {"inner": (8, 8, 16, 16)}
        rows = evaluate(pairs, {"perfect": perfect_method}, regions=regions)
        assert len(rows) == 3 * 1 * 2 * 2  # full domain + one region
        assert {r.region for r in rows} == {"", "inner"}

    def test_bad_region_rejected(self, pairs):
        with pytest.raises(ConfigurationError):
            evaluate(pairs, {"p": perfect_method}, regions={"r": (0, 0, 4, 4)})
        with pytest.raises(ConfigurationError):
            evaluate(pairs, {"p": perfect_method}, regions={"r": (60, 60, 16, 16)})

    def test_workers_do_not_change_results(self, pairs):
        methods = {"near": baseline_method("nearest")}
        seq = evaluate(pairs, methods, n_workers=1)
        par = evaluate(pairs, methods, n_workers=3)
        assert seq == par

    def test_method_contract_enforced(self, pairs):
        def wrong_shape(pair):
            tp = trim_pair(pair)
            return FieldGrid(PREDICTANDS, tp.high.data[:, :32, :32],
                             tp.high.spacing_km)
        with pytest.raises(ShapeError):
            evaluate(pairs[:1], {"bad": wrong_shape})

    def test_empty_inputs_rejected(self, pairs):
        with pytest.raises(ConfigurationError):
            evaluate([], {"p": perfect_method})
        with pytest.raises(ConfigurationError):
            evaluate(pairs, {})
        with pytest.raises(ConfigurationError):
            evaluate(pairs, {"p": perfect_method}, n_workers=0)

    def test_baseline_method_unknown_kind(self, pairs):
        method = baseline_method("cubic")
        with pytest.raises(ConfigurationError):
            method(pairs[0])


class TestAggregation:
    def _rows(self):
        return [
            MetricRow("h0", "a", "u10", "", 1.0, 10.0),
            MetricRow("h1", "a", "u10", "", 3.0, 30.0),
            MetricRow("h2", "a", "u10", "", 2.0, 20.0),
            MetricRow("h0", "b", "u10", "", 5.0, 5.0),
        ]

    def test_media_and_mad_per_group(self):
        agg = aggregate(self._rows(), keys=("method",))
        a = next(g for g in agg if g["method"] == "a")
        assert a["n"] == 3
        assert a["rmse_median"] == 2.0 and a["rmse_mad"] == 1.0
        assert a["lsd_median"] == 20.0

    def test_summary_table_marks_best(self):
        table = summary_table(self._rows())
        lines = table.splitlines()
        assert lines[0].startswith("method")
        a_line = next(l for l in lines if l.startswith("a"))
        b_line = next(l for l in lines if l.startswith("b"))
        assert "2.0000" in a_line and "*" in a_line  # best rmse
        assert "5.0000" in b_line and "*" in b_line  # best lsd

    def test_empty_rejected(self):
        with pytest.raises(ConfigurationError):
            aggregate([])


class TestCurvesAndFiles:
    def test_rapsd_curves_include_reference(self):
        pairs = [random_pair(seed=i, timestamp=f"h{i:04d}") for i in range(2)]
        rows = rapsd_curves(pairs, {"near": baseline_method("nearest")})
        methods = {r["method"] for r in rows}
        assert methods == {"reference", "near"}
        ref = [r for r in rows if r["method"] == "reference"]
        assert all(np.isfinite(r["power"]) and r["power"] > 0 for r in ref)
        assert all(r["component"] in PREDICTANDS for r in rows)

    def test_report_round_trip(self, tmp_path):
        rows = evaluate([random_pair(seed=1, timestamp="h0001")],
                        {"near": baseline_method("nearest")})
        save_report(tmp_path / "report.csv", rows)
        assert load_report(tmp_path / "report.csv") == rows

    def test_rapsd_csv_round_trip(self, tmp_path):
        pairs = [random_pair(seed=4, timestamp="h0004")]
        rows = rapsd_curves(pairs, {"near": baseline_method("nearest")})
        save_rapsd_csv(tmp_path / "rapsd.csv", rows)
        back = load_rapsd_csv(tmp_path / "rapsd.csv")
        assert len(back) == len(rows)
        assert back[0]["method"] == rows[0]["method"]
        assert back[0]["power"] == pytest.approx(rows[0]["power"])

    def test_missing_files_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_report(tmp_path / "absent.csv")
        with pytest.raises(ConfigurationError):
            load_rapsd_csv(tmp_path / "absent.csv")
