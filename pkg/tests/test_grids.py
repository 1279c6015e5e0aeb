"""Grid containers, value-level validation, cropping, and container files."""

import numpy as np
import pytest

from conftest import random_pair
from windscale.errors import (AlignmentError, BoundsError, ConfigurationError,
                              ShapeError)
from windscale.grids import (COVARIATES, FACTOR, PREDICTANDS, PREDICTORS,
                             Batch, FieldGrid, SamplePair, crop, load_any,
                             load_field, load_pair, save_field, save_pair,
                             units_of, validate_grid, validate_pair)


def test_variable_catalog():
    assert len(PREDICTORS) == 7
    assert PREDICTANDS == ("u10", "v10")
    assert COVARIATES == ("me", "mg", "z0")
    assert units_of("u10") == "m/s"
    assert units_of("me") == "m"
    with pytest.raises(ConfigurationError):
        units_of("q2m")


class TestFieldGrid:
    def test_basic_accessors(self):
        g = FieldGrid(("a", "b"), np.arange(24.0).reshape(2, 3, 4), 2.5)
        assert g.shape_hw == (3, 4)
        assert g.n_channels == 2
        assert g.spacing_km == 2.5
        assert np.array_equal(g.channel("b"), np.arange(12.0, 24.0).reshape(3, 4))

    def test_data_is_copied_and_read_only(self):
        src = np.zeros((1, 2, 2))
        g = FieldGrid(("x",), src)
        src[0, 0, 0] = 99.0
        assert g.data[0, 0, 0] == 0.0
        with pytest.raises(ValueError):
            g.data[0, 0, 0] = 1.0

    def test_select_orders_channels(self):
        g = FieldGrid(("a", "b", "c"), np.arange(12.0).reshape(3, 2, 2))
        s = g.select(("c", "a"))
        assert s.channels == ("c", "a")
        assert np.array_equal(s.data[0], g.channel("c"))
        with pytest.raises(ShapeError):
            g.select(("a", "nope"))

    def test_structure_errors(self):
        with pytest.raises(ShapeError):
            FieldGrid((), np.zeros((0, 2, 2)))
        with pytest.raises(ShapeError):
            FieldGrid(("a", "a"), np.zeros((2, 2, 2)))
        with pytest.raises(ShapeError):
            FieldGrid(("a",), np.zeros((2, 2)))
        with pytest.raises(ShapeError):
            FieldGrid(("a", "b"), np.zeros((1, 2, 2)))
        with pytest.raises(ConfigurationError):
            FieldGrid(("a",), np.zeros((1, 2, 2)), spacing_km=0.0)

    def test_missing_channel(self):
        g = FieldGrid(("a",), np.zeros((1, 2, 2)))
        with pytest.raises(ShapeError):
            g.channel("b")


class TestValidation:
    def test_valid_pair_has_no_problems(self):
        assert validate_pair(random_pair()) == []

    def test_constructor_accepts_invalid_pairs(self):
        # value-level problems must not block construction
        p = random_pair()
        bad = SamplePair(low=p.low, high=p.covariates.select(("me", "mg")),
                         covariates=p.covariates, timestamp=p.timestamp)
        problems = validate_pair(bad)
        assert any("high channels" in m for m in problems)

    def test_factor_mismatch_reported_per_axis(self):
        p = random_pair(low_hw=(8, 8))
        squeezed = FieldGrid(PREDICTANDS, p.high.data[:, :56, :], p.high.spacing_km)
        covs = FieldGrid(COVARIATES, p.covariates.data[:, :56, :],
                         p.covariates.spacing_km)
        bad = SamplePair(low=p.low, high=squeezed, covariates=covs,
                         timestamp="t")
        problems = validate_pair(bad)
        assert any("factor-8 violated on H" in m for m in problems)
        assert not any("violated on W" in m for m in problems)

    def test_covariate_shape_checked_against_high(self):
        p = random_pair(low_hw=(8, 8))
        covs = FieldGrid(COVARIATES, p.covariates.data[:, :32, :32],
                         p.covariates.spacing_km)
        bad = SamplePair(low=p.low, high=p.high, covariates=covs, timestamp="t")
        assert any("covariate shape" in m for m in validate_pair(bad))

    def test_nonfinite_and_mask_range(self):
        p = random_pair()
        data = np.array(p.high.data)
        data[0, 0, 0] = np.nan
        bad_high = FieldGrid(PREDICTANDS, data, p.high.spacing_km)
        msgs = validate_grid(bad_high)
        assert any("non-finite" in m and "u10" in m for m in msgs)

        cdata = np.array(p.covariates.data)
        cdata[1, 0, 0] = 1.5
        bad_cov = FieldGrid(COVARIATES, cdata, 2.5)
        assert any("mask out of [0, 1]" in m for m in validate_grid(bad_cov))

    def test_empty_timestamp_rejected(self):
        p = random_pair()
        with pytest.raises(ConfigurationError):
            SamplePair(low=p.low, high=p.high, covariates=p.covariates,
                       timestamp="")


class TestCrop:
    def test_window_matches_manual_slices(self):
        p = random_pair(low_hw=(8, 8))
        c = crop(p, 16, 24, 32)
        assert c.high.shape_hw == (32, 32)
        assert c.low.shape_hw == (4, 4)
        assert np.array_equal(c.high.data, p.high.data[:, 16:48, 24:56])
        assert np.array_equal(c.low.data, p.low.data[:, 2:6, 3:7])
        assert np.array_equal(c.covariates.data, p.covariates.data[:, 16:48, 24:56])
        assert c.timestamp == p.timestamp
        assert validate_pair(c) == []

    def test_alignment_required(self):
        p = random_pair()
        with pytest.raises(AlignmentError):
            crop(p, 4, 0, 32)
        with pytest.raises(AlignmentError):
            crop(p, 0, 0, 36)

    def test_bounds(self):
        p = random_pair(low_hw=(8, 8))
        with pytest.raises(BoundsError):
            crop(p, 0, 0, 0)
        with pytest.raises(BoundsError):
            crop(p, -8, 0, 16)
        with pytest.raises(BoundsError):
            crop(p, 48, 48, 32)


class TestBatch:
    def _arrays(self, b=2, h=4):
        low = np.zeros((b, 7, h, h))
        high = np.zeros((b, 2, 8 * h, 8 * h))
        cov = np.zeros((3, 8 * h, 8 * h))
        return low, high, cov

    def test_shared_and_per_sample_covariates(self):
        low, high, cov = self._arrays()
        assert Batch(low, high, cov).batch_size == 2
        per = np.zeros((2,) + cov.shape)
        assert Batch(low, high, per).batch_size == 2

    def test_shape_errors(self):
        low, high, cov = self._arrays()
        with pytest.raises(ShapeError):
            Batch(low[0], high, cov)
        with pytest.raises(ShapeError):
            Batch(low, high[:1], cov)
        with pytest.raises(ShapeError):
            Batch(low[:, :5], high, cov)
        with pytest.raises(ShapeError):
            Batch(low, high[:, :, :16], cov)
        with pytest.raises(ShapeError):
            Batch(low, high, cov[:2])
        with pytest.raises(ShapeError):
            Batch(low, high, np.zeros((3,) + cov.shape))  # B=3 != 2


class TestContainers:
    def test_field_round_trip_bit_identical(self, tmp_path):
        g = random_pair().covariates
        path = tmp_path / "cov.npz"
        save_field(path, g)
        back = load_field(path)
        assert back.channels == g.channels
        assert back.spacing_km == g.spacing_km
        assert np.array_equal(back.data, g.data)

    def test_pair_round_trip_bit_identical(self, tmp_path):
        p = random_pair(seed=5)
        path = tmp_path / "pair.npz"
        save_pair(path, p)
        back = load_pair(path)
        assert back.timestamp == p.timestamp
        for a, b in ((back.low, p.low), (back.high, p.high),
                     (back.covariates, p.covariates)):
            assert a.channels == b.channels
            assert np.array_equal(a.data, b.data)

    def test_kind_mismatch_rejected(self, tmp_path):
        p = random_pair()
        save_pair(tmp_path / "pair.npz", p)
        save_field(tmp_path / "field.npz", p.covariates)
        with pytest.raises(ConfigurationError):
            load_field(tmp_path / "pair.npz")
        with pytest.raises(ConfigurationError):
            load_pair(tmp_path / "field.npz")

    def test_load_any_dispatches(self, tmp_path):
        p = random_pair()
        save_pair(tmp_path / "pair.npz", p)
        save_field(tmp_path / "field.npz", p.covariates)
        assert isinstance(load_any(tmp_path / "pair.npz"), SamplePair)
        assert isinstance(load_any(tmp_path / "field.npz"), FieldGrid)

    def test_foreign_npz_rejected(self, tmp_path):
        np.savez(tmp_path / "other.npz", data=np.zeros((1, 2, 2)))
        with pytest.raises(ConfigurationError):
            load_any(tmp_path / "other.npz")
