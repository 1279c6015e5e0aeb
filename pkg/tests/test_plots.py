"""Plot rendering: inputs validated before any file is written."""

import numpy as np
import pytest

from conftest import random_pair
from windscale.errors import ConfigurationError
from windscale.grids import save_field
from windscale.metrics import (baseline_method, evaluate, rapsd_curves,
                               save_rapsd_csv, save_report)
from windscale.plots import (cutoff_wavenumber, plot_fieldmap, plot_rapsd,
                             plot_validation_curves, plot_violin)
from windscale.train import append_log


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    """A metrics log, an evaluation report, a RAPSD table, and field files."""
    root = tmp_path_factory.mktemp("plot_inputs")
    log = root / "metrics.csv"
    for step, mse in ((1, 0.9), (2, 0.8), (3, 0.7)):
        append_log(log, {"step": step, "phase": "train", "val_mse": mse})
    append_log(log, {"step": 2, "phase": "interval", "val_mse": 0.85})
    append_log(log, {"step": 4, "phase": "interval", "val_mse": 0.75})

    pairs = [random_pair(seed=i, timestamp=f"h{i:04d}") for i in range(2)]
    methods = {"nearest": baseline_method("nearest"),
               "bilinear": baseline_method("bilinear")}
    report = root / "report.csv"
    save_report(report, evaluate(pairs, methods))
    spectra = root / "rapsd.csv"
    save_rapsd_csv(spectra, rapsd_curves(pairs, methods))

    fields = []
    for i in range(2):
        path = root / f"field{i}.npz"
        save_field(path, random_pair(seed=10 + i).high)
        fields.append(path)
    return {"log": log, "report": report, "rapsd": spectra, "fields": fields,
            "root": root}


class TestCutoff:
    def test_grid_units(self):
        assert cutoff_wavenumber() == pytest.approx(1 / 8)

    def test_physical_units(self):
        assert cutoff_wavenumber(2.5) == pytest.approx(1 / 20)
        with pytest.raises(ConfigurationError):
            cutoff_wavenumber(0.0)


class TestValidationCurves:
    def test_writes_png(self, artifacts, tmp_path):
        out = tmp_path / "curves.png"
        plot_validation_curves([artifacts["log"]], labels=["run"], out_path=out)
        assert out.exists() and out.stat().st_size > 0

    def test_label_mismatch(self, artifacts, tmp_path):
        with pytest.raises(ConfigurationError):
            plot_validation_curves([artifacts["log"]], labels=["a", "b"],
                                   out_path=tmp_path / "x.png")

    def test_no_validation_points_leaves_no_file(self, tmp_path):
        log = tmp_path / "empty.csv"
        append_log(log, {"step": 1, "phase": "train"})
        out = tmp_path / "x.png"
        with pytest.raises(ConfigurationError):
            plot_validation_curves([log], out_path=out)
        assert not out.exists()


class TestViolin:
    def test_writes_png(self, artifacts, tmp_path):
        out = tmp_path / "violin.png"
        plot_violin(artifacts["report"], out_path=out, metric="lsd")
        assert out.exists() and out.stat().st_size > 0

    def test_empty_report_errors_without_file(self, tmp_path):
        report = tmp_path / "report.csv"
        save_report(report, [])
        out = tmp_path / "violin.png"
        with pytest.raises(ConfigurationError):
            plot_violin(report, out_path=out)
        assert not out.exists()

    def test_metric_validated(self, artifacts, tmp_path):
        with pytest.raises(ConfigurationError):
            plot_violin(artifacts["report"], out_path=tmp_path / "x.png",
                        metric="mae")


class TestRapsdPlot:
    def test_marks_grid_unit_cutoff(self, artifacts, tmp_path):
        out = tmp_path / "rapsd.png"
        cutoff = plot_rapsd(artifacts["rapsd"], out_path=out)
        assert cutoff == pytest.approx(1 / 8)
        assert out.exists()

    def test_marks_physical_cutoff_with_spacing(self, artifacts, tmp_path):
        cutoff = plot_rapsd(artifacts["rapsd"], out_path=tmp_path / "r.png",
                            spacing_km=2.5)
        assert cutoff == pytest.approx(1 / 20)

    def test_missing_table(self, tmp_path):
        with pytest.raises(ConfigurationError):
            plot_rapsd(tmp_path / "none.csv", out_path=tmp_path / "x.png")


class TestFieldmap:
    def test_writes_png(self, artifacts, tmp_path):
        out = tmp_path / "fields.png"
        plot_fieldmap(artifacts["fields"], labels=["truth", "model"],
                      out_path=out)
        assert out.exists() and out.stat().st_size > 0

    def test_missing_field_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            plot_fieldmap([tmp_path / "none.npz"], out_path=tmp_path / "x.png")

    def test_no_inputs(self, tmp_path):
        with pytest.raises(ConfigurationError):
            plot_fieldmap([], out_path=tmp_path / "x.png")
