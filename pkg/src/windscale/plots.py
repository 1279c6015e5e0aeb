"""Figures for training curves, metric distributions, spectra, and fields.

Every plot function validates its inputs before touching the output path, so
a failed call leaves no partial file behind. All figures render with the Agg
backend; nothing here needs a display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigurationError
from .grids import FACTOR, PREDICTANDS, load_field
from .metrics import load_rapsd_csv, load_report
from .train import read_log


def cutoff_wavenumber(spacing_km: float | None = None) -> float:
    """Highest wavenumber the coarse grid can represent: 1 / (8 * spacing).

    With no spacing the unit is cycles per fine grid cell (cutoff 1/8);
    with spacing in km it becomes cycles per km.
    """
    if spacing_km is None:
        return 1.0 / FACTOR
    if spacing_km <= 0:
        raise ConfigurationError("spacing_km must be > 0")
    return 1.0 / (FACTOR * spacing_km)


def _save(fig, out_path, dpi: int):
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=dpi, bbox_inches="tight")
    plt.close(fig)


def plot_validation_curves(log_paths, labels=None, out_path="curves.png",
                           dpi: int = 120) -> None:
    """Interval-averaged validation MSE per run, minima marked with x."""
    log_paths = [Path(p) for p in log_paths]
    if not log_paths:
        raise ConfigurationError("no metrics logs given")
    if labels is None:
        labels = [p.parent.name or p.stem for p in log_paths]
    if len(labels) != len(log_paths):
        raise ConfigurationError("labels must match logs one to one")
    curves = []
    for path, label in zip(log_paths, labels):
        rows = read_log(path)
        pts = [(r["step"], r["val_mse"]) for r in rows
               if r["phase"] == "interval" and r.get("val_mse") is not None]
        if not pts:
            pts = [(r["step"], r["val_mse"]) for r in rows
                   if r["phase"] == "train" and r.get("val_mse") is not None]
        if not pts:
            raise ConfigurationError(f"{path} has no validation points to plot")
        curves.append((label, pts))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, pts in curves:
        steps, vals = zip(*pts)
        line, = ax.plot(steps, vals, marker="o", ms=3, label=label)
        i = int(np.argmin(vals))
        ax.plot(steps[i], vals[i], "x", ms=11, mew=2.5, color=line.get_color())
    ax.set_xlabel("step")
    ax.set_ylabel("validation MSE (normalized)")
    ax.legend()
    ax.grid(alpha=0.3)
    _save(fig, out_path, dpi)


def plot_violin(report_path, out_path="violins.png", metric: str = "rmse",
                dpi: int = 120) -> None:
    """Per-method distribution of a metric, one panel per wind component."""
    if metric not in ("rmse", "lsd"):
        raise ConfigurationError(f"metric must be rmse or lsd, got {metric!r}")
    rows = load_report(report_path)
    rows = [r for r in rows if r.region == ""]
    if not rows:
        raise ConfigurationError(f"report {report_path} has no full-domain rows")
    methods = sorted({r.method for r in rows})
    fig, axes = plt.subplots(1, len(PREDICTANDS), figsize=(5 * len(PREDICTANDS), 4),
                             sharey=True)
    for ax, comp in zip(np.atleast_1d(axes), PREDICTANDS):
        data = []
        for m in methods:
            vals = [getattr(r, metric) for r in rows
                    if r.method == m and r.component == comp]
            if not vals:
                raise ConfigurationError(f"no {comp} rows for method {m!r}")
            data.append(vals)
        ax.violinplot(data, showmedians=True)
        ax.set_xticks(range(1, len(methods) + 1))
        ax.set_xticklabels(methods, rotation=20)
        ax.set_title(comp)
        ax.grid(alpha=0.3, axis="y")
    np.atleast_1d(axes)[0].set_ylabel(metric.upper())
    _save(fig, out_path, dpi)


def plot_rapsd(rapsd_path, out_path="rapsd.png", spacing_km: float | None = None,
               dpi: int = 120) -> float:
    """Log-log RAPSD per method with the coarse-grid cutoff marked.

    Returns the cutoff wavenumber that was drawn (dashed gray vertical line).
    """
    rows = load_rapsd_csv(rapsd_path)
    if not rows:
        raise ConfigurationError(f"RAPSD table {rapsd_path} is empty")
    cutoff = cutoff_wavenumber(spacing_km)
    scale = 1.0 if spacing_km is None else 1.0 / spacing_km
    components = sorted({r["component"] for r in rows})
    methods = sorted({r["method"] for r in rows})
    fig, axes = plt.subplots(1, len(components), figsize=(5.5 * len(components), 4.2),
                             sharey=True)
    for ax, comp in zip(np.atleast_1d(axes), components):
        for m in methods:
            pts = [(r["wavenumber"] * scale, r["power"]) for r in rows
                   if r["component"] == comp and r["method"] == m
                   and r["wavenumber"] > 0]
            if not pts:
                continue
            k, p = zip(*sorted(pts))
            style = {"lw": 2.2, "color": "black"} if m == "reference" else {"lw": 1.4}
            ax.loglog(k, p, label=m, **style)
        ax.axvline(cutoff, color="gray", ls="--", lw=1)
        unit = "cycles/cell" if spacing_km is None else "cycles/km"
        ax.set_xlabel(f"wavenumber ({unit})")
        ax.set_title(comp)
        ax.grid(alpha=0.3, which="both")
    np.atleast_1d(axes)[0].set_ylabel("power")
    np.atleast_1d(axes)[0].legend(fontsize=8)
    _save(fig, out_path, dpi)
    return cutoff


def plot_fieldmap(field_paths, labels=None, out_path="fields.png",
                  dpi: int = 120) -> None:
    """Image panels of wind fields: one row per file, one column per channel."""
    field_paths = [Path(p) for p in field_paths]
    if not field_paths:
        raise ConfigurationError("no field files given")
    grids = [load_field(p) for p in field_paths]
    if labels is None:
        labels = [p.stem for p in field_paths]
    if len(labels) != len(grids):
        raise ConfigurationError("labels must match fields one to one")
    ncols = max(g.n_channels for g in grids)
    fig, axes = plt.subplots(len(grids), ncols,
                             figsize=(4.2 * ncols, 3.6 * len(grids)), squeeze=False)
    for i, (grid, label) in enumerate(zip(grids, labels)):
        for j in range(ncols):
            ax = axes[i][j]
            if j >= grid.n_channels:
                ax.axis("off")
                continue
            vmax = float(np.abs(grid.data[j]).max()) or 1.0
            im = ax.imshow(grid.data[j], origin="lower", cmap="RdBu_r",
                           vmin=-vmax, vmax=vmax)
            ax.set_title(f"{label}: {grid.channels[j]}", fontsize=9)
            ax.set_xticks([])
            ax.set_yticks([])
            fig.colorbar(im, ax=ax, shrink=0.85)
    _save(fig, out_path, dpi)
