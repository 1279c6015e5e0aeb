"""Evaluation metrics and the test-set harness.

RAPSD semantics, pinned here because the literature leaves them loose: take
the 2-D DFT, square magnitudes, and normalize so the summed non-DC binned
power equals the field's population variance (Parseval). Frequencies are
binned by integer rings of the normalized wavenumber magnitude scaled by
min(H, W); every non-DC frequency lands in some ring (corner rings beyond
the 0.5 Nyquist circle included), the DC term is excluded, and each ring
reports its arithmetic mean power. Bin centers are ring / min(H, W) in
cycles per grid unit.

LSD is the root mean squared decibel distance between two matching RAPSD
curves. Zero or negative bin powers are an error that names the offending
rings; callers opt into flooring explicitly (power_floor), because silent
flooring would hide exactly the spectral collapse LSD is meant to expose.

evaluate() scores methods (model checkpoints, interpolation baselines) on
trimmed full domains in physical units, one row per pair/method/component
(plus optional rectangular regions), ready for median/MAD aggregation.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, NumericError, ShapeError
from .grids import PREDICTANDS, FieldGrid, SamplePair
from .infer import downscale_baseline, downscale_domain, trim_pair
from .train import TrainState, load_checkpoint


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"rmse shapes differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def median_mad(values) -> tuple[float, float]:
    """Median and median absolute deviation (median of |x - median|)."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ConfigurationError("median_mad of an empty collection")
    med = float(np.median(arr))
    return med, float(np.median(np.abs(arr - med)))


@dataclass(frozen=True)
class Rapsd:
    r: np.ndarray       # bin centers, cycles per grid unit
    power: np.ndarray   # mean power per ring
    counts: np.ndarray  # frequencies per ring

    def total_power(self) -> float:
        return float((self.power * self.counts).sum())


def rapsd(x: np.ndarray) -> Rapsd:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"rapsd expects a 2-D field, got ndim={x.ndim}")
    h, w = x.shape
    if h < 8 or w < 8:
        raise ShapeError(f"field {x.shape} too small for rapsd (needs >= 8x8)")
    f = np.fft.fft2(x, norm="ortho")
    # |F_ortho|^2 / (H W): summed over non-DC bins this equals the variance
    power = (f.real ** 2 + f.imag ** 2) / (h * w)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    ring = np.rint(np.hypot(fy, fx) * min(h, w)).astype(int)
    mask = np.ones_like(ring, dtype=bool)
    mask[0, 0] = False  # DC excluded
    nbins = int(ring.max()) + 1
    counts = np.bincount(ring[mask], minlength=nbins)
    sums = np.bincount(ring[mask], weights=power[mask], minlength=nbins)
    keep = counts > 0
    rings = np.nonzero(keep)[0]
    return Rapsd(r=rings / min(h, w), power=sums[keep] / counts[keep],
                 counts=counts[keep])


def lsd(ref: Rapsd, pred: Rapsd, power_floor: float | None = None) -> float:
    """Root mean squared log-spectral distance in decibels."""
    if ref.r.shape != pred.r.shape or not np.array_equal(ref.r, pred.r):
        raise ShapeError("RAPSD curves have different binning; fields must share a shape")
    p_ref, p_pred = ref.power, pred.power
    if power_floor is not None:
        if power_floor <= 0:
            raise ConfigurationError("power_floor must be > 0")
        p_ref = np.maximum(p_ref, power_floor)
        p_pred = np.maximum(p_pred, power_floor)
    bad = np.nonzero((p_ref <= 0) | (p_pred <= 0))[0]
    if bad.size:
        raise NumericError(
            f"non-positive RAPSD power in rings {bad.tolist()}; "
            "pass power_floor to floor them explicitly"
        )
    # difference of logs keeps lsd(a, b) == lsd(b, a) exact
    terms = 10.0 * (np.log10(p_ref) - np.log10(p_pred))
    return float(np.sqrt(np.mean(terms ** 2)))


def lsd_fields(a: np.ndarray, b: np.ndarray, power_floor: float | None = None) -> float:
    return lsd(rapsd(a), rapsd(b), power_floor=power_floor)


# --- evaluation harness ------------------------------------------------------


@dataclass(frozen=True)
class MetricRow:
    timestamp: str
    method: str
    component: str
    region: str  # "" = full trimmed domain
    rmse: float
    lsd: float


def checkpoint_method(ckpt):
    """Evaluation callable running full-domain inference for a checkpoint."""
    state = ckpt if isinstance(ckpt, TrainState) else load_checkpoint(ckpt)

    def run(pair: SamplePair) -> FieldGrid:
        return downscale_domain(state, pair.low, pair.covariates)

    return run


def baseline_method(kind: str):
    """Evaluation callable for an interpolation baseline (bilinear/nearest)."""

    def run(pair: SamplePair) -> FieldGrid:
        return downscale_baseline(pair.low, kind)

    return run


def _check_region(name: str, box, hw: tuple[int, int]) -> tuple[int, int, int, int]:
    try:
        top, left, height, width = (int(v) for v in box)
    except (TypeError, ValueError):
        raise ConfigurationError(
            f"region {name!r} must be (top, left, height, width), got {box!r}"
        ) from None
    if height < 8 or width < 8:
        raise ConfigurationError(f"region {name!r} smaller than 8x8: {box}")
    if top < 0 or left < 0 or top + height > hw[0] or left + width > hw[1]:
        raise ConfigurationError(f"region {name!r} {box} outside domain {hw}")
    return top, left, height, width


def _pair_rows(pair: SamplePair, methods, regions, power_floor) -> list[MetricRow]:
    tp = trim_pair(pair)
    truth = tp.high
    rows = []
    for name, fn in methods.items():
        pred = fn(tp)
        if not isinstance(pred, FieldGrid) or pred.channels != PREDICTANDS:
            raise ShapeError(f"method {name!r} must return a (u10, v10) FieldGrid")
        if pred.shape_hw != truth.shape_hw:
            raise ShapeError(
                f"method {name!r} returned {pred.shape_hw}, expected {truth.shape_hw}"
            )
        windows = [("", (0, 0) + truth.shape_hw)]
        for rname, box in (regions or {}).items():
            windows.append((rname, _check_region(rname, box, truth.shape_hw)))
        for comp in PREDICTANDS:
            t2 = truth.channel(comp)
            p2 = pred.channel(comp)
            for rname, (t, l, rh, rw) in windows:
                tt = t2[t:t + rh, l:l + rw]
                pp = p2[t:t + rh, l:l + rw]
                rows.append(MetricRow(
                    timestamp=pair.timestamp, method=name, component=comp,
                    region=rname, rmse=rmse(tt, pp),
                    lsd=lsd_fields(tt, pp, power_floor=power_floor),
                ))
    return rows


def evaluate(pairs, methods: dict, regions: dict | None = None,
             power_floor: float | None = 1e-12, n_workers: int = 1) -> list[MetricRow]:
    """Score every method on every pair; one row per pair/method/component
    (times regions, if any). Inference runs on the trimmed domain in physical
    units. Pairs are independent, so n_workers > 1 fans them out to threads.
    """
    pairs = list(pairs)
    if not pairs:
        raise ConfigurationError("evaluate needs at least one pair")
    if not methods:
        raise ConfigurationError("evaluate needs at least one method")
    if n_workers < 1:
        raise ConfigurationError("n_workers must be >= 1")
    if n_workers == 1:
        nested = [_pair_rows(p, methods, regions, power_floor) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            nested = list(pool.map(
                lambda p: _pair_rows(p, methods, regions, power_floor), pairs))
    return [row for rows in nested for row in rows]


def aggregate(rows, keys: tuple[str, ...] = ("method", "component")) -> list[dict]:
    """Median/MAD of rmse and lsd per group, deterministic ordering."""
    rows = list(rows)
    if not rows:
        raise ConfigurationError("aggregate of an empty report")
    groups: dict[tuple, list[MetricRow]] = {}
    for row in rows:
        key = tuple(getattr(row, k) for k in keys)
        groups.setdefault(key, []).append(row)
    out = []
    for key in sorted(groups):
        members = groups[key]
        rm, rmad = median_mad([m.rmse for m in members])
        lm, lmad = median_mad([m.lsd for m in members])
        rec = dict(zip(keys, key))
        rec.update(n=len(members), rmse_median=rm, rmse_mad=rmad,
                   lsd_median=lm, lsd_mad=lmad)
        out.append(rec)
    return out


def summary_table(rows) -> str:
    """Aggregate report laid out methods x (metric, component), lowest median
    per column marked with '*'."""
    agg = aggregate(rows, keys=("method", "component"))
    methods = sorted({a["method"] for a in agg})
    components = sorted({a["component"] for a in agg})
    cells = {(a["method"], a["component"]): a for a in agg}
    cols = [(metric, comp) for metric in ("rmse", "lsd") for comp in components]
    best = {}
    for col in cols:
        metric, comp = col
        vals = {m: cells[(m, comp)][f"{metric}_median"] for m in methods
                if (m, comp) in cells}
        if vals:
            best[col] = min(vals, key=vals.get)
    width = max(12, max(len(m) for m in methods) + 2)
    header = "method".ljust(width) + "".join(
        f"{metric.upper()}({comp})".rjust(22) for metric, comp in cols)
    lines = [header, "-" * len(header)]
    for m in methods:
        line = m.ljust(width)
        for col in cols:
            metric, comp = col
            a = cells.get((m, comp))
            if a is None:
                line += "".rjust(22)
                continue
            mark = "*" if best.get(col) == m else " "
            line += f"{a[f'{metric}_median']:.4f} ({a[f'{metric}_mad']:.4f}){mark}".rjust(22)
        lines.append(line)
    return "\n".join(lines)


# --- spectra for plotting ----------------------------------------------------


def rapsd_curves(pairs, methods: dict, power_floor: float | None = None) -> list[dict]:
    """Mean RAPSD per method and component over pairs, plus the truth curve.

    Returns rows {method, component, wavenumber, power}; all pairs must share
    one trimmed shape so the rings line up.
    """
    pairs = list(pairs)
    if not pairs:
        raise ConfigurationError("rapsd_curves needs at least one pair")
    sums: dict[tuple[str, str], np.ndarray] = {}
    ref_r: dict[str, np.ndarray] = {}
    for pair in pairs:
        tp = trim_pair(pair)
        fields = {"reference": tp.high}
        for name, fn in methods.items():
            fields[name] = fn(tp)
        for name, grid in fields.items():
            for comp in PREDICTANDS:
                spec = rapsd(grid.channel(comp))
                prev = ref_r.get(comp)
                if prev is None:
                    ref_r[comp] = spec.r
                elif not np.array_equal(prev, spec.r):
                    raise ShapeError("pairs have different trimmed shapes; cannot average spectra")
                key = (name, comp)
                sums[key] = sums.get(key, 0.0) + spec.power
    rows = []
    for (name, comp), total in sorted(sums.items()):
        mean_power = total / len(pairs)
        if power_floor is not None:
            mean_power = np.maximum(mean_power, power_floor)
        for r, p in zip(ref_r[comp], mean_power):
            rows.append({"method": name, "component": comp,
                         "wavenumber": float(r), "power": float(p)})
    return rows


# --- report files ------------------------------------------------------------

_REPORT_COLUMNS = ("timestamp", "method", "component", "region", "rmse", "lsd")


def save_report(path, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=_REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(asdict(row))


def load_report(path) -> list[MetricRow]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"no report at {path}")
    rows = []
    with open(path, newline="") as f:
        for raw in csv.DictReader(f):
            rows.append(MetricRow(
                timestamp=raw["timestamp"], method=raw["method"],
                component=raw["component"], region=raw.get("region", ""),
                rmse=float(raw["rmse"]), lsd=float(raw["lsd"]),
            ))
    return rows


def save_rapsd_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=("method", "component", "wavenumber", "power"))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def load_rapsd_csv(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"no RAPSD table at {path}")
    out = []
    with open(path, newline="") as f:
        for raw in csv.DictReader(f):
            out.append({"method": raw["method"], "component": raw["component"],
                        "wavenumber": float(raw["wavenumber"]),
                        "power": float(raw["power"])})
    return out
