"""Regridding, coarsening, interpolation baselines, and normalization.

All resampling here is cell-centered: a grid of N cells covers [0, N) with
cell i centered at i + 0.5. That convention makes regrid_nearest exactly
idempotent at equal shapes, makes reduce_by_factor / upsample pairs mutually
consistent, and pins down the bilinear baseline without reference to any
library's corner conventions.

NormStats holds per-channel standardization (optionally after log1p for the
heavy-tailed positive covariates me and z0) fitted on training pairs only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, BoundsError, ConfigurationError, ShapeError
from .grids import FieldGrid, SamplePair

# channels standardized after log1p; both are positive and span decades
LOG1P_CHANNELS = ("me", "z0")


def _as_chw(data: np.ndarray) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"expected (C, H, W), got ndim={arr.ndim}")
    return arr


def regrid_nearest(data: np.ndarray, dst_hw: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resample of (C, H, W) onto a (dstH, dstW) grid.

    Destination cell j takes the source cell whose center is nearest to the
    destination cell center mapped into source coordinates:
    src = floor((j + 0.5) * srcN / dstN).
    """
    arr = _as_chw(data)
    dh, dw = int(dst_hw[0]), int(dst_hw[1])
    if dh < 1 or dw < 1:
        raise BoundsError(f"destination shape must be positive, got {dst_hw}")
    sh, sw = arr.shape[1], arr.shape[2]
    rows = np.minimum((np.floor((np.arange(dh) + 0.5) * sh / dh)).astype(int), sh - 1)
    cols = np.minimum((np.floor((np.arange(dw) + 0.5) * sw / dw)).astype(int), sw - 1)
    return arr[:, rows[:, None], cols[None, :]]


def reduce_by_factor(data: np.ndarray, k: int) -> np.ndarray:
    """Block mean over non-overlapping k x k blocks of (C, H, W)."""
    arr = _as_chw(data)
    k = int(k)
    if k < 1:
        raise ConfigurationError(f"factor must be >= 1, got {k}")
    c, h, w = arr.shape
    if h % k != 0 or w % k != 0:
        raise AlignmentError(f"shape ({h}, {w}) not divisible by factor {k}")
    return arr.reshape(c, h // k, k, w // k, k).mean(axis=(2, 4))


def upsample_nearest(data: np.ndarray, k: int) -> np.ndarray:
    """Replicate every cell of (C, H, W) into a k x k block."""
    arr = _as_chw(data)
    k = int(k)
    if k < 1:
        raise ConfigurationError(f"factor must be >= 1, got {k}")
    return np.repeat(np.repeat(arr, k, axis=1), k, axis=2)


def _interp_axis(arr: np.ndarray, k: int, axis: int) -> np.ndarray:
    n = arr.shape[axis]
    # destination cell centers in source cell coordinates, clamped at edges
    x = (np.arange(n * k) + 0.5) / k - 0.5
    x = np.clip(x, 0.0, n - 1.0)
    i0 = np.floor(x).astype(int)
    i0 = np.minimum(i0, n - 2) if n > 1 else np.zeros_like(i0, dtype=int)
    frac = x - i0
    a = np.take(arr, i0, axis=axis)
    b = np.take(arr, np.minimum(i0 + 1, n - 1), axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = len(x)
    f = frac.reshape(shape)
    return a * (1.0 - f) + b * f


def upsample_bilinear(data: np.ndarray, k: int) -> np.ndarray:
    """Cell-centered bilinear upsampling of (C, H, W) by an integer factor.

    Outside the outermost cell centers the value is held constant (edge
    clamp), so constants stay constant and edges stay flat.
    """
    arr = _as_chw(data)
    k = int(k)
    if k < 1:
        raise ConfigurationError(f"factor must be >= 1, got {k}")
    return _interp_axis(_interp_axis(arr, k, axis=1), k, axis=2)


# --- normalization ---------------------------------------------------------


@dataclass(frozen=True)
class ChannelStats:
    transform: str  # "linear" or "log1p"
    mean: float
    std: float


@dataclass(frozen=True)
class NormStats:
    """Per-channel standardization fitted on training pairs.

    Each named channel maps x -> (t(x) - mean) / std with t = log1p for
    LOG1P_CHANNELS and identity otherwise. Fit on training data only; apply
    everywhere with these frozen values.
    """

    stats: dict[str, ChannelStats]

    def has(self, name: str) -> bool:
        return name in self.stats

    def to_dict(self) -> dict:
        return {n: {"transform": s.transform, "mean": s.mean, "std": s.std}
                for n, s in self.stats.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls({n: ChannelStats(v["transform"], float(v["mean"]), float(v["std"]))
                    for n, v in d.items()})


def _transform_of(name: str) -> str:
    return "log1p" if name in LOG1P_CHANNELS else "linear"


def _forward_values(name: str, x: np.ndarray) -> np.ndarray:
    if _transform_of(name) == "log1p":
        if np.any(x < 0):
            raise ConfigurationError(
                f"channel {name!r} has negative values (min {np.min(x):.6g}) "
                "but uses a log1p transform"
            )
        return np.log1p(x)
    return x


def fit_norm(pairs) -> NormStats:
    """Fit per-channel mean/std over every cell of every training pair.

    Covariates are static, so they enter once per distinct grid; predictor and
    predictand channels accumulate over all pairs. Channels with (near) zero
    variance are rejected because they cannot be standardized.
    """
    pairs = list(pairs)
    if not pairs:
        raise ConfigurationError("fit_norm needs at least one pair")
    sums: dict[str, float] = {}
    sqsums: dict[str, float] = {}
    counts: dict[str, int] = {}

    def accumulate(grid: FieldGrid):
        for name in grid.channels:
            x = _forward_values(name, grid.channel(name)).astype(np.float64)
            sums[name] = sums.get(name, 0.0) + float(x.sum())
            sqsums[name] = sqsums.get(name, 0.0) + float((x * x).sum())
            counts[name] = counts.get(name, 0) + x.size

    for p in pairs:
        accumulate(p.low)
        accumulate(p.high)
    accumulate(pairs[0].covariates)

    out = {}
    for name in counts:
        n = counts[name]
        mean = sums[name] / n
        var = max(sqsums[name] / n - mean * mean, 0.0)
        std = float(np.sqrt(var))
        if std <= 1e-12:
            raise ConfigurationError(
                f"channel {name!r} has zero variance (std={std:.3g}); cannot standardize"
            )
        out[name] = ChannelStats(_transform_of(name), float(mean), std)
    return NormStats(out)


def apply_norm(grid: FieldGrid, stats: NormStats) -> FieldGrid:
    """Standardize every channel of a grid using fitted stats."""
    out = np.empty_like(grid.data)
    for i, name in enumerate(grid.channels):
        if not stats.has(name):
            raise ConfigurationError(f"no normalization stats for channel {name!r}")
        s = stats.stats[name]
        x = _forward_values(name, grid.data[i])
        out[i] = (x - s.mean) / s.std
    return FieldGrid(grid.channels, out, grid.spacing_km)


def invert_norm(grid: FieldGrid, stats: NormStats) -> FieldGrid:
    """Undo apply_norm; inverse of log1p channels goes through expm1."""
    out = np.empty_like(grid.data)
    for i, name in enumerate(grid.channels):
        if not stats.has(name):
            raise ConfigurationError(f"no normalization stats for channel {name!r}")
        s = stats.stats[name]
        x = grid.data[i] * s.std + s.mean
        out[i] = np.expm1(x) if s.transform == "log1p" else x
    return FieldGrid(grid.channels, out, grid.spacing_km)


def normalize_pair(pair: SamplePair, stats: NormStats) -> SamplePair:
    return SamplePair(
        low=apply_norm(pair.low, stats),
        high=apply_norm(pair.high, stats),
        covariates=apply_norm(pair.covariates, stats),
        timestamp=pair.timestamp,
    )


def save_norm(path, stats: NormStats) -> None:
    with open(path, "w") as f:
        json.dump(stats.to_dict(), f, indent=2, sort_keys=True)


def load_norm(path) -> NormStats:
    with open(path) as f:
        return NormStats.from_dict(json.load(f))
