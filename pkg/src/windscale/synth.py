"""Synthetic paired coarse/fine wind fields over procedural terrain.

The generator produces everything the real pipeline would read from an
archive: static covariates (elevation me, water mask mg, roughness z0) on the
fine grid, and per-hour SamplePairs whose fine 10 m winds are built from a
smooth time-varying background flow modified by the terrain in three
physically flavoured ways:

  * channeling: wind is blended toward the local elevation contour direction
    where slopes are steep,
  * roughness damping: speed shrinks monotonically with z0, so water (tiny
    z0) carries faster wind than rough land,
  * stochastic detail: a small high-frequency component that changes every
    hour and is not predictable from the coarse fields.

Coarse U_surf / V_surf are exact 8x8 block means of the fine winds; the other
five predictors are smooth correlated fields (temperatures tied to elevation
and the diurnal cycle, upper winds tied to the background flow). Everything
is a pure function of (seed, hour), so datasets regenerate bit-identically.

Elevation follows a power-law radially averaged spectrum with log-log slope
equal to terrain_roughness, which gives the spectral metrics something
realistic to measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import AlignmentError, ConfigurationError
from .grids import COVARIATES, FACTOR, PREDICTANDS, PREDICTORS, FieldGrid, SamplePair
from .prep import reduce_by_factor

WIND_CAP = 60.0  # |u|, |v| never exceed this (m/s)
WATER_Z0 = 0.0002  # roughness length over water (m)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    domain_hw: tuple[int, int] = (128, 128)  # fine grid; multiples of 8, >= 64
    n_hours: int = 16
    spacing_km: float = 2.5
    terrain_roughness: float = -3.0  # RAPSD log-log slope of elevation
    water_fraction: float = 0.35
    background_wind_scale: float = 8.0  # m/s
    detail_amplitude: float = 0.35  # m/s, per-hour unpredictable detail
    train_frac: float = 0.75
    val_frac: float = 0.125
    test_frac: float = 0.125

    def __post_init__(self):
        h, w = self.domain_hw
        if h < 64 or w < 64:
            raise ConfigurationError(f"domain {self.domain_hw} smaller than 64x64")
        if h % FACTOR != 0 or w % FACTOR != 0:
            raise AlignmentError(f"domain {self.domain_hw} not a multiple of {FACTOR}")
        if self.n_hours < 1:
            raise ConfigurationError("n_hours must be >= 1")
        if not (self.terrain_roughness < 0):
            raise ConfigurationError("terrain_roughness must be a negative spectral slope")
        if not (0.0 < self.water_fraction < 1.0):
            raise ConfigurationError("water_fraction must be in (0, 1)")
        if self.background_wind_scale <= 0:
            raise ConfigurationError("background_wind_scale must be > 0")
        if self.detail_amplitude < 0:
            raise ConfigurationError("detail_amplitude must be >= 0")
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigurationError(f"split fractions {fracs} must be positive and sum to 1")
        object.__setattr__(self, "domain_hw", (int(h), int(w)))


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(list(key))


def _power_law_surface(rng: np.random.Generator, hw: tuple[int, int], slope: float) -> np.ndarray:
    """Zero-mean unit-std field whose radially averaged spectrum ~ r**slope."""
    h, w = hw
    noise = rng.standard_normal((h, w))
    f = np.fft.fft2(noise)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    r = np.hypot(fy, fx) * min(h, w)
    amp = np.zeros_like(r)
    nz = r > 0
    amp[nz] = r[nz] ** (slope / 2.0)
    surf = np.real(np.fft.ifft2(f * amp))
    surf -= surf.mean()
    std = surf.std()
    if std <= 0:
        raise ConfigurationError("degenerate random surface (zero variance)")
    return surf / std


def make_covariates(cfg: SynthConfig) -> FieldGrid:
    """Static covariate stack (me, mg, z0) on the fine grid."""
    hw = cfg.domain_hw

    surf = _power_law_surface(_rng(cfg.seed, 1), hw, cfg.terrain_roughness)
    me = 2500.0 * (surf - surf.min()) / (surf.max() - surf.min())

    # water bodies: threshold an independent smooth field at the requested
    # quantile, then soften the coastline a little
    wet = _power_law_surface(_rng(cfg.seed, 2), hw, -4.0)
    thr = np.quantile(wet, cfg.water_fraction)
    mg = ndimage.gaussian_filter((wet <= thr).astype(np.float64), sigma=1.5)
    mg = np.clip(mg, 0.0, 1.0)

    gy, gx = np.gradient(me)
    slope = np.hypot(gy, gx)
    land = mg <= 0.5
    ref = np.quantile(slope[land], 0.6) if land.any() else np.quantile(slope, 0.6)
    ref = max(ref, 1e-9)
    z0_land = 0.01 + 1.49 * slope / (slope + ref)
    z0 = np.where(mg > 0.5, WATER_Z0, z0_land)

    return FieldGrid(COVARIATES, np.stack([me, mg, z0]), cfg.spacing_km)


def _smooth_low(cfg: SynthConfig, hour: int, tag: int, hw: tuple[int, int]) -> np.ndarray:
    return _power_law_surface(_rng(cfg.seed, 40, hour, tag), hw, -3.0)


def make_hour(cfg: SynthConfig, covariates: FieldGrid, hour: int) -> SamplePair:
    """One forecast hour as a SamplePair, deterministic in (cfg.seed, hour).

    covariates is passed in (rather than regenerated) so experiments can
    replay the same hour over modified terrain.
    """
    me = covariates.channel("me")
    z0 = covariates.channel("z0")
    h, w = me.shape
    if h % FACTOR != 0 or w % FACTOR != 0:
        raise AlignmentError(f"covariate grid {me.shape} not a multiple of {FACTOR}")
    lhw = (h // FACTOR, w // FACTOR)

    # smooth background flow: rotating mean wind plus slowly wandering
    # large-scale modulation, all bounded well below WIND_CAP for sane scales
    scale = cfg.background_wind_scale
    amp = 0.6 * scale * (1.0 + 0.25 * math.sin(2.0 * math.pi * hour / 37.3 + 0.7))
    theta = 2.0 * math.pi * hour / 24.0 + 0.31
    pat_u = _power_law_surface(_rng(cfg.seed, 3), (h, w), -4.0)
    pat_v = _power_law_surface(_rng(cfg.seed, 4), (h, w), -4.0)
    cu = 0.3 * scale * math.sin(2.0 * math.pi * hour / 17.0 + 1.3)
    cv = 0.3 * scale * math.sin(2.0 * math.pi * hour / 29.0 + 2.1)
    u = amp * math.cos(theta) + cu * pat_u
    v = amp * math.sin(theta) + cv * pat_v

    # channeling: blend toward the elevation contour tangent on steep slopes
    gy, gx = np.gradient(me)
    slope = np.hypot(gy, gx)
    s_ref = max(np.quantile(slope, 0.6), 1e-9)
    wgt = 0.85 * slope / (slope + s_ref)
    tx = np.zeros_like(slope)
    ty = np.zeros_like(slope)
    steep = slope > 1e-12
    tx[steep] = -gy[steep] / slope[steep]
    ty[steep] = gx[steep] / slope[steep]
    proj = u * tx + v * ty
    u = u + wgt * (proj * tx - u)
    v = v + wgt * (proj * ty - v)

    # roughness damping: strictly decreasing in z0, exactly 1 over open water
    damp = 1.0 / (1.0 + 0.6 * np.log1p(np.maximum(z0 - WATER_Z0, 0.0) / 0.05))
    u *= damp
    v *= damp

    if cfg.detail_amplitude > 0:
        u = u + cfg.detail_amplitude * _power_law_surface(_rng(cfg.seed, 30, hour, 0), (h, w), -1.0)
        v = v + cfg.detail_amplitude * _power_law_surface(_rng(cfg.seed, 30, hour, 1), (h, w), -1.0)

    u = np.clip(u, -WIND_CAP, WIND_CAP)
    v = np.clip(v, -WIND_CAP, WIND_CAP)
    high = np.stack([u, v])

    # coarse surface winds are exact block means of the fine winds
    usurf, vsurf = reduce_by_factor(high, FACTOR)

    me_low = reduce_by_factor(me[None], FACTOR)[0]
    t_surf = (15.0 - 6.5e-3 * me_low
              + 8.0 * math.sin(2.0 * math.pi * hour / 24.0 + 0.9)
              + 1.0 * _smooth_low(cfg, hour, 0, lhw))
    t_546 = t_surf - 28.0 + 0.5 * _smooth_low(cfg, hour, 1, lhw)
    u_546 = 1.4 * amp * math.cos(theta) + 2.0 * _smooth_low(cfg, hour, 2, lhw)
    v_546 = 1.4 * amp * math.sin(theta) + 2.0 * _smooth_low(cfg, hour, 3, lhw)
    w_546 = 0.08 * _smooth_low(cfg, hour, 4, lhw)

    low = np.stack([usurf, vsurf, t_surf, t_546, u_546, v_546, w_546])

    return SamplePair(
        low=FieldGrid(PREDICTORS, low, cfg.spacing_km * FACTOR),
        high=FieldGrid(PREDICTANDS, high, cfg.spacing_km),
        covariates=covariates,
        timestamp=f"h{hour:04d}",
    )


@dataclass(frozen=True)
class SynthDataset:
    covariates: FieldGrid
    train: tuple[SamplePair, ...]
    val: tuple[SamplePair, ...]
    test: tuple[SamplePair, ...]
    splits: dict  # timestamp -> "train" | "val" | "test"


def split_hours(cfg: SynthConfig) -> dict[str, list[int]]:
    """Hour indices per split: a contiguous held-out tail for test, then a
    seeded random train/val split of the remaining hours."""
    n = cfg.n_hours
    if n < 10:
        raise ConfigurationError(f"need at least 10 hours to split, got {n}")
    n_test = max(1, round(n * cfg.test_frac))
    n_val = max(1, round(n * cfg.val_frac))
    if n_test + n_val >= n:
        raise ConfigurationError(f"splits leave no training hours (n={n})")
    head = n - n_test
    perm = _rng(cfg.seed, 5).permutation(head)
    val = sorted(int(i) for i in perm[:n_val])
    train = sorted(int(i) for i in perm[n_val:])
    test = list(range(head, n))
    return {"train": train, "val": val, "test": test}


def make_dataset(cfg: SynthConfig) -> SynthDataset:
    """Generate covariates and all hours, split into train/val/test."""
    cov = make_covariates(cfg)
    hours = split_hours(cfg)
    parts = {}
    splits = {}
    for name, idxs in hours.items():
        pairs = tuple(make_hour(cfg, cov, h) for h in idxs)
        parts[name] = pairs
        for p in pairs:
            splits[p.timestamp] = name
    return SynthDataset(covariates=cov, train=parts["train"], val=parts["val"],
                        test=parts["test"], splits=splits)
