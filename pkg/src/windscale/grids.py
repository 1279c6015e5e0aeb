"""Grid containers and the variable catalog.

The pipeline moves three kinds of gridded data around: a coarse predictor
stack (7 channels), a fine predictand stack (the two 10 m wind components),
and a fine static covariate stack (elevation, water mask, roughness length).
Fine grids are exactly FACTOR (= 8) times denser than the coarse grid along
both axes.

Key types:
    FieldGrid   -- immutable (C, H, W) array plus channel names and spacing
    SamplePair  -- one forecast hour: low, high, covariates, timestamp
    Batch       -- stacked training crops as plain arrays

Validation is split in two: constructors only enforce structure (ranks,
channel-count/name agreement), while ``validate_grid`` / ``validate_pair``
report value-level problems (factor-8 mismatch, non-finite cells, mask out of
range) as a list of human-readable strings so callers can collect everything
wrong with a sample instead of dying on the first issue.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import AlignmentError, BoundsError, ConfigurationError, ShapeError

FACTOR = 8

PREDICTORS = ("U_surf", "V_surf", "T_surf", "T_546", "U_546", "V_546", "W_546")
PREDICTANDS = ("u10", "v10")
COVARIATES = ("me", "mg", "z0")

UNITS = {
    "U_surf": "m/s",
    "V_surf": "m/s",
    "T_surf": "degC",
    "T_546": "degC",
    "U_546": "m/s",
    "V_546": "m/s",
    "W_546": "Pa/s",
    "u10": "m/s",
    "v10": "m/s",
    "me": "m",
    "mg": "fraction",
    "z0": "m",
}


def units_of(name: str) -> str:
    """Units string for a catalog variable."""
    try:
        return UNITS[name]
    except KeyError:
        raise ConfigurationError(f"unknown variable {name!r}") from None


@dataclass(frozen=True)
class FieldGrid:
    """One immutable stack of named channels on a regular grid.

    data is (C, H, W) float64 and is copied then marked read-only, so a
    FieldGrid can be shared freely.
    """

    channels: tuple[str, ...]
    data: np.ndarray
    spacing_km: float = 1.0

    def __post_init__(self):
        chans = tuple(str(c) for c in self.channels)
        if len(chans) == 0:
            raise ShapeError("FieldGrid needs at least one channel")
        if len(set(chans)) != len(chans):
            raise ShapeError(f"duplicate channel names: {chans}")
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 3:
            raise ShapeError(f"data must be (C, H, W), got ndim={arr.ndim}")
        if arr.shape[0] != len(chans):
            raise ShapeError(
                f"channel count mismatch: {len(chans)} names vs data C={arr.shape[0]}"
            )
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ShapeError(f"empty grid: shape {arr.shape}")
        if not (float(self.spacing_km) > 0):
            raise ConfigurationError(f"spacing_km must be > 0, got {self.spacing_km}")
        arr.setflags(write=False)
        object.__setattr__(self, "channels", chans)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing_km", float(self.spacing_km))

    @property
    def shape_hw(self) -> tuple[int, int]:
        return (self.data.shape[1], self.data.shape[2])

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    def channel(self, name: str) -> np.ndarray:
        """The (H, W) array for one named channel."""
        try:
            i = self.channels.index(name)
        except ValueError:
            raise ShapeError(f"no channel {name!r} in {self.channels}") from None
        return self.data[i]

    def select(self, names: Sequence[str]) -> "FieldGrid":
        """New FieldGrid restricted to the given channels, in the given order."""
        names = tuple(names)
        idx = []
        for n in names:
            if n not in self.channels:
                raise ShapeError(f"no channel {n!r} in {self.channels}")
            idx.append(self.channels.index(n))
        return FieldGrid(names, self.data[idx], self.spacing_km)


@dataclass(frozen=True)
class SamplePair:
    """One forecast hour: coarse predictors, fine predictands, fine covariates.

    Only structure is checked here; use validate_pair() for the value-level
    contract so malformed pairs can still be constructed and inspected.
    """

    low: FieldGrid
    high: FieldGrid
    covariates: FieldGrid
    timestamp: str

    def __post_init__(self):
        for part, name in ((self.low, "low"), (self.high, "high"), (self.covariates, "covariates")):
            if not isinstance(part, FieldGrid):
                raise ShapeError(f"{name} must be a FieldGrid, got {type(part).__name__}")
        if not isinstance(self.timestamp, str) or not self.timestamp:
            raise ConfigurationError("timestamp must be a non-empty string")


def validate_grid(grid: FieldGrid) -> list[str]:
    """Value-level problems with a single grid, as human-readable strings."""
    problems = []
    if not np.isfinite(grid.data).all():
        bad = [grid.channels[i] for i in range(grid.n_channels)
               if not np.isfinite(grid.data[i]).all()]
        problems.append(f"non-finite values in channels {bad}")
    if "mg" in grid.channels:
        mg = grid.channel("mg")
        if mg.min() < 0.0 or mg.max() > 1.0:
            problems.append(
                f"mask out of [0, 1]: mg range [{mg.min():.6g}, {mg.max():.6g}]"
            )
    return problems


def validate_pair(pair: SamplePair) -> list[str]:
    """All contract violations of a SamplePair; empty list means valid."""
    problems = []
    if pair.low.channels != PREDICTORS:
        problems.append(f"low channels {pair.low.channels} != predictors {PREDICTORS}")
    if pair.high.channels != PREDICTANDS:
        problems.append(f"high channels {pair.high.channels} != predictands {PREDICTANDS}")
    if pair.covariates.channels != COVARIATES:
        problems.append(
            f"covariate channels {pair.covariates.channels} != {COVARIATES}"
        )
    lh, lw = pair.low.shape_hw
    hh, hw = pair.high.shape_hw
    if hh != FACTOR * lh:
        problems.append(f"factor-{FACTOR} violated on H: high {hh} vs low {lh}")
    if hw != FACTOR * lw:
        problems.append(f"factor-{FACTOR} violated on W: high {hw} vs low {lw}")
    if pair.covariates.shape_hw != pair.high.shape_hw:
        problems.append(
            f"covariate shape {pair.covariates.shape_hw} != high shape {pair.high.shape_hw}"
        )
    for grid, name in ((pair.low, "low"), (pair.high, "high"), (pair.covariates, "covariates")):
        problems += [f"{name}: {p}" for p in validate_grid(grid)]
    return problems


def crop(pair: SamplePair, top: int, left: int, size: int = 128) -> SamplePair:
    """Aligned square window of a pair, indices in fine-grid cells.

    top, left, size must all be multiples of FACTOR so the window maps onto
    whole coarse cells. The coarse window is the exact factor-8 counterpart.
    """
    for val, name in ((top, "top"), (left, "left"), (size, "size")):
        if val % FACTOR != 0:
            raise AlignmentError(f"{name}={val} is not a multiple of {FACTOR}")
    if size < FACTOR:
        raise BoundsError(f"crop size {size} smaller than one coarse cell ({FACTOR})")
    if top < 0 or left < 0:
        raise BoundsError(f"negative crop origin ({top}, {left})")
    hh, hw = pair.high.shape_hw
    if top + size > hh or left + size > hw:
        raise BoundsError(
            f"crop ({top}:{top + size}, {left}:{left + size}) exceeds fine grid {hh}x{hw}"
        )
    lt, ll, ls = top // FACTOR, left // FACTOR, size // FACTOR
    high = FieldGrid(pair.high.channels,
                     pair.high.data[:, top:top + size, left:left + size],
                     pair.high.spacing_km)
    cov = FieldGrid(pair.covariates.channels,
                    pair.covariates.data[:, top:top + size, left:left + size],
                    pair.covariates.spacing_km)
    low = FieldGrid(pair.low.channels,
                    pair.low.data[:, lt:lt + ls, ll:ll + ls],
                    pair.low.spacing_km)
    return SamplePair(low=low, high=high, covariates=cov, timestamp=pair.timestamp)


@dataclass
class Batch:
    """Stacked crops ready for a training step.

    cov may be a single (3, 8h, 8w) stack shared by every sample, or a
    per-sample (B, 3, 8h, 8w) stack when crops come from different windows.
    """

    low: np.ndarray
    high: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        low, high, cov = self.low, self.high, self.cov
        if low.ndim != 4 or high.ndim != 4:
            raise ShapeError("low and high must be (B, C, H, W)")
        b, cl, h, w = low.shape
        if b < 1:
            raise ShapeError("empty batch")
        if high.shape[0] != b:
            raise ShapeError(f"batch size mismatch: low B={b}, high B={high.shape[0]}")
        if cl != len(PREDICTORS):
            raise ShapeError(f"low has {cl} channels, expected {len(PREDICTORS)}")
        if high.shape[1] != len(PREDICTANDS):
            raise ShapeError(f"high has {high.shape[1]} channels, expected {len(PREDICTANDS)}")
        if high.shape[2] != FACTOR * h or high.shape[3] != FACTOR * w:
            raise ShapeError(
                f"high spatial {high.shape[2:]} is not factor-{FACTOR} of low ({h}, {w})"
            )
        if cov.ndim == 3:
            cshape = cov.shape
        elif cov.ndim == 4:
            if cov.shape[0] != b:
                raise ShapeError(f"cov B={cov.shape[0]} != batch B={b}")
            cshape = cov.shape[1:]
        else:
            raise ShapeError("cov must be (3, 8h, 8w) or (B, 3, 8h, 8w)")
        if cshape != (len(COVARIATES), FACTOR * h, FACTOR * w):
            raise ShapeError(
                f"cov shape {cshape} != ({len(COVARIATES)}, {FACTOR * h}, {FACTOR * w})"
            )

    @property
    def batch_size(self) -> int:
        return self.low.shape[0]


# --- container files -------------------------------------------------------
#
# One .npz per field / pair: raw float64 arrays plus a JSON metadata string.
# float64 -> npz -> float64 is lossless, so round trips are bit-identical.


def _meta_array(meta: dict) -> np.ndarray:
    return np.array(json.dumps(meta))


def _read_meta(z) -> dict:
    if "meta" not in z:
        raise ConfigurationError("not a windscale container: missing meta entry")
    return json.loads(str(z["meta"][()]))


def save_field(path, grid: FieldGrid) -> None:
    meta = {"kind": "field", "channels": list(grid.channels), "spacing_km": grid.spacing_km}
    np.savez(path, data=grid.data, meta=_meta_array(meta))


def save_pair(path, pair: SamplePair) -> None:
    meta = {
        "kind": "pair",
        "timestamp": pair.timestamp,
        "low_channels": list(pair.low.channels),
        "high_channels": list(pair.high.channels),
        "cov_channels": list(pair.covariates.channels),
        "low_spacing_km": pair.low.spacing_km,
        "high_spacing_km": pair.high.spacing_km,
        "cov_spacing_km": pair.covariates.spacing_km,
    }
    np.savez(path, low=pair.low.data, high=pair.high.data,
             cov=pair.covariates.data, meta=_meta_array(meta))


def load_field(path) -> FieldGrid:
    with np.load(path) as z:
        meta = _read_meta(z)
        if meta.get("kind") != "field":
            raise ConfigurationError(f"{path} is a {meta.get('kind')!r} container, not a field")
        return FieldGrid(tuple(meta["channels"]), z["data"], meta["spacing_km"])


def load_pair(path) -> SamplePair:
    with np.load(path) as z:
        meta = _read_meta(z)
        if meta.get("kind") != "pair":
            raise ConfigurationError(f"{path} is a {meta.get('kind')!r} container, not a pair")
        low = FieldGrid(tuple(meta["low_channels"]), z["low"], meta["low_spacing_km"])
        high = FieldGrid(tuple(meta["high_channels"]), z["high"], meta["high_spacing_km"])
        cov = FieldGrid(tuple(meta["cov_channels"]), z["cov"], meta["cov_spacing_km"])
        return SamplePair(low=low, high=high, covariates=cov, timestamp=meta["timestamp"])


def load_any(path):
    """Load either container kind; returns FieldGrid or SamplePair."""
    with np.load(path) as z:
        kind = _read_meta(z).get("kind")
    if kind == "field":
        return load_field(path)
    if kind == "pair":
        return load_pair(path)
    raise ConfigurationError(f"{path}: unknown container kind {kind!r}")
