"""Whole-domain and tiled inference from a training checkpoint.

The generator is fully convolutional, so one forward pass can downscale an
arbitrarily large domain as long as the fine grid is a multiple of 8 on both
axes. Real archive grids rarely are, so inference first trims: the fine
reference grid (the covariates) drops trailing rows/columns down to the
nearest multiple of 8, and the coarse grid is cut to exactly 1/8 of that.
Note the coarse grid is NOT independently floored to a multiple of anything;
its trimmed size follows the trimmed reference, which is what makes an
off-by-one pairing like (162, 318) against (1290, 2540) come out as
(161, 317) -> (1288, 2536).

downscale_tiled produces the same field from overlapping crops, each tile
contributing only its central region. Away from tile seams the two paths
agree to float tolerance, which is also a useful self-check that the network
really is translation-consistent.
"""

from __future__ import annotations

import numpy as np
import torch

from .errors import AlignmentError, BoundsError, ConfigurationError, ShapeError
from .grids import COVARIATES, FACTOR, PREDICTANDS, PREDICTORS, FieldGrid, SamplePair
from .prep import apply_norm, invert_norm, upsample_bilinear, upsample_nearest
from .train import TrainState, load_checkpoint


def trim_to_multiple(hw: tuple[int, int], k: int = FACTOR) -> tuple[int, int]:
    """Largest (H', W') <= hw with both axes multiples of k."""
    h, w = int(hw[0]), int(hw[1])
    if k < 1:
        raise ConfigurationError(f"multiple must be >= 1, got {k}")
    if h < k or w < k:
        raise BoundsError(f"grid {hw} smaller than one {k}-multiple")
    return (k * (h // k), k * (w // k))


def trim_pair_shapes(low_hw: tuple[int, int], ref_hw: tuple[int, int],
                     k: int = FACTOR) -> tuple[tuple[int, int], tuple[int, int]]:
    """Consistent (low', ref') shapes: ref floors to a multiple of k, low
    becomes exactly ref'/k. Raises if the given low grid is too small."""
    ref_t = trim_to_multiple(ref_hw, k)
    low_t = (ref_t[0] // k, ref_t[1] // k)
    if low_hw[0] < low_t[0] or low_hw[1] < low_t[1]:
        raise BoundsError(
            f"coarse grid {low_hw} cannot cover trimmed reference {ref_t} (needs {low_t})"
        )
    return low_t, ref_t


def _trim_offset(full: int, kept: int, k: int, symmetric: bool) -> int:
    if not symmetric:
        return 0
    # symmetric trims keep k-aligned offsets so the coarse/fine pairing survives
    return ((full - kept) // 2) // k * k


def trim_grid(grid: FieldGrid, k: int = FACTOR, symmetric: bool = False) -> FieldGrid:
    """Trim a fine grid to a multiple of k (trailing edge, or centered)."""
    h, w = grid.shape_hw
    th, tw = trim_to_multiple((h, w), k)
    if (th, tw) == (h, w):
        return grid
    t = _trim_offset(h, th, k, symmetric)
    l = _trim_offset(w, tw, k, symmetric)
    return FieldGrid(grid.channels, grid.data[:, t:t + th, l:l + tw], grid.spacing_km)


def trim_pair(pair: SamplePair, k: int = FACTOR, symmetric: bool = False) -> SamplePair:
    """Trim all three grids of a pair consistently to a factor-k domain."""
    (lh, lw), (th, tw) = trim_pair_shapes(pair.low.shape_hw, pair.high.shape_hw, k)
    h, w = pair.high.shape_hw
    t = _trim_offset(h, th, k, symmetric)
    l = _trim_offset(w, tw, k, symmetric)
    high = FieldGrid(pair.high.channels, pair.high.data[:, t:t + th, l:l + tw],
                     pair.high.spacing_km)
    if pair.covariates.shape_hw != pair.high.shape_hw:
        raise ShapeError(
            f"covariates {pair.covariates.shape_hw} != fine grid {pair.high.shape_hw}"
        )
    cov = FieldGrid(pair.covariates.channels,
                    pair.covariates.data[:, t:t + th, l:l + tw],
                    pair.covariates.spacing_km)
    lt, ll = t // k, l // k
    low = FieldGrid(pair.low.channels, pair.low.data[:, lt:lt + lh, ll:ll + lw],
                    pair.low.spacing_km)
    return SamplePair(low=low, high=high, covariates=cov, timestamp=pair.timestamp)


def _load_state(ckpt) -> TrainState:
    if isinstance(ckpt, TrainState):
        return ckpt
    return load_checkpoint(ckpt)


def _check_inputs(state: TrainState, low: FieldGrid, cov: FieldGrid) -> None:
    if low.channels != PREDICTORS:
        raise ShapeError(f"coarse stack channels {low.channels} != {PREDICTORS}")
    if cov.channels != COVARIATES:
        raise ShapeError(f"covariate channels {cov.channels} != {COVARIATES}")


def _prepare(state: TrainState, low: FieldGrid, cov: FieldGrid,
             symmetric: bool) -> tuple[torch.Tensor, torch.Tensor | None, FieldGrid]:
    """Trim, normalize, and tensorize inference inputs."""
    _check_inputs(state, low, cov)
    (lh, lw), (th, tw) = trim_pair_shapes(low.shape_hw, cov.shape_hw)
    h, w = cov.shape_hw
    t = _trim_offset(h, th, FACTOR, symmetric)
    l = _trim_offset(w, tw, FACTOR, symmetric)
    cov_t = FieldGrid(cov.channels, cov.data[:, t:t + th, l:l + tw], cov.spacing_km)
    lt, ll = t // FACTOR, l // FACTOR
    low_t = FieldGrid(low.channels, low.data[:, lt:lt + lh, ll:ll + lw], low.spacing_km)

    low_n = apply_norm(low_t, state.norm)
    # FieldGrid arrays are read-only; torch needs a writable copy
    low_tensor = torch.as_tensor(np.array(low_n.data), dtype=state.dtype)[None]
    if state.gen_spec.cov_channels > 0:
        cov_n = apply_norm(cov_t, state.norm)
        cov_tensor = torch.as_tensor(np.array(cov_n.data), dtype=state.dtype)
    else:
        cov_tensor = None
    return low_tensor, cov_tensor, cov_t


def _denormalize_output(out: torch.Tensor, state: TrainState,
                        spacing_km: float) -> FieldGrid:
    raw = FieldGrid(PREDICTANDS, out.squeeze(0).detach().cpu().numpy().astype(np.float64),
                    spacing_km)
    return invert_norm(raw, state.norm)


def downscale_domain(ckpt, low: FieldGrid, cov: FieldGrid,
                     symmetric_trim: bool = False) -> FieldGrid:
    """Downscale a whole domain in one forward pass.

    ckpt is a checkpoint path or an in-memory TrainState. Returns the fine
    (u10, v10) FieldGrid on the trimmed covariate grid.
    """
    state = _load_state(ckpt)
    low_tensor, cov_tensor, cov_t = _prepare(state, low, cov, symmetric_trim)
    state.generator.eval()
    with torch.no_grad():
        out = state.generator(low_tensor, cov_tensor)
    return _denormalize_output(out, state, cov_t.spacing_km)


def downscale_baseline(low: FieldGrid, method: str) -> FieldGrid:
    """Interpolation baseline: lift coarse surface winds to the fine grid."""
    winds = low.select(("U_surf", "V_surf")).data
    if method == "bilinear":
        up = upsample_bilinear(winds, FACTOR)
    elif method == "nearest":
        up = upsample_nearest(winds, FACTOR)
    else:
        raise ConfigurationError(f"unknown baseline {method!r} (bilinear or nearest)")
    return FieldGrid(PREDICTANDS, up, low.spacing_km / FACTOR)


def _segments(length: int, tile: int, overlap: int) -> list[tuple[int, int, int]]:
    """Tile starts plus the half-open interval each tile contributes.

    Tiles advance by (tile - overlap); a final tile is pinned to the domain
    edge. Interior boundaries between contributed intervals sit mid-overlap.
    """
    stride = tile - overlap
    starts = list(range(0, length - tile + 1, stride))
    if starts[-1] + tile < length:
        starts.append(length - tile)
    segs = []
    prev_hi = 0
    for i, s in enumerate(starts):
        lo = prev_hi
        hi = length if i == len(starts) - 1 else min(s + tile - overlap // 2, length)
        segs.append((s, lo, hi))
        prev_hi = hi
    return segs


def tiled_seam_lines(hw: tuple[int, int], tile: int, overlap: int
                     ) -> tuple[list[int], list[int]]:
    """Interior seam coordinates (rows, cols) produced by downscale_tiled."""
    rows = [hi for _, _, hi in _segments(hw[0], tile, overlap)[:-1]]
    cols = [hi for _, _, hi in _segments(hw[1], tile, overlap)[:-1]]
    return rows, cols


def downscale_tiled(ckpt, low: FieldGrid, cov: FieldGrid, tile: int = 128,
                    overlap: int = 64, symmetric_trim: bool = False) -> FieldGrid:
    """Downscale by stitching overlapping tiles (central regions only).

    tile and overlap are fine-grid cell counts, both multiples of 8, with
    0 <= overlap < tile. Larger overlap pushes every stitched pixel further
    from its tile's padded border, tightening agreement with the one-shot
    path at the cost of more compute.
    """
    if tile % FACTOR or overlap % FACTOR:
        raise AlignmentError(f"tile {tile} and overlap {overlap} must be multiples of {FACTOR}")
    if not (0 <= overlap < tile):
        raise ConfigurationError(f"need 0 <= overlap < tile, got overlap={overlap} tile={tile}")
    state = _load_state(ckpt)
    low_tensor, cov_tensor, cov_t = _prepare(state, low, cov, symmetric_trim)
    h, w = cov_t.shape_hw
    if tile > h or tile > w:
        raise BoundsError(f"tile {tile} exceeds trimmed domain {h}x{w}")

    out = torch.zeros((state.gen_spec.out_channels, h, w), dtype=state.dtype)
    state.generator.eval()
    with torch.no_grad():
        for rt, rlo, rhi in _segments(h, tile, overlap):
            for ct, clo, chi in _segments(w, tile, overlap):
                lt, ll = rt // FACTOR, ct // FACTOR
                k = tile // FACTOR
                low_tile = low_tensor[:, :, lt:lt + k, ll:ll + k]
                cov_tile = (cov_tensor[:, rt:rt + tile, ct:ct + tile]
                            if cov_tensor is not None else None)
                pred = state.generator(low_tile, cov_tile)[0]
                out[:, rlo:rhi, clo:chi] = pred[:, rlo - rt:rhi - rt, clo - ct:chi - ct]
    return _denormalize_output(out[None], state, cov_t.spacing_km)
