"""Voxelwise temporal derivatives: ReHo, degree centrality, LFCD and VMHC.

All four are rank or correlation statistics, so they are unchanged by a
positive affine rescaling of the data. Flat (zero-variance) series correlate
as 0 with everything.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .errors import DegenerateSeries, ExtentMismatch, InvalidConfig
from .nifti import MaskVolume, Volume3D, Volume4D, check_extents

CHANNELS = ("reho", "dc", "lfcd", "vmhc")
_NORM_EPS = 1e-12
# Fixed row-chunk for correlation sweeps; results do not depend on thread count.
DC_CHUNK = 512


@dataclass(frozen=True)
class DerivativeSpec:
    reho_neighborhood: int = 27
    correlation_threshold: float = 0.25
    dc_weighted: bool = False
    channels: tuple = CHANNELS

    def __post_init__(self):
        if self.reho_neighborhood not in (7, 19, 27):
            raise InvalidConfig("reho_neighborhood must be 7, 19 or 27")
        if not -1 < self.correlation_threshold < 1:
            raise InvalidConfig("correlation_threshold must lie in (-1, 1)")
        chans = tuple(self.channels)
        if not chans or any(c not in CHANNELS for c in chans) or len(set(chans)) != len(chans):
            raise InvalidConfig(f"channels must be a non-empty subset of {CHANNELS}, got {chans}")
        # keep canonical order whatever the caller passed
        object.__setattr__(self, "channels", tuple(c for c in CHANNELS if c in chans))


def neighborhood_offsets(size):
    """Offsets (including the centre) for the 7-, 19- or 27-voxel neighbourhood."""
    offs = []
    for d in itertools.product((-1, 0, 1), repeat=3):
        nz = sum(abs(v) for v in d)
        if size == 27 or (size == 19 and nz <= 2) or (size == 7 and nz <= 1):
            offs.append(d)
    if len(offs) != size:
        raise InvalidConfig(f"unsupported neighbourhood size {size}")
    return np.array(offs, dtype=np.int64)


def tie_terms(values):
    """Per-series tie correction ``sum(t^3 - t)`` over groups of equal values."""
    a = np.sort(np.atleast_2d(np.asarray(values, dtype=np.float64)), axis=-1)
    rows, n = a.shape
    starts = np.ones_like(a, dtype=bool)
    starts[:, 1:] = a[:, 1:] != a[:, :-1]
    group = np.cumsum(starts, axis=-1) - 1 + (np.arange(rows) * n)[:, None]
    counts = np.bincount(group.ravel(), minlength=rows * n).reshape(rows, n).astype(np.float64)
    return np.sum(counts ** 3 - counts, axis=-1)


def kendalls_w(series_set) -> float:
    """Kendall's coefficient of concordance of ``K`` series over ``n`` time points.

    Time points are the ranked objects and each series acts as one rater.
    Ties get midranks and the usual correction in the denominator.
    """
    a = np.atleast_2d(np.asarray(series_set, dtype=np.float64))
    k, n = a.shape
    if n < 2:
        raise DegenerateSeries("Kendall's W needs at least 2 time points")
    if k < 2:
        raise DegenerateSeries("Kendall's W needs at least 2 series")
    ranks = rankdata(a, axis=-1, method="average")
    totals = ranks.sum(axis=0)
    s = np.sum((totals - k * (n + 1) / 2.0) ** 2)
    denom = k * k * (n ** 3 - n) - k * tie_terms(a).sum()
    if denom <= _NORM_EPS:
        return 0.0
    return float(min(max(12.0 * s / denom, 0.0), 1.0))


def unit_series(data):
    """Centre each series and scale to unit L2 norm, so that dot products are Pearson r."""
    data = np.asarray(data, dtype=np.float64)
    centered = data - data.mean(axis=-1, keepdims=True)
    norm = np.sqrt(np.sum(centered * centered, axis=-1, keepdims=True))
    flat = norm < _NORM_EPS * np.sqrt(data.shape[-1])
    return np.where(flat, 0.0, centered / np.where(flat, 1.0, norm))


def _check(v: Volume4D, mask: MaskVolume):
    check_extents(v, mask)
    if v.n_timepoints < 2:
        raise ExtentMismatch("need at least 2 time points")


def reho(v: Volume4D, mask: MaskVolume, spec: DerivativeSpec = DerivativeSpec()) -> Volume3D:
    _check(v, mask)
    ranks = rankdata(v.data, axis=-1, method="average")
    ties = tie_terms(v.data.reshape(-1, v.n_timepoints)).reshape(v.spatial_shape)
    out = kernels.reho_map(
        np.ascontiguousarray(ranks), np.ascontiguousarray(ties),
        mask.data, neighborhood_offsets(spec.reho_neighborhood),
    )
    return Volume3D(np.clip(out, 0.0, 1.0), spacing_mm=v.spacing_mm)


def _map_chunks(fn, n_rows, threads):
    starts = list(range(0, n_rows, DC_CHUNK))
    if threads and threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, starts))
    return [fn(s) for s in starts]


def degree_centrality(v: Volume4D, mask: MaskVolume, spec: DerivativeSpec = DerivativeSpec(),
                      threads: int = 1) -> Volume3D:
    """Binarized (count of r > threshold) or weighted (sum of those r) degree per voxel."""
    _check(v, mask)
    if mask.count < 2:
        raise ExtentMismatch("degree centrality needs at least 2 in-mask voxels")
    z = unit_series(v.data[mask.data])
    thr = spec.correlation_threshold

    def chunk(start):
        stop = min(start + DC_CHUNK, len(z))
        r = np.clip(z[start:stop] @ z.T, -1.0, 1.0)
        r[np.arange(stop - start), np.arange(start, stop)] = -np.inf  # drop self
        hit = r > thr
        if spec.dc_weighted:
            return np.where(hit, r, 0.0).sum(axis=1)
        return hit.sum(axis=1).astype(np.float64)

    degree = np.concatenate(_map_chunks(chunk, len(z), threads))
    out = np.zeros(v.spatial_shape)
    out[mask.data] = degree
    return Volume3D(out, spacing_mm=v.spacing_mm)


def lfcd(v: Volume4D, mask: MaskVolume, spec: DerivativeSpec = DerivativeSpec()) -> Volume3D:
    """Local functional connectivity density by seed-correlation flood fill over face neighbours."""
    _check(v, mask)
    z = np.ascontiguousarray(unit_series(v.data))
    counts = kernels.lfcd_map(z, mask.data, float(spec.correlation_threshold))
    return Volume3D(counts.astype(np.float64), spacing_mm=v.spacing_mm)


def vmhc(v: Volume4D, mask: MaskVolume) -> Volume3D:
    """Correlation of each voxel with its mirror across the stored x axis."""
    _check(v, mask)
    z = unit_series(v.data)
    mirrored = z[::-1]
    r = np.clip(np.sum(z * mirrored, axis=-1), -1.0, 1.0)
    valid = mask.data & mask.data[::-1]
    return Volume3D(np.where(valid, r, 0.0), spacing_mm=v.spacing_mm)


def normalize_in_mask(values, mask):
    """z-score over in-mask voxels (population std); zeros outside and for flat maps."""
    out = np.zeros_like(values, dtype=np.float64)
    inside = values[mask]
    std = inside.std()
    if std >= _NORM_EPS:
        out[mask] = (inside - inside.mean()) / std
    return out


def derivative_maps(v: Volume4D, mask: MaskVolume, spec: DerivativeSpec = DerivativeSpec(),
                    threads: int = 1) -> dict:
    """Raw (un-normalized) maps for the channels selected in ``spec``."""
    compute = {
        "reho": lambda: reho(v, mask, spec),
        "dc": lambda: degree_centrality(v, mask, spec, threads=threads),
        "lfcd": lambda: lfcd(v, mask, spec),
        "vmhc": lambda: vmhc(v, mask),
    }
    return {name: compute[name]().channel(0) for name in spec.channels}


def derivative_stack(v: Volume4D, mask: MaskVolume, spec: DerivativeSpec = DerivativeSpec(),
                     threads: int = 1) -> Volume3D:
    """Stack the selected derivatives as channels, each z-scored over the mask."""
    maps = derivative_maps(v, mask, spec, threads=threads)
    stack = np.stack([normalize_in_mask(maps[c], mask.data) for c in spec.channels], axis=-1)
    stack[~mask.data] = 0.0
    return Volume3D(stack, spacing_mm=v.spacing_mm)
