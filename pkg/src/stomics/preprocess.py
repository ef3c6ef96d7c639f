"""Temporal filtering, normalization, resampling and spatial augmentation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidConfig, InvalidTarget, SequenceTooShort
from .nifti import Volume3D

_STD_EPS = 1e-12


@dataclass(frozen=True)
class BandpassSpec:
    low_hz: float = 0.01
    high_hz: float = 10.0
    tr_seconds: float = 2.0

    def __post_init__(self):
        if not 0 <= self.low_hz < self.high_hz:
            raise InvalidConfig(f"need 0 <= low_hz < high_hz, got {self.low_hz}, {self.high_hz}")
        if self.tr_seconds <= 0:
            raise InvalidConfig("tr_seconds must be positive")

    @property
    def nyquist(self):
        return 1.0 / (2.0 * self.tr_seconds)

    @property
    def effective_high(self):
        return min(self.high_hz, self.nyquist)


def bandpass(ts, spec: BandpassSpec, axis=-1):
    """Ideal (brick-wall) FFT bandpass along ``axis``.

    Bins below ``low_hz`` or above the Nyquist-clamped high edge are zeroed;
    the DC bin is always dropped when ``low_hz > 0``. Works on a single series
    or on any array of series.
    """
    ts = np.asarray(ts, dtype=np.float64)
    n = ts.shape[axis]
    if n < 8:
        raise SequenceTooShort(f"bandpass needs at least 8 samples, got {n}")
    freqs = np.fft.rfftfreq(n, d=spec.tr_seconds)
    keep = (freqs >= spec.low_hz) & (freqs <= spec.effective_high)
    if spec.low_hz > 0:
        keep[0] = False
    spectrum = np.fft.rfft(ts, axis=axis)
    shape = [1] * ts.ndim
    shape[axis] = keep.size
    spectrum = spectrum * keep.reshape(shape)
    return np.fft.irfft(spectrum, n=n, axis=axis)


def znormalize(ts, axis=-1):
    """Zero mean, unit population std; flat series map to zeros."""
    ts = np.asarray(ts, dtype=np.float64)
    mean = ts.mean(axis=axis, keepdims=True)
    centered = ts - mean
    std = np.sqrt(np.mean(centered * centered, axis=axis, keepdims=True))
    safe = np.where(std < _STD_EPS, 1.0, std)
    return np.where(std < _STD_EPS, 0.0, centered / safe)


def _corner_aligned(n_src, n_dst):
    if n_dst == 1:
        return np.array([(n_src - 1) / 2.0])
    return np.arange(n_dst) * ((n_src - 1) / (n_dst - 1))


def resample_to(vol: Volume3D, target) -> Volume3D:
    """Trilinear resampling with corner-aligned grids (first and last samples coincide)."""
    target = tuple(int(t) for t in target)
    if len(target) != 3 or min(target) < 1:
        raise InvalidTarget(f"invalid target extents {target}")
    src = vol.extents
    if min(src) < 2:
        raise InvalidTarget(f"source extents {src} too small to interpolate")
    data = vol.data.astype(np.float64)
    if tuple(src) == target:
        return Volume3D(data.copy(), spacing_mm=vol.spacing_mm)
    axes = [_corner_aligned(s, t) for s, t in zip(src, target)]
    grid = np.meshgrid(*axes, indexing="ij")
    out = np.empty(target + (vol.channels,))
    for c in range(vol.channels):
        out[..., c] = ndimage.map_coordinates(data[..., c], grid, order=1, mode="nearest")
    spacing = tuple(sp * (s - 1) / max(t - 1, 1) for sp, s, t in zip(vol.spacing_mm, src, target))
    return Volume3D(out, spacing_mm=spacing)


@dataclass(frozen=True)
class AugmentSpec:
    flip_axes: tuple = (0, 1, 2)
    max_rotation_deg: float = 10.0
    max_translation_vox: int = 3
    scale_range: tuple = (0.9, 1.1)

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise InvalidConfig(f"scale_range must be positive and ordered, got {self.scale_range}")
        if any(a not in (0, 1, 2) for a in self.flip_axes):
            raise InvalidConfig(f"flip axes must be drawn from 0, 1, 2: {self.flip_axes}")
        if self.max_rotation_deg < 0 or self.max_translation_vox < 0:
            raise InvalidConfig("augmentation magnitudes must be non-negative")

    @classmethod
    def none(cls):
        return cls(flip_axes=(), max_rotation_deg=0.0, max_translation_vox=0, scale_range=(1.0, 1.0))


def _axis_angle(axis, theta):
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(theta) * k + (1 - np.cos(theta)) * (k @ k)


def draw_transform(spec: AugmentSpec, rng: np.random.Generator):
    """Draw ``(flips, rotation_matrix, shift, scale)`` for one augmentation."""
    flips = tuple(a for a in sorted(spec.flip_axes) if rng.random() < 0.5)
    axis = rng.normal(size=3)
    theta = np.deg2rad(rng.uniform(-spec.max_rotation_deg, spec.max_rotation_deg))
    rot = _axis_angle(axis, theta) if theta != 0 else np.eye(3)
    t = spec.max_translation_vox
    shift = rng.integers(-t, t + 1, size=3) if t > 0 else np.zeros(3, dtype=int)
    lo, hi = spec.scale_range
    scale = rng.uniform(lo, hi) if hi > lo else lo
    return flips, rot, shift, scale


def warp(vol: Volume3D, flips=(), rotation=None, shift=(0, 0, 0), scale=1.0) -> Volume3D:
    """Apply flip, rotation about the centre, scaling and translation as one trilinear warp.

    The forward map is ``p' = R (s F (p - c)) + c + shift``; output voxels are
    pulled back through its inverse and samples falling outside are zero.
    """
    shape = np.array(vol.extents)
    center = (shape - 1) / 2.0
    flip = np.ones(3)
    flip[list(flips)] = -1.0
    rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
    forward = rot @ (scale * np.diag(flip))
    inverse = np.linalg.inv(forward)
    offset = center - inverse @ (center + np.asarray(shift, dtype=np.float64))
    out = np.empty_like(vol.data, dtype=np.float64)
    for c in range(vol.channels):
        out[..., c] = ndimage.affine_transform(
            vol.data[..., c].astype(np.float64), inverse, offset=offset,
            order=1, mode="constant", cval=0.0,
        )
    return Volume3D(out, spacing_mm=vol.spacing_mm)


def augment(vol: Volume3D, spec: AugmentSpec, rng: np.random.Generator) -> Volume3D:
    flips, rot, shift, scale = draw_transform(spec, rng)
    return warp(vol, flips, rot, shift, scale)
