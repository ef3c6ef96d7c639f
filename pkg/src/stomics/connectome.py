"""ROI parcellation, functional connectivity and connectome feature vectors."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyRoi, ExtentMismatch, IndexOutOfBounds, LengthMismatch, ShapeMismatch
from .derivatives import unit_series
from .nifti import Volume3D, Volume4D


def atlas_labels(atlas) -> np.ndarray:
    """Integer label array ``[X, Y, Z]`` from a Volume3D or ndarray."""
    data = atlas.data if isinstance(atlas, Volume3D) else np.asarray(atlas)
    if data.ndim == 4:
        if data.shape[3] != 1:
            raise ShapeMismatch("atlas must have a single channel")
        data = data[..., 0]
    labels = np.rint(data).astype(np.int64)
    if np.any(labels < 0):
        raise ShapeMismatch("atlas labels must be non-negative")
    return labels


def roi_mean_timeseries(v: Volume4D, atlas) -> np.ndarray:
    """Mean series of each ROI as a ``T x M`` matrix (column j is label j + 1)."""
    labels = atlas_labels(atlas)
    if labels.shape != tuple(v.spatial_shape):
        raise ExtentMismatch(f"atlas extents {labels.shape} != volume extents {v.spatial_shape}")
    m = int(labels.max())
    if m < 1:
        raise EmptyRoi("atlas has no labelled voxels")
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=m + 1)[1:]
    missing = np.flatnonzero(counts == 0) + 1
    if missing.size:
        raise EmptyRoi(f"ROI labels with no voxels: {missing.tolist()}")
    series = v.data.reshape(-1, v.n_timepoints)
    sums = np.zeros((m + 1, v.n_timepoints))
    np.add.at(sums, flat, series)
    return (sums[1:] / counts[:, None]).T


def fc_matrix(ts) -> np.ndarray:
    """Pearson correlation between the columns of a ``T x M`` matrix.

    Constant columns correlate as 0; the diagonal is always 1.
    """
    ts = np.asarray(ts, dtype=np.float64)
    if ts.ndim != 2 or ts.shape[1] < 2:
        raise ShapeMismatch(f"need a T x M matrix with M >= 2, got shape {ts.shape}")
    z = unit_series(ts.T)
    fc = np.clip(z @ z.T, -1.0, 1.0)
    fc = (fc + fc.T) / 2.0
    np.fill_diagonal(fc, 1.0)
    return fc


def upper_triangle(fc, fisher_z=False) -> np.ndarray:
    """Strict upper triangle in row-major order, length ``M(M-1)/2``."""
    fc = np.asarray(fc, dtype=np.float64)
    if fc.ndim != 2 or fc.shape[0] != fc.shape[1]:
        raise ShapeMismatch("FC matrix must be square")
    rows, cols = np.triu_indices(fc.shape[0], k=1)
    feats = fc[rows, cols]
    if fisher_z:
        feats = np.arctanh(np.clip(feats, -1 + 1e-7, 1 - 1e-7))
    return feats


def from_upper_triangle(features, m=None) -> np.ndarray:
    """Rebuild the symmetric unit-diagonal matrix from its strict upper triangle."""
    features = np.asarray(features, dtype=np.float64)
    if m is None:
        m = int(round((1 + np.sqrt(1 + 8 * features.size)) / 2))
    if m * (m - 1) // 2 != features.size:
        raise LengthMismatch(f"{features.size} is not a triangular number")
    fc = np.eye(m)
    rows, cols = np.triu_indices(m, k=1)
    fc[rows, cols] = features
    fc[cols, rows] = features
    return fc


def n_features(m):
    return m * (m - 1) // 2


def connectome_features(v: Volume4D, atlas, fisher_z=False) -> np.ndarray:
    return upper_triangle(fc_matrix(roi_mean_timeseries(v, atlas)), fisher_z=fisher_z)


@dataclass
class QuartileMask:
    """Indices of the strongest and weakest mean correlations (DiagNet selection)."""

    indices: np.ndarray
    n_features: int
    fold: int | None = None
    statistic: str = "group-mean"

    def to_json(self):
        return json.dumps({
            "indices": [int(i) for i in self.indices],
            "D": int(self.n_features),
            "fold": self.fold,
            "statistic": self.statistic,
        })

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(np.asarray(obj["indices"], dtype=np.int64), int(obj["D"]),
                   obj.get("fold"), obj.get("statistic", "group-mean"))

    def __len__(self):
        return len(self.indices)


def diagnet_mask(train_features, fold=None) -> QuartileMask:
    """Keep the ``floor(D/4)`` largest and ``floor(D/4)`` smallest training-mean features.

    Ties go to the lower index. The top quarter is chosen first and the bottom
    quarter is drawn from the remaining features, so the two never overlap.
    """
    feats = [np.asarray(f, dtype=np.float64) for f in train_features]
    if not feats:
        raise LengthMismatch("need at least one training subject")
    d = feats[0].size
    if any(f.size != d for f in feats):
        raise LengthMismatch("feature vectors differ in length")
    means = np.mean(np.stack(feats), axis=0)
    k = d // 4
    top = np.argsort(-means, kind="stable")[:k]
    rest = np.setdiff1d(np.arange(d), top)
    bottom = rest[np.argsort(means[rest], kind="stable")[:k]]
    return QuartileMask(np.sort(np.concatenate([top, bottom])).astype(np.int64), d, fold)


def apply_mask(features, mask: QuartileMask) -> np.ndarray:
    features = np.asarray(features)
    idx = np.asarray(mask.indices if isinstance(mask, QuartileMask) else mask, dtype=np.int64)
    if idx.size and (idx.max() >= features.shape[-1] or idx.min() < 0):
        raise IndexOutOfBounds(f"mask index out of range for {features.shape[-1]} features")
    return features[..., idx]


def write_timeseries_csv(ts, path, roi_ids=None):
    ts = np.asarray(ts)
    ids = roi_ids if roi_ids is not None else range(1, ts.shape[1] + 1)
    header = ",".join(str(i) for i in ids)
    np.savetxt(path, ts, delimiter=",", header=header, comments="", fmt="%.17g")


def read_timeseries_csv(path) -> np.ndarray:
    """Read a ``T x M`` series written by :func:`write_timeseries_csv` (one header row)."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: not a numeric time-series CSV ({exc})") from None
    if data.shape[0] < 2 or data.shape[1] < 2:
        raise ShapeMismatch(f"{path}: need at least 2 timepoints and 2 ROIs, got {data.shape}")
    return data
