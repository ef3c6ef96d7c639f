"""Synthetic labelled 4D cohorts with a planted inter-block coupling difference.

Each subject is generated from its own seed, ``SeedSequence([seed, index])``,
so subject ``i`` is identical whether it is produced alone, in order, or in
parallel with the others.

Signal model, per subject:

* every block ``b`` carries a latent AR(1) signal ``s_b`` (unit variance);
* for each planted pair ``(a, b)`` of class-1 subjects the second latent is
  replaced by ``rho * s_a + sqrt(1 - rho^2) * s_b`` with
  ``rho = effect_size / sqrt(1 + effect_size^2)``; class 0 keeps ``rho = 0``;
* each in-block voxel is ``baseline + s_b + noise`` with AR(1) noise of
  coefficient ``ar_coefficient`` and unit variance;
* background voxels carry low-amplitude white noise and are outside the mask.

Planted pairs are mirror images across the x midline when the block grid has
an even number of columns along x, so the difference also shows up in
homotopic connectivity. With ``effect_size >= 0.3`` the planted ROI edge
separates the classes with a t-statistic well above 3 at 40 subjects per
class and ``T = 120``.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidConfig
from .nifti import MaskVolume, Volume3D, Volume4D, save_nifti

LATENT_AR = 0.6
BASELINE = 1000.0
RECOVERABLE_EFFECT = 0.3


@dataclass(frozen=True)
class SynthConfig:
    n_subjects_per_class: int = 40
    extents: tuple = (24, 24, 24)
    T: int | tuple = 120
    tr_seconds: float = 2.0
    n_blocks: int = 12
    ar_coefficient: float = 0.4
    effect_size: float = 1.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(int(e) for e in self.extents))
        if isinstance(self.T, (list, tuple)):
            object.__setattr__(self, "T", tuple(int(t) for t in self.T))
        if len(self.extents) != 3 or min(self.extents) < 8:
            raise InvalidConfig(f"extents must be 3 values >= 8, got {self.extents}")
        if self.n_blocks < 2:
            raise InvalidConfig("n_blocks must be >= 2")
        if not 0 <= self.ar_coefficient < 1:
            raise InvalidConfig("ar_coefficient must lie in [0, 1)")
        if self.effect_size < 0:
            raise InvalidConfig("effect_size must be >= 0")
        if self.n_subjects_per_class < 1:
            raise InvalidConfig("need at least one subject per class")
        lo, hi = self.t_range
        if lo < 8 or hi < lo:
            raise InvalidConfig(f"invalid T {self.T}")
        if self.tr_seconds <= 0:
            raise InvalidConfig("tr_seconds must be positive")

    @property
    def t_range(self):
        if isinstance(self.T, tuple):
            if len(self.T) != 2:
                raise InvalidConfig("T range must be (low, high)")
            return self.T
        return (int(self.T), int(self.T))

    @property
    def coupling(self):
        return self.effect_size / np.sqrt(1.0 + self.effect_size ** 2)


def block_grid(n_blocks):
    """Factor ``n_blocks`` into a near-cubic ``(gx, gy, gz)`` grid, preferring even ``gx``."""
    best = None
    for gx in range(1, n_blocks + 1):
        if n_blocks % gx:
            continue
        for gy in range(1, n_blocks // gx + 1):
            if (n_blocks // gx) % gy:
                continue
            gz = n_blocks // gx // gy
            dims = (gx, gy, gz)
            score = (gx % 2, max(dims) / min(dims), -gx)
            if best is None or score < best[0]:
                best = (score, dims)
    return best[1]


def _edges(lo, hi, g):
    """Symmetric integer cut points splitting ``[lo, hi)`` into ``g`` runs."""
    raw = np.linspace(lo, hi, g + 1)
    edges = np.floor(raw + 1e-9).astype(int)
    for k in range(g // 2 + 1):
        edges[g - k] = lo + hi - edges[k]
    return edges


@dataclass
class BlockLayout:
    atlas: np.ndarray          # int labels, 0 = background
    grid: tuple
    pairs: list                # planted (a, b) block-label pairs

    @property
    def mask(self):
        return self.atlas > 0


def block_layout(cfg: SynthConfig) -> BlockLayout:
    grid = block_grid(cfg.n_blocks)
    atlas = np.zeros(cfg.extents, dtype=np.int16)
    edges = []
    for n, g in zip(cfg.extents, grid):
        margin = max(1, n // 6)
        if n - 2 * margin < g:
            raise InvalidConfig(f"extent {n} too small for {g} blocks along an axis")
        edges.append(_edges(margin, n - margin, g))
    label = {}
    for ix, iy, iz in itertools.product(*(range(g) for g in grid)):
        b = len(label) + 1
        label[(ix, iy, iz)] = b
        ex, ey, ez = edges
        atlas[ex[ix]:ex[ix + 1], ey[iy]:ey[iy + 1], ez[iz]:ez[iz + 1]] = b

    gx = grid[0]
    if gx >= 2:
        candidates = [(label[(ix, iy, iz)], label[(gx - 1 - ix, iy, iz)])
                      for ix, iy, iz in sorted(label) if ix < gx - 1 - ix]
    else:
        ordered = sorted(label.values())
        candidates = [(ordered[i], ordered[i + 1]) for i in range(0, len(ordered) - 1, 2)]
    pairs = candidates[:max(1, len(candidates) // 2)]
    return BlockLayout(atlas, grid, pairs)


def _ar1(rng, phi, shape, burn_in=50):
    """Unit-variance AR(1) series along the last axis."""
    n = shape[-1] + burn_in
    eps = rng.standard_normal(shape[:-1] + (n,)) * np.sqrt(1.0 - phi ** 2)
    out = lfilter([1.0], [1.0, -phi], eps, axis=-1)
    return out[..., burn_in:]


def subject_seed(seed, index):
    return np.random.SeedSequence([int(seed), int(index)])


def labels_for(cfg: SynthConfig):
    """Class labels in subject order: alternating 0, 1, 0, 1, ..."""
    return [i % 2 for i in range(2 * cfg.n_subjects_per_class)]


def generate_subject(cfg: SynthConfig, index: int, layout: BlockLayout | None = None) -> Volume4D:
    layout = layout or block_layout(cfg)
    label = index % 2
    rng = np.random.default_rng(subject_seed(cfg.seed, index))
    lo, hi = cfg.t_range
    T = int(rng.integers(lo, hi + 1)) if hi > lo else lo

    latent = _ar1(rng, LATENT_AR, (cfg.n_blocks + 1, T))
    rho = cfg.coupling if label == 1 else 0.0
    for a, b in layout.pairs:
        latent[b] = rho * latent[a] + np.sqrt(1.0 - rho ** 2) * latent[b]

    X, Y, Z = cfg.extents
    noise = _ar1(rng, cfg.ar_coefficient, (X, Y, Z, T))
    baseline = BASELINE + 50.0 * rng.standard_normal((X, Y, Z, 1))
    inside = layout.atlas > 0
    data = np.where(inside[..., None], noise + latent[layout.atlas], 0.1 * noise) + baseline
    return Volume4D(data, spacing_mm=(3.0, 3.0, 3.0), tr_seconds=cfg.tr_seconds)


@dataclass
class SynthCohort:
    """Lazily materialized cohort; ``volume(i)`` regenerates subject ``i`` on demand."""

    config: SynthConfig
    labels: list
    atlas: Volume3D
    mask: MaskVolume
    layout: BlockLayout = field(repr=False)

    def __len__(self):
        return len(self.labels)

    def volume(self, index) -> Volume4D:
        return generate_subject(self.config, index, self.layout)

    @property
    def volumes(self):
        return [self.volume(i) for i in range(len(self))]

    def subject_ids(self):
        return [f"sub-{i:04d}" for i in range(len(self))]


def generate_cohort(cfg: SynthConfig) -> SynthCohort:
    layout = block_layout(cfg)
    return SynthCohort(
        config=cfg,
        labels=labels_for(cfg),
        atlas=Volume3D(layout.atlas.astype(np.int64)),
        mask=MaskVolume(layout.mask),
        layout=layout,
    )


def write_cohort(cohort: SynthCohort, outdir, dtype="float32"):
    """Write ``sub-XXXX.nii.gz`` files, ``labels.csv``, ``atlas.nii.gz`` and ``mask.nii.gz``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ids = cohort.subject_ids()
    for i, sid in enumerate(ids):
        save_nifti(cohort.volume(i), outdir / f"{sid}.nii.gz", dtype=dtype)
    save_nifti(cohort.atlas, outdir / "atlas.nii.gz", dtype="int16")
    save_nifti(cohort.mask, outdir / "mask.nii.gz")
    with open(outdir / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "label"])
        for sid, lab in zip(ids, cohort.labels):
            w.writerow([sid, lab])
    return outdir
