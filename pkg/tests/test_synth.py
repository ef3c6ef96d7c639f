import filecmp

import numpy as np
import pytest
from scipy import stats

from stomics import connectome, synth
from stomics.errors import InvalidConfig
from stomics.nifti import load_nifti

SMALL = synth.SynthConfig(n_subjects_per_class=3, extents=(16, 16, 16), T=40, seed=11)


def test_block_grid_prefers_even_x():
    assert synth.block_grid(12) == (2, 2, 3)
    assert synth.block_grid(8) == (2, 2, 2)
    assert np.prod(synth.block_grid(7)) == 7


def test_layout_labels_and_mirror_pairs():
    layout = synth.block_layout(synth.SynthConfig())
    labels = set(np.unique(layout.atlas).tolist())
    assert labels == set(range(13))
    assert layout.pairs
    for a, b in layout.pairs:
        mirrored = layout.atlas[::-1]
        assert np.array_equal(layout.atlas == a, mirrored == b)


def test_labels_alternate_and_balance():
    cfg = synth.SynthConfig(n_subjects_per_class=5)
    labels = synth.labels_for(cfg)
    assert labels[:4] == [0, 1, 0, 1]
    assert sum(labels) == 5 and len(labels) == 10


def test_subject_is_order_independent():
    cohort = synth.generate_cohort(SMALL)
    a = cohort.volume(4).data
    b = synth.generate_subject(SMALL, 4).data
    assert np.array_equal(a, b)
    assert not np.array_equal(a, cohort.volume(3).data)


def test_variable_length_range():
    cfg = synth.SynthConfig(n_subjects_per_class=4, extents=(12, 12, 12), T=(20, 30))
    lengths = {synth.generate_subject(cfg, i).n_timepoints for i in range(8)}
    assert all(20 <= t <= 30 for t in lengths)
    assert len(lengths) > 1


def test_background_outside_mask_is_quiet():
    cohort = synth.generate_cohort(SMALL)
    v = cohort.volume(0).data
    outside = v[~cohort.mask.data].std(axis=-1).mean()
    inside = v[cohort.mask.data].std(axis=-1).mean()
    assert outside < 0.2 * inside


def test_write_cohort_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        synth.write_cohort(synth.generate_cohort(SMALL), tmp_path / name)
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    _, atlas = load_nifti(tmp_path / "a" / "atlas.nii.gz")
    assert atlas.data.dtype.kind == "i"
    lines = (tmp_path / "a" / "labels.csv").read_text().splitlines()
    assert lines[0] == "subject_id,label" and lines[2] == "sub-0001,1"


def planted_edge_t(effect, n=40):
    cfg = synth.SynthConfig(n_subjects_per_class=n, extents=(24, 24, 24), T=120, effect_size=effect, seed=3)
    cohort = synth.generate_cohort(cfg)
    a, b = cohort.layout.pairs[0]
    r = np.empty(len(cohort))
    for i in range(len(cohort)):
        ts = connectome.roi_mean_timeseries(cohort.volume(i), cohort.layout.atlas)
        r[i] = np.corrcoef(ts[:, a - 1], ts[:, b - 1])[0, 1]
    y = np.array(cohort.labels)
    return stats.ttest_ind(r[y == 1], r[y == 0], equal_var=False).statistic


def test_recoverable_effect_separates_planted_edge():
    assert planted_edge_t(synth.RECOVERABLE_EFFECT) > 3


def test_config_validation():
    with pytest.raises(InvalidConfig):
        synth.SynthConfig(extents=(4, 24, 24))
    with pytest.raises(InvalidConfig):
        synth.SynthConfig(effect_size=-1)
    with pytest.raises(InvalidConfig):
        synth.SynthConfig(T=4)
    with pytest.raises(InvalidConfig):
        synth.SynthConfig(ar_coefficient=1.0)
