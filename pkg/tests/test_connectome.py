import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from stomics import connectome as C
from stomics.errors import DataError, EmptyRoi, ExtentMismatch, IndexOutOfBounds, LengthMismatch
from stomics.nifti import Volume4D


def test_roi_means_match_loops():
    rng = np.random.default_rng(0)
    data = rng.standard_normal((4, 4, 3, 10))
    atlas = rng.integers(1, 5, size=(4, 4, 3))
    atlas[0, 0, 0] = 0
    ts = C.roi_mean_timeseries(Volume4D(data), atlas)
    assert ts.shape == (10, 4)
    for j in range(4):
        assert np.allclose(ts[:, j], data[atlas == j + 1].mean(axis=0))


def test_roi_errors():
    data = Volume4D(np.zeros((3, 3, 3, 4)))
    with pytest.raises(EmptyRoi):
        C.roi_mean_timeseries(data, np.zeros((3, 3, 3), int))
    atlas = np.ones((3, 3, 3), int)
    atlas[0, 0, 0] = 3
    with pytest.raises(EmptyRoi):
        C.roi_mean_timeseries(data, atlas)
    with pytest.raises(ExtentMismatch):
        C.roi_mean_timeseries(data, np.ones((3, 3, 2), int))


def test_fc_matches_pairwise_pearson():
    ts = np.random.default_rng(1).standard_normal((30, 6))
    fc = C.fc_matrix(ts)
    for i, j in itertools.product(range(6), repeat=2):
        want = 1.0 if i == j else oracles.pearson(ts[:, i], ts[:, j])
        assert fc[i, j] == pytest.approx(want, abs=1e-12)
    assert np.array_equal(fc, fc.T)


def test_fc_constant_column_is_zero():
    ts = np.random.default_rng(2).standard_normal((20, 3))
    ts[:, 1] = 7.0
    fc = C.fc_matrix(ts)
    assert fc[0, 1] == 0 and fc[1, 1] == 1


def test_upper_triangle_order():
    fc = np.arange(16.0).reshape(4, 4)
    assert list(C.upper_triangle(fc)) == [1, 2, 3, 6, 7, 11]
    assert C.n_features(116) == 6670 and C.n_features(200) == 19900


@given(m=st.integers(2, 12), seed=st.integers(0, 1000))
def test_triangle_round_trip(m, seed):
    ts = np.random.default_rng(seed).standard_normal((m + 5, m))
    fc = C.fc_matrix(ts)
    feats = C.upper_triangle(fc)
    assert feats.size == m * (m - 1) // 2
    assert np.array_equal(C.from_upper_triangle(feats), fc)


def test_from_upper_triangle_rejects_non_triangular():
    with pytest.raises(LengthMismatch):
        C.from_upper_triangle(np.zeros(5))


def test_fisher_z_is_arctanh():
    fc = C.from_upper_triangle(np.array([0.5, -0.3, 0.9]))
    assert np.allclose(C.upper_triangle(fc, fisher_z=True), np.arctanh([0.5, -0.3, 0.9]))


def test_three_rois_give_three_features():
    ts = np.random.default_rng(3).standard_normal((40, 3))
    assert C.upper_triangle(C.fc_matrix(ts)).size == 3


def brute_quartile(features):
    means = np.mean(features, axis=0)
    d = means.size
    k = d // 4
    order_desc = sorted(range(d), key=lambda i: (-means[i], i))
    top = order_desc[:k]
    rest = [i for i in range(d) if i not in top]
    bottom = sorted(rest, key=lambda i: (means[i], i))[:k]
    return sorted(top + bottom)


@given(d=st.integers(4, 60), n=st.integers(1, 8), seed=st.integers(0, 10_000), ties=st.booleans())
def test_quartile_mask_matches_sorting_oracle(d, n, seed, ties):
    rng = np.random.default_rng(seed)
    feats = rng.integers(-2, 3, size=(n, d)).astype(float) if ties else rng.standard_normal((n, d))
    mask = C.diagnet_mask(list(feats))
    assert list(mask.indices) == brute_quartile(feats)
    assert len(mask) == 2 * (d // 4)
    assert len(set(mask.indices.tolist())) == len(mask)


def test_quartile_mask_paper_sizes():
    for m, kept in [(116, 3334), (200, 9950)]:
        d = C.n_features(m)
        feats = np.random.default_rng(m).standard_normal((3, d))
        assert len(C.diagnet_mask(list(feats))) == kept


def test_mask_json_round_trip_and_apply():
    feats = np.random.default_rng(4).standard_normal((5, 10))
    mask = C.diagnet_mask(list(feats), fold=2)
    back = C.QuartileMask.from_json(mask.to_json())
    assert np.array_equal(back.indices, mask.indices) and back.fold == 2 and back.n_features == 10
    assert np.array_equal(C.apply_mask(feats, back), feats[:, mask.indices])
    with pytest.raises(IndexOutOfBounds):
        C.apply_mask(feats[:, :3], mask)


def test_mask_needs_consistent_lengths():
    with pytest.raises(LengthMismatch):
        C.diagnet_mask([np.zeros(4), np.zeros(5)])
    with pytest.raises(LengthMismatch):
        C.diagnet_mask([])


def test_timeseries_csv_round_trip(tmp_path):
    ts = np.random.default_rng(5).standard_normal((12, 4))
    C.write_timeseries_csv(ts, tmp_path / "ts.csv")
    assert np.array_equal(C.read_timeseries_csv(tmp_path / "ts.csv"), ts)
    (tmp_path / "bad.csv").write_text("a,b\n1,x\n")
    with pytest.raises(DataError):
        C.read_timeseries_csv(tmp_path / "bad.csv")
