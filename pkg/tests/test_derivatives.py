import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from conftest import small_mask, small_volume
from stomics import derivatives as D
from stomics import kernels
from stomics.errors import DegenerateSeries, ExtentMismatch, InvalidConfig
from stomics.nifti import MaskVolume, Volume4D


@pytest.fixture(params=["compiled", "python"])
def backend(request):
    if request.param == "compiled" and kernels.compiled_backend is None:
        pytest.skip("compiled kernels not built")
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend("compiled")


def test_neighbourhood_sizes():
    for size in (7, 19, 27):
        offs = D.neighborhood_offsets(size)
        assert len(offs) == size
        assert sorted(map(tuple, offs)) == sorted(oracles.neighbourhood(size))
    with pytest.raises(InvalidConfig):
        D.neighborhood_offsets(8)


def test_kendalls_w_identical_series_is_one():
    s = np.arange(10.0)
    assert D.kendalls_w([s, s, s]) == pytest.approx(1.0)


def test_kendalls_w_reversed_pair_is_zero():
    s = np.arange(10.0)
    assert D.kendalls_w([s, s[::-1]]) == pytest.approx(0.0, abs=1e-15)


def test_kendalls_w_matches_brute_force_with_ties():
    rng = np.random.default_rng(3)
    for _ in range(20):
        series = rng.integers(0, 4, size=(5, 9)).astype(float)
        assert D.kendalls_w(series) == pytest.approx(oracles.kendall_w(series.tolist()), abs=1e-12)


def test_kendalls_w_two_routes_agree_without_ties():
    rng = np.random.default_rng(4)
    series = rng.standard_normal((6, 15))
    direct = oracles.kendall_w(series.tolist())
    via_spearman = oracles.kendall_w_via_spearman(series.tolist())
    assert direct == pytest.approx(via_spearman, abs=1e-12)
    assert D.kendalls_w(series) == pytest.approx(direct, abs=1e-12)


def test_kendalls_w_needs_two_series_and_points():
    with pytest.raises(DegenerateSeries):
        D.kendalls_w([[1.0, 2.0, 3.0]])
    with pytest.raises(DegenerateSeries):
        D.kendalls_w([[1.0], [2.0]])


def test_tie_terms():
    assert D.tie_terms([1, 1, 2, 3, 3, 3])[0] == (8 - 2) + (27 - 3)
    assert D.tie_terms([1, 2, 3])[0] == 0


@pytest.mark.parametrize("size", [7, 19, 27])
def test_reho_matches_brute_force(backend, size):
    v, m = small_volume(1), small_mask(1)
    got = D.reho(v, m, D.DerivativeSpec(reho_neighborhood=size)).channel(0)
    want = oracles.reho(v.data, m.data, size)
    assert np.max(np.abs(got - want)) <= 1e-10


def test_reho_with_ties_matches_brute_force(backend):
    v, m = small_volume(2, integer=True), small_mask(2)
    got = D.reho(v, m).channel(0)
    assert np.max(np.abs(got - oracles.reho(v.data, m.data, 27))) <= 1e-10


@pytest.mark.parametrize("weighted", [False, True])
def test_degree_centrality_matches_brute_force(vol6, mask6, weighted):
    got = D.degree_centrality(vol6, mask6, D.DerivativeSpec(dc_weighted=weighted)).channel(0)
    want = oracles.degree(vol6.data, mask6.data, 0.25, weighted)
    if weighted:
        assert np.max(np.abs(got - want)) <= 1e-10
    else:
        assert np.array_equal(got, want)


def test_degree_centrality_thread_count_does_not_change_result():
    v, m = small_volume(5, shape=(12, 12, 8)), small_mask(5, shape=(12, 12, 8))
    one = D.degree_centrality(v, m, threads=1).channel(0)
    four = D.degree_centrality(v, m, threads=4).channel(0)
    assert np.array_equal(one, four)


def test_lfcd_matches_brute_force(backend, vol6, mask6):
    got = D.lfcd(vol6, mask6).channel(0)
    assert np.array_equal(got, oracles.lfcd(vol6.data, mask6.data, 0.25))


def test_vmhc_matches_brute_force(vol6, mask6):
    got = D.vmhc(vol6, mask6).channel(0)
    assert np.max(np.abs(got - oracles.vmhc(vol6.data, mask6.data))) <= 1e-10


def test_vmhc_symmetric_volume_is_one():
    v = small_volume(6)
    data = v.data.copy()
    data[3:] = data[2::-1]
    m = MaskVolume(np.ones((6, 6, 6), bool))
    got = D.vmhc(Volume4D(data), m).channel(0)
    assert np.allclose(got, 1.0)


def test_flat_series_give_zero_correlation():
    data = np.random.default_rng(0).standard_normal((4, 4, 4, 12))
    data[1, 1, 1] = 5.0
    z = D.unit_series(data)
    assert np.all(z[1, 1, 1] == 0)
    m = MaskVolume(np.ones((4, 4, 4), bool))
    assert D.degree_centrality(Volume4D(data), m).channel(0)[1, 1, 1] == 0


def test_maps_are_zero_outside_mask(vol6, mask6):
    maps = D.derivative_maps(vol6, mask6)
    for name, arr in maps.items():
        assert np.all(arr[~mask6.data] == 0), name


def test_stack_is_znormalized_in_mask(vol6, mask6):
    stack = D.derivative_stack(vol6, mask6).data
    assert stack.shape == (6, 6, 6, 4)
    for c in range(4):
        inside = stack[..., c][mask6.data]
        assert inside.mean() == pytest.approx(0, abs=1e-12)
        assert inside.std() == pytest.approx(1, abs=1e-12)


def test_channel_subset_is_canonical_order(vol6, mask6):
    spec = D.DerivativeSpec(channels=("vmhc", "reho"))
    assert spec.channels == ("reho", "vmhc")
    assert D.derivative_stack(vol6, mask6, spec).channels == 2


def test_spec_validation():
    with pytest.raises(InvalidConfig):
        D.DerivativeSpec(reho_neighborhood=9)
    with pytest.raises(InvalidConfig):
        D.DerivativeSpec(correlation_threshold=1.5)
    with pytest.raises(InvalidConfig):
        D.DerivativeSpec(channels=("alff",))


def test_extent_mismatch(vol6):
    with pytest.raises(ExtentMismatch):
        D.reho(vol6, MaskVolume(np.ones((5, 6, 6), bool)))


@given(scale=st.floats(0.01, 100), shift=st.floats(-1e3, 1e3), seed=st.integers(0, 50))
def test_maps_invariant_to_positive_affine_rescaling(scale, shift, seed):
    v, m = small_volume(seed, shape=(5, 5, 4), T=16), small_mask(seed, shape=(5, 5, 4))
    w = Volume4D(v.data * scale + shift)
    a, b = D.derivative_maps(v, m), D.derivative_maps(w, m)
    assert np.allclose(a["reho"], b["reho"], atol=1e-10)
    assert np.allclose(a["vmhc"], b["vmhc"], atol=1e-8)
    # thresholded counts may flip only for correlations within rounding of the threshold
    assert np.abs(a["dc"] - b["dc"]).max() <= 1
    assert np.abs(a["lfcd"] - b["lfcd"]).max() <= 1


@given(seed=st.integers(0, 200))
def test_reho_range_and_kernel_parity(seed):
    v, m = small_volume(seed, shape=(5, 4, 4), T=10, integer=seed % 2 == 0), small_mask(seed, shape=(5, 4, 4))
    ranks = np.ascontiguousarray(D.rankdata(v.data, axis=-1, method="average"))
    ties = np.ascontiguousarray(D.tie_terms(v.data.reshape(-1, 10)).reshape(5, 4, 4))
    offs = D.neighborhood_offsets(27)
    py = kernels.python_backend.reho_map(ranks, ties, m.data, offs)
    assert np.all((py >= -1e-12) & (py <= 1 + 1e-12))
    if kernels.compiled_backend is not None:
        c = kernels.compiled_backend.reho_map(ranks, ties, m.data, offs)
        assert np.allclose(py, c, atol=1e-12)
        z = np.ascontiguousarray(D.unit_series(v.data))
        assert np.array_equal(kernels.python_backend.lfcd_map(z, m.data, 0.25),
                              kernels.compiled_backend.lfcd_map(z, m.data, 0.25))
