"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` (the lines are also
collected in the terminal summary). The learning checks train real models
and take a few minutes on one core.
"""
import gzip
import hashlib
import time

import numpy as np
import pytest

import oracles
from conftest import small_mask, small_volume
from stomics import cli, connectome, derivatives as D, models, nifti, pipeline, synth
from stomics.errors import StoError
from stomics.nn import tensor as T, layers as L
from stomics.nn.gradcheck import grad_check
from stomics.nn.tensor import Tensor

GRID = (32, 32, 32)


def within(value, target, rel):
    return abs(value - target) <= rel * target


def _params(variant, n_rois):
    d = connectome.n_features(n_rois)
    shapes = {"voxel": (4, *GRID), "fc": (models.quartile_dim(d) if pipeline.uses_mask(variant) else d,)}
    spec = pipeline.model_spec(variant, pipeline.ExperimentConfig(variants=(variant,)), shapes)
    return models.build_model(spec), shapes


# -- 1. architecture reconstruction ------------------------------------------

@pytest.mark.parametrize("name,variant,n_rois,target", [
    ("STO(AAL)", "sto", 116, 17.757e6),
    ("STO(CC200)", "sto", 200, 24.531e6),
    ("STO-DiagNet(AAL)", "sto_diagnet", 116, 17.759e6),
    ("STVOmics branch", "stv", 116, 14.34e6),
])
def test_c1_parameter_counts(criterion, name, variant, n_rois, target):
    model, _ = _params(variant, n_rois)
    n = model.n_params()
    if variant == "stv":
        n = model.stv.n_params()
    ok = within(n, target, 0.02)
    criterion(f"1 params {name}", ok, f"{n:,} vs {target / 1e6:.3f}M ({(n - target) / target:+.2%}, tol 2%)")
    assert ok


# -- 2. FLOPs ------------------------------------------------------------------

def test_c2_flops(criterion):
    model, shapes = _params("sto", 116)
    assert shapes == {"voxel": (4, 32, 32, 32), "fc": (6670,)}
    stats = models.model_stats(model, shapes)
    ok = within(stats["gflops"], 12.3345, 0.30)
    criterion("2 FLOPs STO(AAL)", ok, f"{stats['gflops']:.3f} GFLOPs vs 12.3345 (tol 30%); "
                                     f"convention: {stats['flop_convention']}")
    assert ok and stats["flop_convention"]


# -- 3a. derivative oracles ----------------------------------------------------

def test_c3a_derivative_oracles(criterion):
    t0 = time.perf_counter()
    v, m = small_volume(11), small_mask(11)
    assert v.data.shape == (6, 6, 6, 20)
    spec = D.DerivativeSpec()
    reho = np.max(np.abs(D.reho(v, m, spec).channel(0) - oracles.reho(v.data, m.data, 27)))
    dc = np.array_equal(D.degree_centrality(v, m, spec).channel(0), oracles.degree(v.data, m.data, 0.25))
    lfcd = np.array_equal(D.lfcd(v, m, spec).channel(0), oracles.lfcd(v.data, m.data, 0.25))
    vmhc = np.max(np.abs(D.vmhc(v, m).channel(0) - oracles.vmhc(v.data, m.data)))
    elapsed = time.perf_counter() - t0
    ok = reho <= 1e-10 and vmhc <= 1e-10 and dc and lfcd and elapsed < 10
    criterion("3a derivative oracles", ok, f"ReHo max err {reho:.1e}, VMHC {vmhc:.1e}, DC exact={dc}, "
                                            f"LFCD exact={lfcd}, {elapsed:.2f}s (< 10s)")
    assert ok


# -- 3b. gradient suite --------------------------------------------------------

def _leaf(shape, seed):
    return Tensor(np.random.default_rng(seed).standard_normal(shape), requires_grad=True)


def _loss(out, seed=99):
    return T.mse(out, Tensor(np.random.default_rng(seed).standard_normal(out.shape)))


def _layer_cases():
    r = np.random.default_rng(0)
    dense = L.Dense(5, 3, r)
    conv = L.Conv3d(2, 3, 3, r, stride=2, padding=1, bias=True)
    bn = L.BatchNorm3d(3)
    block = L.BasicResBlock(2, 3, 2, r)
    x2, x5, xb, xr = _leaf((4, 5), 1), _leaf((2, 2, 5, 5, 4), 2), _leaf((3, 3, 2, 3, 2), 3), _leaf((2, 2, 4, 4, 4), 4)
    xe, ye = _leaf((2, 3, 2, 2, 2), 5), _leaf((2, 3, 2, 2, 2), 6)
    xe.data[np.abs(xe.data) < 1e-3] = 0.5
    p = Tensor(np.random.default_rng(7).uniform(0.05, 0.95, 6), requires_grad=True)
    y = np.array([0, 1, 1, 0, 1, 0])
    return {
        "Dense": (lambda: _loss(dense(x2)), [x2] + dense.parameters()),
        "Conv3d": (lambda: _loss(conv(x5)), [x5] + conv.parameters()),
        "BatchNorm3d": (lambda: _loss(bn(xb)), [xb] + bn.parameters()),
        "BasicResBlock": (lambda: _loss(block(xr)), [xr] + block.parameters()),
        "ReLU": (lambda: _loss(T.relu(xe)), [xe]),
        "Sigmoid": (lambda: _loss(T.sigmoid(xe)), [xe]),
        "GlobalAvgPool3d": (lambda: _loss(T.global_avg_pool3d(xe)), [xe]),
        "concat": (lambda: _loss(T.concat([T.reshape(xe, (2, 24)), T.reshape(ye, (2, 24))], axis=1)), [xe, ye]),
        "BCE": (lambda: T.binary_cross_entropy(p, y), [p]),
        "MSE": (lambda: T.mse(xe, ye), [xe, ye]),
    }


def test_c3b_gradient_suite(criterion):
    t0 = time.perf_counter()
    errs = {name: grad_check(fn, params, n_coords=150) for name, (fn, params) in _layer_cases().items()}
    cfg = models.StoConfig(
        variant="diagnet",
        stv=models.StvOmicsConfig(in_channels=2, stem_channels=2, stage_channels=(3, 4), stage_strides=(2, 2),
                                  embed_dim=3),
        str=models.StrOmicsConfig(input_dim=6, embed_dim=3),
    )
    net = models.build_sto(cfg, seed=1).eval()
    inputs = {"voxel": _leaf((3, 2, 6, 6, 6), 2), "fc": _leaf((3, 6), 3)}
    y = np.array([0, 1, 1])

    def sto_loss():
        prob, aux = net(inputs)
        return T.weighted_sum([(1.0, T.binary_cross_entropy(prob, y)), aux])

    sto_err = grad_check(sto_loss, [inputs["voxel"]] + net.parameters(), n_coords=300)
    elapsed = time.perf_counter() - t0
    worst = max(errs, key=errs.get)
    ok = all(e < 1e-4 for e in errs.values()) and sto_err < 1e-3 and elapsed < 60
    criterion("3b gradient suite", ok, f"worst layer {worst} {errs[worst]:.1e} (< 1e-4), "
                                        f"miniature STO {sto_err:.1e} (< 1e-3), {elapsed:.1f}s (< 60s)")
    assert ok


# -- 3c. AUC oracle ------------------------------------------------------------

def test_c3c_auc_oracle(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(31)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(4, 80))
        labels = rng.permutation(np.r_[0, 1, rng.integers(0, 2, n - 2)])
        # every third instance draws from a coarse grid to exercise ties
        scores = rng.integers(0, 5, n) / 4 if i % 3 == 0 else rng.standard_normal(n)
        worst = max(worst, abs(pipeline.auc(scores, labels) - oracles.auc_pairs(scores, labels)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5
    criterion("3c AUC oracle", ok, f"100 instances, max |diff| {worst:.1e} (<= 1e-12), {elapsed:.2f}s (< 5s)")
    assert ok


# -- 3d/3e. learning on synthetic cohorts --------------------------------------

DESK_TRAINING = dict(proportions=(1.0,), lr=1e-3, max_epochs=30, network=dict(pipeline.DESK_NETWORK), augment=None)


def _cohort_dataset(n_per_class, extents, effect, seed):
    co = synth.generate_cohort(synth.SynthConfig(n_subjects_per_class=n_per_class, extents=extents, T=120,
                                                 effect_size=effect, seed=seed))
    prep = pipeline.PrepConfig(input_grid=(12, 12, 12))
    return pipeline.prepare_dataset(co.volume, co.labels, co.mask, co.atlas, prep, co.subject_ids())


def _means(report):
    return {row["variant"]: row["auc_mean"] for row in report.summary}


@pytest.mark.slow
def test_c3d_synthetic_learning(criterion):
    t0 = time.perf_counter()
    ds = _cohort_dataset(40, (24, 24, 24), 1.5, seed=1)
    ablations = tuple(pipeline.ABLATIONS)
    cfg = pipeline.ExperimentConfig(variants=("fc_mlp", "sto") + ablations, **DESK_TRAINING)
    means = _means(pipeline.run_experiment(ds, cfg))
    elapsed = time.perf_counter() - t0
    best_ablation = max(means[a] for a in ablations)
    checks = {
        "FC-MLP >= 0.80": means["fc_mlp"] >= 0.80,
        "STO >= 0.85": means["sto"] >= 0.85,
        "STO >= max ablation - 0.02": means["sto"] >= best_ablation - 0.02,
        "runtime < 600s": elapsed < 600,
    }
    detail = ", ".join(f"{k} {v:.3f}" for k, v in means.items())
    failed = [k for k, v in checks.items() if not v]
    criterion("3d synthetic learning", not failed, f"{detail}; {elapsed:.0f}s" + (f"; failed {failed}" if failed else ""))
    assert not failed


@pytest.mark.slow
def test_c3e_no_signal_control(criterion):
    ds = _cohort_dataset(100, (16, 16, 16), 0.0, seed=2)
    cfg = pipeline.ExperimentConfig(variants=("fc_mlp", "diagnet", "str", "stv", "sto"), **DESK_TRAINING)
    means = _means(pipeline.run_experiment(ds, cfg))
    ok = all(0.40 <= m <= 0.60 for m in means.values())
    criterion("3e no-signal control", ok, ", ".join(f"{k} {v:.3f}" for k, v in means.items()) + " (all in [0.40, 0.60])")
    assert ok


# -- 3f. leakage audit ---------------------------------------------------------

def _digest(fold_result, train_result):
    h = hashlib.sha256()
    h.update(repr((fold_result.mask, fold_result.best_epoch, fold_result.val_auc, fold_result.train_ids,
                   fold_result.val_ids)).encode())
    h.update(train_result.checkpoint)
    return h.hexdigest()


def test_c3f_leakage_audit(criterion):
    base = _cohort_dataset(8, (12, 12, 12), 1.0, seed=5)
    cfg = pipeline.ExperimentConfig(variants=("sto_diagnet",), proportions=(1.0,), lr=1e-3, max_epochs=4, eval_every=2,
                                    augment=None, network={"stem_channels": 2, "stage_channels": (2,),
                                                           "stage_strides": (2,), "embed_dim": 2})
    train, test = pipeline.stratified_kfold(base.labels, 5, 0)[0]
    outcomes = {}
    for variant in ("diagnet", "sto_diagnet"):
        clean = pipeline.Dataset({k: base._arrays[k].copy() for k in base.keys}, base.labels, base.subject_ids)
        fr, tr = pipeline.run_fold(clean, variant, 1.0, 0, train, test, cfg)
        leaked = {i for purpose, idx in clean.access_log if purpose != "test" for i in idx} & set(test.tolist())
        poisoned = pipeline.Dataset({k: base._arrays[k].copy() for k in base.keys}, base.labels, base.subject_ids)
        noise = np.random.default_rng(3)
        for k in poisoned.keys:
            poisoned._arrays[k][test] = 1e3 * noise.standard_normal(poisoned._arrays[k][test].shape)
        pr, pt = pipeline.run_fold(poisoned, variant, 1.0, 0, train, test, cfg)
        outcomes[variant] = (not leaked, _digest(fr, tr) == _digest(pr, pt))
    clean.seal(test)
    try:
        clean.take(test[:1], ["fc"], "train")
        guarded = False
    except pipeline.LeakageError:
        guarded = True
    ok = guarded and all(a and b for a, b in outcomes.values())
    detail = "; ".join(f"{v}: no test reads={a}, fold hash unchanged under test poisoning={b}"
                       for v, (a, b) in outcomes.items())
    criterion("3f leakage audit", ok, f"{detail}; sealed read raises={guarded}")
    assert ok


# -- 3g. determinism -----------------------------------------------------------

def _tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.mark.slow
def test_c3g_reproduce_quick_is_byte_identical(criterion, tmp_path):
    digests = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli.main(["reproduce", "--quick", "--seed", "11", "--out", str(out)]) == 0
        digests.append(_tree_digest(out))
    n_files = sum(1 for p in (tmp_path / "a").rglob("*") if p.is_file())
    ok = digests[0] == digests[1]
    criterion("3g determinism", ok, f"two reproduce --quick runs, {n_files} files, sha256 equal={ok}")
    assert ok


# -- 4. NIfTI round-trip and fuzz ----------------------------------------------

DTYPES = ["uint8", "int16", "int32", "float32", "float64"]


def _random_volume(rng, dtype):
    shape = tuple(int(s) for s in rng.integers(1, 6, size=3)) + (int(rng.integers(2, 6)),)
    if np.dtype(dtype).kind == "f":
        data = rng.standard_normal(shape).astype(dtype).astype(np.float64)
    else:
        info = np.iinfo(dtype)
        data = rng.integers(info.min, info.max, size=shape, endpoint=True).astype(np.float64)
    return nifti.Volume4D(data, spacing_mm=tuple(rng.uniform(0.5, 4, 3).astype(np.float32)),
                          tr_seconds=float(np.float32(rng.uniform(0.5, 3))))


def test_c4_nifti_round_trip_and_fuzz(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    exact = 0
    for i in range(1000):
        dtype = DTYPES[i % len(DTYPES)]
        v = _random_volume(rng, dtype)
        raw = nifti.write_nifti(v, dtype=dtype, endian="<>"[i % 2])
        if i % 5 == 0:
            raw = gzip.compress(raw, mtime=0)
        _, back = nifti.parse_nifti(raw)
        exact += back.data.tobytes() == v.data.tobytes() and back.data.shape == v.data.shape
    typed, crashed, accepted = 0, 0, 0
    for i in range(1000):
        raw = bytearray(nifti.write_nifti(_random_volume(rng, DTYPES[i % 5]), dtype=DTYPES[i % 5]))
        if i % 4 == 0:
            raw = bytearray(gzip.compress(bytes(raw), mtime=0))
        mode = i % 3
        if mode == 0:
            raw = raw[: int(rng.integers(0, len(raw)))]
        elif mode == 1:
            for _ in range(int(rng.integers(1, 8))):
                raw[int(rng.integers(0, min(len(raw), 400)))] = int(rng.integers(0, 256))
        else:
            pos = int(rng.integers(0, len(raw)))
            raw[pos:pos + 4] = rng.bytes(4)
        try:
            nifti.parse_nifti(bytes(raw))
            accepted += 1
        except StoError:
            typed += 1
        except Exception:  # noqa: BLE001 - counting crashes is the point
            crashed += 1
    elapsed = time.perf_counter() - t0
    ok = exact == 1000 and crashed == 0 and elapsed < 30
    criterion("4 NIfTI round-trip/fuzz", ok, f"{exact}/1000 bit-exact; fuzz: {typed} typed errors, "
                                              f"{accepted} still valid, {crashed} crashes; {elapsed:.1f}s (< 30s)")
    assert ok


# -- 5. stratified folds on the full cohort shape ------------------------------

def test_c5_stratified_folds(criterion):
    labels = np.r_[np.ones(403, int), np.zeros(468, int)]
    labels = labels[np.random.default_rng(5).permutation(labels.size)]
    worst = 0.0
    covered = np.zeros(labels.size, int)
    for train, test in pipeline.stratified_kfold(labels, 5, seed=0):
        covered[test] += 1
        for cls in (0, 1):
            expected = test.size * np.mean(labels == cls)
            worst = max(worst, abs(np.sum(labels[test] == cls) - expected))
    ok = worst <= 1 and np.all(covered == 1)
    criterion("5 stratified 5-fold 403/468", ok, f"max per-fold deviation {worst:.2f} samples (<= 1), partition={np.all(covered == 1)}")
    assert ok
