"""Cross-validation, training, evaluation and the variant x proportion experiment grid.

Seeds: every random stream is ``numpy.random.default_rng(derive_seed(seed, *tokens))``
where ``derive_seed`` feeds ``[seed, crc32(token) ...]`` to ``SeedSequence``.
Tokens name the stage (``"folds"``, ``"subsample"``, ``"init"`` ...) plus the
fold, proportion and variant, so every stage is reproducible in isolation.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import connectome, models, preprocess
from .derivatives import CHANNELS, DerivativeSpec, derivative_stack
from .errors import (
    ClassTooSmall, DataError, DivergedLoss, InvalidConfig, SingleClass,
)
from .nifti import Volume3D
from .nn import checkpoint
from .nn import tensor as T
from .nn.optim import Adam
from .nn.tensor import Tensor

log = logging.getLogger(__name__)


def derive_seed(seed, *tokens):
    keys = [int(seed)] + [zlib.crc32(str(t).encode()) for t in tokens]
    return np.random.SeedSequence(keys)


def rng_for(seed, *tokens):
    return np.random.default_rng(derive_seed(seed, *tokens))


def sub_seed(seed, *tokens) -> int:
    return int(derive_seed(seed, *tokens).generate_state(1)[0])


# ---------------------------------------------------------------------------
# metrics and splits
# ---------------------------------------------------------------------------

def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    pos, neg = scores[labels == 1], scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise SingleClass("AUC needs both classes")
    order = np.sort(neg)
    below = np.searchsorted(order, pos, side="left")
    ties = np.searchsorted(order, pos, side="right") - below
    return float((below.sum() + 0.5 * ties.sum()) / (pos.size * neg.size))


def stratified_kfold(labels, k=5, seed=0):
    """Per-class shuffle then round-robin assignment to ``k`` folds.

    Returns ``k`` pairs ``(train_indices, test_indices)``, both sorted.
    """
    labels = np.asarray(labels).astype(int)
    if k < 2:
        raise InvalidConfig("k must be >= 2")
    folds = [[] for _ in range(k)]
    rng = rng_for(seed, "folds")
    offset = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < k:
            raise ClassTooSmall(f"class {cls} has {members.size} members, fewer than k={k}")
        members = members[rng.permutation(members.size)]
        for i, idx in enumerate(members):
            folds[(i + offset) % k].append(int(idx))
        # keep fold sizes balanced across classes
        offset = (offset + members.size) % k
    everything = np.arange(labels.size)
    out = []
    for f in folds:
        test = np.sort(np.array(f, dtype=np.int64))
        out.append((np.setdiff1d(everything, test), test))
    return out


def subsample_train(train_idx, labels, proportion, seed=0):
    """Keep ``round(n_c * proportion)`` members of each class (at least one)."""
    if not 0 < proportion <= 1:
        raise InvalidConfig("proportion must lie in (0, 1]")
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if proportion == 1.0:
        return train_idx.copy()
    labels = np.asarray(labels).astype(int)
    rng = rng_for(seed, "subsample", proportion)
    keep = []
    for cls in np.unique(labels[train_idx]):
        members = train_idx[labels[train_idx] == cls]
        n = max(1, int(round(members.size * proportion)))
        keep.append(np.sort(rng.choice(members, size=n, replace=False)))
    return np.sort(np.concatenate(keep))


def split_validation(train_idx, labels, fraction=0.2, seed=0):
    """Stratified carve of ``fraction`` of the training indices into a validation set."""
    labels = np.asarray(labels).astype(int)
    rng = rng_for(seed, "validation")
    fit, val = [], []
    for cls in np.unique(labels[train_idx]):
        members = train_idx[labels[train_idx] == cls]
        members = members[rng.permutation(members.size)]
        n_val = int(round(members.size * fraction))
        n_val = min(max(n_val, 1), members.size - 1) if members.size > 1 else 0
        val.extend(members[:n_val])
        fit.extend(members[n_val:])
    return np.sort(np.array(fit, dtype=np.int64)), np.sort(np.array(val, dtype=np.int64))


# ---------------------------------------------------------------------------
# dataset with a leakage audit
# ---------------------------------------------------------------------------

class LeakageError(DataError):
    pass


class Dataset:
    """Per-subject arrays (``voxel``, ``fc``, ``ts``) with guarded access.

    :meth:`seal` fingerprints a set of subjects (the test fold) and blocks any
    read of them until :meth:`unseal` confirms the fingerprint is unchanged.
    Every read is logged as ``(purpose, indices)``.
    """

    def __init__(self, arrays: dict, labels, subject_ids=None):
        self._arrays = {k: np.asarray(v) for k, v in arrays.items()}
        self.labels = np.asarray(labels).astype(int)
        n = self.labels.size
        for k, v in self._arrays.items():
            if v.shape[0] != n:
                raise DataError(f"array {k!r} has {v.shape[0]} rows for {n} subjects")
        self.subject_ids = list(subject_ids) if subject_ids is not None else [f"sub-{i:04d}" for i in range(n)]
        self.access_log = []
        self._sealed = None
        self._fingerprint = None

    def __len__(self):
        return self.labels.size

    @property
    def keys(self):
        return tuple(self._arrays)

    def shape(self, key):
        return self._arrays[key].shape[1:]

    def fingerprint(self, indices):
        h = hashlib.sha256()
        for k in sorted(self._arrays):
            h.update(np.ascontiguousarray(self._arrays[k][indices]).tobytes())
        h.update(self.labels[indices].tobytes())
        return h.hexdigest()

    def seal(self, indices):
        self._sealed = set(int(i) for i in indices)
        self._fingerprint = self.fingerprint(np.asarray(sorted(self._sealed), dtype=np.int64))

    def unseal(self):
        if self._sealed is None:
            return
        idx = np.asarray(sorted(self._sealed), dtype=np.int64)
        if self.fingerprint(idx) != self._fingerprint:
            raise LeakageError("sealed subjects changed while sealed")
        self._sealed = None

    def take(self, indices, keys, purpose):
        indices = np.asarray(indices, dtype=np.int64)
        if self._sealed is not None and self._sealed.intersection(indices.tolist()):
            raise LeakageError(f"{purpose}: read of sealed (test) subjects before evaluation")
        self.access_log.append((purpose, tuple(int(i) for i in indices)))
        return {k: self._arrays[k][indices] for k in keys}, self.labels[indices]

    def save(self, path):
        np.savez(path, labels=self.labels, subject_ids=np.array(self.subject_ids), **self._arrays)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files if k not in ("labels", "subject_ids")}
            return cls(arrays, z["labels"], [str(s) for s in z["subject_ids"]])


# ---------------------------------------------------------------------------
# feature preparation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrepConfig:
    bandpass: tuple | None = (0.01, 10.0)
    derivatives: DerivativeSpec = field(default_factory=DerivativeSpec)
    input_grid: tuple = (32, 32, 32)
    fisher_z: bool = False
    ts_length: int | None = None


def prepare_subject(volume, mask, atlas, prep: PrepConfig, threads=1):
    """Derivative stack (channels first, resampled), FC features and ROI series for one subject."""
    if prep.bandpass is not None:
        spec = preprocess.BandpassSpec(prep.bandpass[0], prep.bandpass[1], volume.tr_seconds)
        volume = type(volume)(preprocess.bandpass(volume.data, spec), volume.spacing_mm, volume.tr_seconds)
    stack = derivative_stack(volume, mask, prep.derivatives, threads=threads)
    stack = preprocess.resample_to(stack, prep.input_grid)
    ts = connectome.roi_mean_timeseries(volume, atlas)
    fc = connectome.upper_triangle(connectome.fc_matrix(ts), fisher_z=prep.fisher_z)
    ts = preprocess.znormalize(ts.T)
    if prep.ts_length is not None:
        ts = ts[:, :prep.ts_length]
    return np.moveaxis(stack.data, -1, 0), fc, ts


def prepare_dataset(volumes, labels, mask, atlas, prep: PrepConfig, subject_ids=None, threads=1):
    """Build a :class:`Dataset` from an iterable (or lazy callable per index) of volumes."""
    labels = list(labels)
    getter = volumes if callable(volumes) else (lambda i, vs=list(volumes): vs[i])

    def one(i):
        return prepare_subject(getter(i), mask, atlas, prep)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(len(labels))))
    else:
        parts = [one(i) for i in range(len(labels))]
    t_min = min(p[2].shape[1] for p in parts)
    arrays = {
        "voxel": np.stack([p[0] for p in parts]),
        "fc": np.stack([p[1] for p in parts]),
        "ts": np.stack([p[2][:, :t_min] for p in parts]),
    }
    return Dataset(arrays, labels, subject_ids)


# ---------------------------------------------------------------------------
# variants
# ---------------------------------------------------------------------------

ABLATIONS = {f"stv_{c}": (c,) for c in CHANNELS}
VARIANTS = ("sto", "sto_diagnet", "stv", *ABLATIONS, "str", "fc_mlp", "diagnet", "conv1d")
TABLE1_VARIANTS = ("conv1d", "fc_mlp", "diagnet", "sto", "sto_diagnet")
TABLE2_VARIANTS = (*ABLATIONS, "stv")

PAPER_NETWORK = {"stem_channels": 64, "stage_channels": (128, 256, 512), "stage_strides": (2, 2, 2),
                 "embed_dim": 512}
DESK_NETWORK = {"stem_channels": 4, "stage_channels": (8, 16, 16), "stage_strides": (2, 2, 2),
                "embed_dim": 16}


@dataclass(frozen=True)
class ExperimentConfig:
    variants: tuple = TABLE1_VARIANTS
    atlas: str = "synth"
    folds: int = 5
    proportions: tuple = (1.0, 0.75, 0.5)
    batch_size: int = 8
    lr: float = 1e-5
    max_epochs: int = 100
    eval_every: int = 5
    patience: int = 10
    seed: int = 0
    augment: preprocess.AugmentSpec | None = field(default_factory=preprocess.AugmentSpec)
    val_fraction: float = 0.2
    select_on: str = "validation"
    network: dict = field(default_factory=lambda: dict(PAPER_NETWORK))
    fc_hidden: int = 16
    diagnet_hidden: int | None = None
    conv1d_filters: int = 32
    recon_weight: float = 1.0
    normalize_fc: bool = True
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "proportions", tuple(float(p) for p in self.proportions))
        if isinstance(self.augment, dict):
            object.__setattr__(self, "augment", preprocess.AugmentSpec(**{
                k: tuple(v) if isinstance(v, list) else v for k, v in self.augment.items()}))
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise InvalidConfig(f"unknown variants {unknown}; choose from {VARIANTS}")
        if self.folds < 2 or self.batch_size < 1 or self.max_epochs < 1 or self.eval_every < 1:
            raise InvalidConfig("folds >= 2, batch_size >= 1, max_epochs >= 1, eval_every >= 1 required")
        if any(not 0 < p <= 1 for p in self.proportions):
            raise InvalidConfig("proportions must lie in (0, 1]")
        if self.select_on not in ("validation", "test"):
            raise InvalidConfig("select_on must be 'validation' or 'test'")
        if not 0 < self.val_fraction < 1:
            raise InvalidConfig("val_fraction must lie in (0, 1)")

    def to_dict(self):
        d = asdict(self)
        return json.loads(json.dumps(d, default=list))


def model_spec(variant, cfg: ExperimentConfig, shapes):
    """JSON-able model description for ``build_model``.

    ``shapes`` are the per-subject shapes the model actually sees, so the
    connectome width is already quartile-masked for DiagNet variants.
    """
    net = dict(cfg.network)
    n_ch = shapes["voxel"][0] if "voxel" in shapes else len(CHANNELS)
    d = shapes["fc"][0] if "fc" in shapes else None
    embed = net["embed_dim"]
    if variant in ("sto", "sto_diagnet"):
        diag = variant == "sto_diagnet"
        return {"kind": "sto", "variant": "diagnet" if diag else "vanilla",
                "stv": dict(net, in_channels=n_ch),
                "str": {"input_dim": d, "embed_dim": embed},
                "recon_weight": cfg.recon_weight}
    if variant == "stv":
        return dict(net, kind="stv", in_channels=n_ch)
    if variant in ABLATIONS:
        return dict(net, kind="stv", in_channels=1)
    if variant == "str":
        return {"kind": "str", "input_dim": d, "embed_dim": embed}
    if variant == "fc_mlp":
        return {"kind": "fc_mlp", "input_dim": d, "hidden": cfg.fc_hidden}
    if variant == "diagnet":
        return {"kind": "diagnet", "input_dim": d, "hidden": cfg.diagnet_hidden,
                "recon_weight": cfg.recon_weight}
    if variant == "conv1d":
        return {"kind": "conv1d", "n_rois": shapes["ts"][0], "filters": cfg.conv1d_filters}
    raise InvalidConfig(f"unknown variant {variant}")


def uses_mask(variant):
    return variant in ("sto_diagnet", "diagnet")


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class FeatureTransform:
    """Fold-fitted transforms: DiagNet quartile mask, FC z-scoring, channel selection."""

    channels: tuple | None = None
    mask: connectome.QuartileMask | None = None
    fc_mean: np.ndarray | None = None
    fc_std: np.ndarray | None = None

    def __call__(self, batch):
        out = dict(batch)
        if "voxel" in out and self.channels is not None:
            out["voxel"] = out["voxel"][:, list(self.channels)]
        if "fc" in out:
            fc = out["fc"]
            if self.mask is not None:
                fc = connectome.apply_mask(fc, self.mask)
            if self.fc_mean is not None:
                fc = (fc - self.fc_mean) / self.fc_std
            out["fc"] = fc
        return out

    def to_dict(self):
        return {
            "channels": None if self.channels is None else list(self.channels),
            "mask": None if self.mask is None else json.loads(self.mask.to_json()),
            "fc_mean": None if self.fc_mean is None else [float(x) for x in self.fc_mean],
            "fc_std": None if self.fc_std is None else [float(x) for x in self.fc_std],
        }

    @classmethod
    def from_dict(cls, d):
        def arr(v):
            return None if v is None else np.asarray(v, dtype=np.float64)

        return cls(
            channels=None if d.get("channels") is None else tuple(d["channels"]),
            mask=None if d.get("mask") is None else connectome.QuartileMask.from_json(json.dumps(d["mask"])),
            fc_mean=arr(d.get("fc_mean")), fc_std=arr(d.get("fc_std")),
        )


def fit_transform(dataset: Dataset, fit_idx, variant, cfg: ExperimentConfig, fold=None):
    tf = FeatureTransform()
    if variant in ABLATIONS:
        tf.channels = (CHANNELS.index(ABLATIONS[variant][0]),)
    if "fc" in dataset.keys and variant in ("sto", "sto_diagnet", "str", "fc_mlp", "diagnet"):
        feats, _ = dataset.take(fit_idx, ["fc"], purpose="fit-transform")
        fc = feats["fc"]
        if uses_mask(variant):
            tf.mask = connectome.diagnet_mask(list(fc), fold=fold)
            fc = connectome.apply_mask(fc, tf.mask)
        if cfg.normalize_fc:
            tf.fc_mean = fc.mean(axis=0)
            std = fc.std(axis=0)
            tf.fc_std = np.where(std < 1e-12, 1.0, std)
    return tf


def _to_tensors(batch):
    return {k: Tensor(v) for k, v in batch.items()}


def predict(model, dataset: Dataset, indices, keys, transform, purpose, batch_size=32):
    model.eval()
    scores = []
    for start in range(0, len(indices), batch_size):
        chunk = indices[start:start + batch_size]
        batch, _ = dataset.take(chunk, keys, purpose)
        prob, _ = model(_to_tensors(transform(batch)))
        scores.append(prob.data.copy())
    return np.concatenate(scores) if scores else np.zeros(0)


def _augment_batch(voxel, spec, rng):
    out = np.empty_like(voxel)
    for i in range(voxel.shape[0]):
        vol = Volume3D(np.moveaxis(voxel[i], 0, -1))
        out[i] = np.moveaxis(preprocess.augment(vol, spec, rng).data, -1, 0)
    return out


@dataclass
class TrainResult:
    checkpoint: bytes
    best_epoch: int
    best_score: float
    trace: list          # dicts: epoch, loss, val_auc (None when not evaluated)
    model: object = field(repr=False, default=None)
    transform: FeatureTransform | None = field(repr=False, default=None)
    spec: dict | None = None


def train(model, dataset: Dataset, fit_idx, val_idx, cfg: ExperimentConfig, transform=None,
          rng=None, keys=None):
    """Mini-batch Adam with periodic validation AUC and best-checkpoint selection.

    The returned model holds the best parameters (earliest epoch on ties).
    Training stops early once ``patience`` consecutive evaluations fail to
    improve.
    """
    if len(fit_idx) == 0 or len(val_idx) == 0:
        raise DataError("training and validation splits must be non-empty")
    transform = transform or FeatureTransform()
    rng = rng if rng is not None else np.random.default_rng(0)
    keys = list(keys or model.inputs)
    optimizer = Adam(model.parameters(), lr=cfg.lr)
    fit_idx = np.asarray(fit_idx, dtype=np.int64)
    val_idx = np.asarray(val_idx, dtype=np.int64)

    best = (-np.inf, 0, checkpoint.dumps(model))
    trace, stale = [], 0
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = fit_idx[rng.permutation(fit_idx.size)]
        total = 0.0
        for start in range(0, order.size, cfg.batch_size):
            chunk = order[start:start + cfg.batch_size]
            batch, y = dataset.take(chunk, keys, purpose="train")
            batch = transform(batch)
            if cfg.augment is not None and "voxel" in batch:
                batch["voxel"] = _augment_batch(batch["voxel"], cfg.augment, rng)
            optimizer.zero_grad()
            prob, aux = model(_to_tensors(batch))
            loss = T.binary_cross_entropy(prob, y)
            if aux is not None:
                loss = T.weighted_sum([(1.0, loss), aux])
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergedLoss(f"non-finite loss {value} at epoch {epoch}, batch starting {start}")
            loss.backward()
            optimizer.step()
            total += value * chunk.size
        record = {"epoch": epoch, "loss": total / order.size, "val_auc": None}
        if epoch % cfg.eval_every == 0 or epoch == cfg.max_epochs:
            scores = predict(model, dataset, val_idx, keys, transform, purpose="validation")
            score = auc(scores, dataset.labels[val_idx])
            record["val_auc"] = score
            if score > best[0]:
                best, stale = (score, epoch, checkpoint.dumps(model)), 0
            else:
                stale += 1
        trace.append(record)
        if stale >= cfg.patience:
            break
    checkpoint.load_into(model, best[2])
    model.eval()
    return TrainResult(best[2], best[1], float(best[0]), trace, model)


# ---------------------------------------------------------------------------
# experiment grid
# ---------------------------------------------------------------------------

@dataclass
class FoldResult:
    variant: str
    proportion: float
    fold: int
    auc: float
    best_epoch: int
    val_auc: float
    train_ids: list
    val_ids: list
    test_ids: list
    trace: list = field(repr=False, default_factory=list)
    mask: dict | None = None

    def to_dict(self):
        return asdict(self)


def _stats_shapes(dataset, variant):
    shapes = {k: tuple(int(s) for s in dataset.shape(k)) for k in dataset.keys}
    if variant in ABLATIONS:
        shapes["voxel"] = (1,) + shapes["voxel"][1:]
    if "fc" in shapes and uses_mask(variant):
        shapes["fc"] = (models.quartile_dim(shapes["fc"][0]),)
    return shapes


def run_fold(dataset: Dataset, variant, proportion, fold, train_idx, test_idx, cfg: ExperimentConfig):
    """Train one variant on one fold and score its held-out test subjects."""
    labels = dataset.labels
    reduced = subsample_train(train_idx, labels, proportion, seed=sub_seed(cfg.seed, fold))
    fit_idx, val_idx = split_validation(reduced, labels, cfg.val_fraction,
                                        seed=sub_seed(cfg.seed, fold, proportion))
    if cfg.select_on == "test":
        fit_idx, val_idx = reduced, np.asarray(test_idx)

    if cfg.select_on == "validation":
        dataset.seal(test_idx)
    try:
        transform = fit_transform(dataset, fit_idx, variant, cfg, fold=fold)
        spec = model_spec(variant, cfg, _stats_shapes(dataset, variant))
        model = models.build_model(spec, seed=sub_seed(cfg.seed, "init", variant, fold, proportion))
        keys = [k for k in model.inputs]
        rng = rng_for(cfg.seed, "train", variant, fold, proportion)
        result = train(model, dataset, fit_idx, val_idx, cfg, transform, rng, keys)
        result.transform, result.spec = transform, spec
    finally:
        dataset.unseal()
    scores = predict(result.model, dataset, np.asarray(test_idx), keys, transform, purpose="test")
    ids = dataset.subject_ids
    return FoldResult(
        variant=variant, proportion=proportion, fold=fold,
        auc=auc(scores, labels[test_idx]), best_epoch=result.best_epoch, val_auc=result.best_score,
        train_ids=[ids[i] for i in fit_idx], val_ids=[ids[i] for i in val_idx],
        test_ids=[ids[i] for i in test_idx], trace=result.trace,
        mask=json.loads(transform.mask.to_json()) if transform.mask is not None else None,
    ), result


@dataclass
class Report:
    config: dict
    folds: list
    summary: list

    def to_json(self):
        return json.dumps({"config": self.config, "summary": self.summary,
                           "folds": [f.to_dict() for f in self.folds]}, indent=1, sort_keys=True)

    def summary_csv(self, variants=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "proportion", "auc_mean", "auc_std", "params_m", "gflops", "memory_mb"])
        for row in self.summary:
            if variants is not None and row["variant"] not in variants:
                continue
            w.writerow([row["variant"], f"{row['proportion']:g}", f"{row['auc_mean']:.6f}",
                        f"{row['auc_std']:.6f}", f"{row['params'] / 1e6:.6f}", f"{row['gflops']:.6f}",
                        f"{row['memory_mb']:.4f}"])
        return buf.getvalue()

    def row(self, variant, proportion=1.0):
        for r in self.summary:
            if r["variant"] == variant and r["proportion"] == proportion:
                return r
        raise KeyError((variant, proportion))


def summarize(fold_results, stats):
    """Mean and population std (ddof=0) of the per-fold AUCs for each (variant, proportion)."""
    groups = {}
    for f in fold_results:
        groups.setdefault((f.variant, f.proportion), []).append(f.auc)
    rows = []
    for (variant, prop), aucs in groups.items():
        s = stats[variant]
        rows.append({"variant": variant, "proportion": prop, "auc_mean": float(np.mean(aucs)),
                     "auc_std": float(np.std(aucs)), "n_folds": len(aucs), "params": s["params"],
                     "gflops": s["gflops"], "memory_mb": s["memory_mb"]})
    return rows


def run_experiment(dataset: Dataset, cfg: ExperimentConfig, trace_dir=None) -> Report:
    folds = stratified_kfold(dataset.labels, cfg.folds, cfg.seed)
    jobs = [(v, p, i) for v in cfg.variants for p in cfg.proportions for i in range(cfg.folds)]

    def run(job):
        v, p, i = job
        # folds share one dataset; give each worker its own audit view
        view = Dataset(dataset._arrays, dataset.labels, dataset.subject_ids) if cfg.workers > 1 else dataset
        fr, _ = run_fold(view, v, p, i, folds[i][0], folds[i][1], cfg)
        log.info("%s p=%.2f fold=%d auc=%.3f best_epoch=%d", v, p, i, fr.auc, fr.best_epoch)
        return fr

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    stats = {}
    for v in cfg.variants:
        shapes = _stats_shapes(dataset, v)
        spec = model_spec(v, cfg, shapes)
        stats[v] = {k: val for k, val in models.model_stats(models.build_model(spec), shapes).items()
                    if k != "layers"}
    if trace_dir is not None:
        write_traces(results, trace_dir)
    return Report(cfg.to_dict(), results, summarize(results, stats))


def write_traces(results, trace_dir):
    trace_dir = Path(trace_dir)
    trace_dir.mkdir(parents=True, exist_ok=True)
    for f in results:
        path = trace_dir / f"trace_{f.variant}_p{f.proportion:g}_fold{f.fold}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss", "val_auc"])
            for r in f.trace:
                w.writerow([r["epoch"], repr(r["loss"]), "" if r["val_auc"] is None else repr(r["val_auc"])])
