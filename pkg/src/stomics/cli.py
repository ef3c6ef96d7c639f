"""``stomics`` command line: synth, derive, parcellate, features, train, evaluate, stats, reproduce.

A JSON ``--config`` file may hold the sections ``synth``, ``derivatives``,
``prep`` and ``experiment``; unknown sections or keys are rejected. Command
line flags override file values. Errors print one line,
``error: <category>: <message>``, and exit with 2 (config), 3 (io),
4 (data) or 5 (numerical).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import connectome, models, pipeline, preprocess, synth
from .derivatives import CHANNELS, DerivativeSpec, derivative_stack
from .errors import EXIT_CODES, ConfigError, DataError, StoError
from .nifti import MaskVolume, Volume3D, Volume4D, load_nifti, save_nifti
from .nn import checkpoint

log = logging.getLogger("stomics")

QUICK_SYNTH = {"n_subjects_per_class": 10, "extents": [16, 16, 16], "T": 80}
QUICK_EXPERIMENT = {"proportions": [1.0, 0.5], "max_epochs": 10, "eval_every": 5}
DESK_EXPERIMENT = {"lr": 1e-3, "max_epochs": 60, "network": dict(pipeline.DESK_NETWORK)}
DESK_PREP = {"input_grid": [12, 12, 12]}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

SECTIONS = {
    "synth": synth.SynthConfig,
    "derivatives": DerivativeSpec,
    "prep": pipeline.PrepConfig,
    "experiment": pipeline.ExperimentConfig,
}


def _field_names(cls):
    return {f.name for f in dataclasses.fields(cls)}


def load_config(path):
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for section, body in raw.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}; expected one of {sorted(SECTIONS)}")
        if not isinstance(body, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        unknown = set(body) - _field_names(SECTIONS[section])
        if section == "prep":
            unknown.discard("derivatives")
        if unknown:
            raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    return raw


def _merge(*layers):
    out = {}
    for layer in layers:
        out.update({k: v for k, v in (layer or {}).items() if v is not None})
    return out


def _build(cls, values):
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def synth_config(cfg, args, base=None):
    flags = {
        "seed": getattr(args, "seed", None),
        "n_subjects_per_class": getattr(args, "n_per_class", None),
        "extents": getattr(args, "extents", None),
        "T": getattr(args, "timepoints", None),
        "tr_seconds": getattr(args, "tr", None),
        "n_blocks": getattr(args, "n_blocks", None),
        "ar_coefficient": getattr(args, "ar", None),
        "effect_size": getattr(args, "effect_size", None),
    }
    return _build(synth.SynthConfig, _merge(base, cfg.get("synth"), flags))


def derivative_spec(cfg, args):
    flags = {
        "reho_neighborhood": getattr(args, "neighborhood", None),
        "correlation_threshold": getattr(args, "threshold", None),
        "dc_weighted": True if getattr(args, "weighted", False) else None,
        "channels": getattr(args, "channels", None),
    }
    values = _merge(cfg.get("derivatives"), flags)
    if "channels" in values:
        values["channels"] = tuple(values["channels"])
    return _build(DerivativeSpec, values)


def prep_config(cfg, args, base=None):
    values = _merge(base, cfg.get("prep"))
    values.pop("derivatives", None)
    if getattr(args, "grid", None):
        values["input_grid"] = args.grid
    if getattr(args, "no_bandpass", False):
        values["bandpass"] = None
    elif getattr(args, "bandpass", None):
        values["bandpass"] = args.bandpass
    if getattr(args, "fisher_z", False):
        values["fisher_z"] = True
    if getattr(args, "ts_length", None):
        values["ts_length"] = args.ts_length
    for key in ("input_grid", "bandpass"):
        if values.get(key) is not None:
            values[key] = tuple(values[key])
    values["derivatives"] = derivative_spec(cfg, args)
    return _build(pipeline.PrepConfig, values)


def experiment_config(cfg, args, base=None):
    flags = {
        "seed": getattr(args, "seed", None),
        "variants": getattr(args, "variants", None),
        "folds": getattr(args, "folds", None),
        "proportions": getattr(args, "proportions", None),
        "batch_size": getattr(args, "batch_size", None),
        "lr": getattr(args, "lr", None),
        "max_epochs": getattr(args, "max_epochs", None),
        "eval_every": getattr(args, "eval_every", None),
        "patience": getattr(args, "patience", None),
        "select_on": getattr(args, "select_on", None),
        "val_fraction": getattr(args, "val_fraction", None),
        "fc_hidden": getattr(args, "fc_hidden", None),
        "diagnet_hidden": getattr(args, "diagnet_hidden", None),
        "conv1d_filters": getattr(args, "conv1d_filters", None),
        "recon_weight": getattr(args, "recon_weight", None),
        "atlas": getattr(args, "atlas_name", None),
        "workers": getattr(args, "threads", None),
    }
    values = _merge(base, cfg.get("experiment"), flags)
    if getattr(args, "no_augment", False):
        values["augment"] = None
    if getattr(args, "no_normalize_fc", False):
        values["normalize_fc"] = False
    if getattr(args, "network", None) == "paper":
        values["network"] = dict(pipeline.PAPER_NETWORK)
    elif getattr(args, "network", None) == "desk":
        values["network"] = dict(pipeline.DESK_NETWORK)
    return _build(pipeline.ExperimentConfig, values)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _threads(args):
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("STO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"STO_THREADS must be an integer, got {env!r}") from None
    return 1


def read_labels(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"subject_id", "label"}:
        raise DataError(f"{path}: expected columns subject_id,label")
    try:
        return [r["subject_id"] for r in rows], [int(r["label"]) for r in rows]
    except ValueError:
        raise DataError(f"{path}: labels must be integers") from None


def _find_subject(cohort_dir, sid):
    for ext in (".nii.gz", ".nii", ".hdr"):
        p = cohort_dir / f"{sid}{ext}"
        if p.exists():
            return p
    raise FileNotFoundError(f"no image for {sid} in {cohort_dir}")


def _read_volume(path):
    return load_nifti(path)[1]


def _load_as(path, cls):
    vol = _read_volume(path)
    if cls is Volume4D and not isinstance(vol, Volume4D):
        raise DataError(f"{path}: expected a 4D image with at least 2 timepoints")
    if cls is MaskVolume:
        data = vol.data if isinstance(vol, Volume3D) else None
        if data is None or data.shape[-1] != 1:
            raise DataError(f"{path}: expected a single-channel 3D mask")
        return MaskVolume(data[..., 0] != 0)
    return vol


def _atlas_array(vol):
    if not isinstance(vol, Volume3D) or vol.data.shape[-1] != 1:
        raise DataError("atlas must be a single-channel 3D image")
    data = vol.data[..., 0]
    if not np.all(np.equal(np.mod(data, 1), 0)):
        raise DataError("atlas labels must be integers")
    return data.astype(np.int64)


def dataset_from_cohort(cohort_dir, prep, threads=1):
    cohort_dir = Path(cohort_dir)
    ids, labels = read_labels(cohort_dir / "labels.csv")
    atlas = _atlas_array(_read_volume(cohort_dir / "atlas.nii.gz"))
    mask = _load_as(cohort_dir / "mask.nii.gz", MaskVolume)
    paths = [_find_subject(cohort_dir, sid) for sid in ids]
    return pipeline.prepare_dataset(lambda i: _load_as(paths[i], Volume4D), labels, mask, atlas, prep,
                                    subject_ids=ids, threads=threads)


def _dataset(args, cfg):
    if args.dataset:
        return pipeline.Dataset.load(args.dataset)
    prep = prep_config(cfg, args, DESK_PREP)
    ds = dataset_from_cohort(args.cohort, prep, threads=_threads(args))
    if getattr(args, "save_dataset", None):
        ds.save(args.save_dataset)
    return ds


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _parse_extents(text):
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected N or X,Y,Z")
    return parts


def _csv_floats(text):
    return [float(p) for p in text.split(",")]


def _csv_strings(text):
    return [p for p in text.split(",") if p]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args, cfg):
    cohort = synth.generate_cohort(synth_config(cfg, args))
    synth.write_cohort(cohort, args.out, dtype=args.dtype)
    print(f"wrote {len(cohort)} subjects to {args.out}")


def cmd_derive(args, cfg):
    vol = _load_as(args.input, Volume4D)
    mask = _load_as(args.mask, MaskVolume)
    prep = prep_config(cfg, args)
    if prep.bandpass is not None:
        spec = preprocess.BandpassSpec(prep.bandpass[0], prep.bandpass[1], vol.tr_seconds)
        vol = Volume4D(preprocess.bandpass(vol.data, spec), vol.spacing_mm, vol.tr_seconds)
    stack = derivative_stack(vol, mask, prep.derivatives, threads=_threads(args))
    if args.grid:
        stack = preprocess.resample_to(stack, tuple(args.grid))
    save_nifti(stack, args.out, dtype="float32" if args.float32 else "float64")
    print(f"wrote {stack.data.shape[-1]}-channel stack {stack.data.shape[:3]} to {args.out}")


def cmd_parcellate(args, cfg):
    vol = _load_as(args.input, Volume4D)
    atlas = _atlas_array(_read_volume(args.atlas))
    ts = connectome.roi_mean_timeseries(vol, atlas)
    connectome.write_timeseries_csv(ts, args.out)
    print(f"wrote {ts.shape[0]}x{ts.shape[1]} time series to {args.out}")


def cmd_features(args, cfg):
    rows = []
    for path in args.timeseries:
        ts = connectome.read_timeseries_csv(path)
        rows.append((Path(path).name.split(".")[0],
                     connectome.upper_triangle(connectome.fc_matrix(ts), fisher_z=args.fisher_z)))
    widths = {r[1].size for r in rows}
    if len(widths) != 1:
        raise DataError(f"time-series files have different ROI counts (feature widths {sorted(widths)})")
    d = widths.pop()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id"] + [f"f{j}" for j in range(d)])
        for sid, feats in rows:
            w.writerow([sid] + [repr(float(x)) for x in feats])
    if args.diagnet_mask:
        mask = connectome.diagnet_mask([r[1] for r in rows])
        Path(args.diagnet_mask).write_text(mask.to_json() + "\n")
    print(f"wrote {len(rows)} x {d} features to {args.out}")


def cmd_train(args, cfg):
    ds = _dataset(args, cfg)
    exp = experiment_config(cfg, args, DESK_EXPERIMENT)
    if len(exp.variants) != 1:
        raise ConfigError("train takes exactly one --variant")
    variant = exp.variants[0]
    folds = pipeline.stratified_kfold(ds.labels, exp.folds, exp.seed)
    if not 0 <= args.fold < exp.folds:
        raise ConfigError(f"--fold must lie in [0, {exp.folds})")
    train_idx, test_idx = folds[args.fold]
    proportion = exp.proportions[0]
    result, trained = pipeline.run_fold(ds, variant, proportion, args.fold, train_idx, test_idx, exp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    transform = trained.transform
    extras = {
        "variant": variant,
        "model_spec": trained.spec,
        "fold": args.fold,
        "proportion": proportion,
        "best_epoch": result.best_epoch,
        "transform": transform.to_dict(),
        "test_ids": result.test_ids,
    }
    (out / "model.ckpt").write_bytes(checkpoint.dumps(trained.model, extras))
    pipeline.write_traces([result], out)
    _write_json(out / "fold.json", {k: v for k, v in result.to_dict().items() if k != "trace"})
    print(f"{variant} fold {args.fold}: best epoch {result.best_epoch}, test AUC {result.auc:.4f}")


def cmd_evaluate(args, cfg):
    raw = checkpoint.read(args.checkpoint)
    manifest, _ = checkpoint.loads_manifest(raw)
    for key in ("model_spec", "transform", "test_ids"):
        if key not in manifest:
            raise DataError(f"checkpoint lacks {key!r}; was it written by 'train'?")
    model = models.build_model(manifest["model_spec"])
    checkpoint.load_into(model, raw)
    ds = _dataset(args, cfg)
    wanted = args.subjects or manifest["test_ids"]
    lookup = {sid: i for i, sid in enumerate(ds.subject_ids)}
    missing = [s for s in wanted if s not in lookup]
    if missing:
        raise DataError(f"{len(missing)} subjects not in dataset, e.g. {missing[0]}")
    idx = np.array([lookup[s] for s in wanted], dtype=np.int64)
    transform = pipeline.FeatureTransform.from_dict(manifest["transform"])
    scores = pipeline.predict(model, ds, idx, list(model.inputs), transform, purpose="test")
    report = {"variant": manifest["variant"], "n": int(idx.size),
              "auc": pipeline.auc(scores, ds.labels[idx]),
              "scores": {s: float(p) for s, p in zip(wanted, scores)}}
    if args.out:
        _write_json(args.out, report)
    print(f"AUC {report['auc']:.4f} on {idx.size} subjects")


def cmd_stats(args, cfg):
    d = connectome.n_features(args.n_rois)
    shapes = {"voxel": (len(CHANNELS), *args.grid), "fc": (d,), "ts": (args.n_rois, args.timepoints)}
    exp = experiment_config(cfg, args)
    shapes["fc"] = (models.quartile_dim(d),) if pipeline.uses_mask(args.model) else (d,)
    if args.model in pipeline.ABLATIONS:
        shapes["voxel"] = (1, *args.grid)
    spec = pipeline.model_spec(args.model, exp, shapes)
    stats = models.model_stats(models.build_model(spec), shapes)
    out = {k: v for k, v in stats.items() if k != "layers"}
    out.update({"model": args.model, "input_shapes": {k: list(v) for k, v in shapes.items()},
                "params_m": stats["params"] / 1e6})
    if args.layers:
        out["layers"] = [dataclasses.asdict(s) for s in stats["layers"]]
    text = json.dumps(out, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)


def cmd_reproduce(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scfg = synth_config(cfg, args, QUICK_SYNTH if args.quick else None)
    exp_base = dict(DESK_EXPERIMENT, variants=list(dict.fromkeys(pipeline.TABLE1_VARIANTS + pipeline.TABLE2_VARIANTS)))
    if args.quick:
        exp_base.update(QUICK_EXPERIMENT)
    exp = experiment_config(cfg, args, exp_base)
    prep = prep_config(cfg, args, DESK_PREP)
    cohort = synth.generate_cohort(scfg)
    ds = pipeline.prepare_dataset(cohort.volume, cohort.labels, cohort.mask, cohort.atlas.data[..., 0], prep,
                                  subject_ids=cohort.subject_ids(), threads=_threads(args))
    report = pipeline.run_experiment(ds, exp, trace_dir=out / "traces")
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "table1.csv").write_text(report.summary_csv(pipeline.TABLE1_VARIANTS))
    (out / "table2.csv").write_text(report.summary_csv(pipeline.TABLE2_VARIANTS))
    print(report.summary_csv())


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="JSON config with sections synth/derivatives/prep/experiment")
    p.add_argument("--threads", type=int, help="worker cap (default: $STO_THREADS or 1)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _synth_flags(p):
    p.add_argument("--seed", type=int, help="top-level seed")
    p.add_argument("--n-per-class", type=int, help="subjects per class")
    p.add_argument("--extents", type=_parse_extents, help="volume extents, N or X,Y,Z")
    p.add_argument("--timepoints", type=int, help="number of timepoints T")
    p.add_argument("--tr", type=float, help="repetition time in seconds")
    p.add_argument("--n-blocks", type=int, help="number of ROI blocks")
    p.add_argument("--ar", type=float, help="AR(1) noise coefficient")
    p.add_argument("--effect-size", type=float, help="planted coupling strength (0 = no signal)")


def _prep_flags(p):
    p.add_argument("--neighborhood", type=int, choices=(7, 19, 27), help="ReHo neighbourhood size")
    p.add_argument("--threshold", type=float, help="DC/LFCD correlation threshold")
    p.add_argument("--weighted", action="store_true", help="weighted degree centrality")
    p.add_argument("--channels", type=_csv_strings, help=f"comma list from {','.join(CHANNELS)}")
    p.add_argument("--bandpass", type=float, nargs=2, metavar=("LOW", "HIGH"), help="band edges in Hz")
    p.add_argument("--no-bandpass", action="store_true", help="skip temporal filtering")
    p.add_argument("--grid", type=_parse_extents, help="resample derivative maps to N or X,Y,Z")
    p.add_argument("--fisher-z", action="store_true", help="Fisher z-transform FC features")
    p.add_argument("--ts-length", type=int, help="truncate ROI series to this many timepoints")


def _experiment_flags(p, single=False):
    if single:
        p.add_argument("--variant", dest="variants", type=lambda s: [s], help=f"one of {','.join(pipeline.VARIANTS)}")
        p.add_argument("--proportion", dest="proportions", type=lambda s: [float(s)], help="training data fraction")
        p.add_argument("--fold", type=int, default=0, help="fold index to train")
    else:
        p.add_argument("--variants", type=_csv_strings, help="comma list of variants")
        p.add_argument("--proportions", type=_csv_floats, help="comma list of training fractions")
    p.add_argument("--folds", type=int, help="number of CV folds")
    p.add_argument("--batch-size", type=int, help="mini-batch size")
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--max-epochs", type=int, help="epoch cap")
    p.add_argument("--eval-every", type=int, help="epochs between validation passes")
    p.add_argument("--patience", type=int, help="evaluations without improvement before stopping")
    p.add_argument("--select-on", choices=("validation", "test"), help="model-selection split")
    p.add_argument("--no-augment", action="store_true", help="disable spatial augmentation")
    p.add_argument("--network", choices=("paper", "desk"), help="3D CNN width profile")
    p.add_argument("--val-fraction", type=float, help="share of each training fold held out for selection")
    p.add_argument("--fc-hidden", type=int, help="FC-MLP hidden width")
    p.add_argument("--diagnet-hidden", type=int, help="DiagNet code width (default: half the input)")
    p.add_argument("--conv1d-filters", type=int, help="1D-conv baseline filter count")
    p.add_argument("--recon-weight", type=float, help="weight of the reconstruction loss")
    p.add_argument("--no-normalize-fc", action="store_true", help="skip fold-fitted FC z-scoring")
    p.add_argument("--atlas-name", help="atlas label recorded in the report")


def _data_flags(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--cohort", help="directory with sub-*.nii[.gz], atlas.nii.gz, mask.nii.gz, labels.csv")
    src.add_argument("--dataset", help="prepared dataset .npz (from --save-dataset)")
    p.add_argument("--save-dataset", help="write the prepared dataset to this .npz")


def build_parser():
    parser = argparse.ArgumentParser(prog="stomics", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic labelled cohort")
    _common(p)
    _synth_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dtype", default="float32", choices=("float32", "float64", "int16"), help="stored voxel type")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("derive", help="compute the 4-channel derivative stack of one 4D image")
    _common(p)
    _prep_flags(p)
    p.add_argument("--input", required=True, help="4D NIfTI")
    p.add_argument("--mask", required=True, help="3D brain mask NIfTI")
    p.add_argument("--out", required=True, help="output NIfTI (.nii or .nii.gz)")
    p.add_argument("--float32", action="store_true", help="store float32 instead of float64")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("parcellate", help="ROI mean time series of one 4D image")
    _common(p)
    p.add_argument("--input", required=True, help="4D NIfTI")
    p.add_argument("--atlas", required=True, help="integer label NIfTI")
    p.add_argument("--out", required=True, help="output CSV (rows = timepoints)")
    p.set_defaults(func=cmd_parcellate)

    p = sub.add_parser("features", help="FC upper-triangle features from time-series CSVs")
    _common(p)
    p.add_argument("timeseries", nargs="+", help="time-series CSVs, one per subject")
    p.add_argument("--out", required=True, help="output feature CSV")
    p.add_argument("--fisher-z", action="store_true", help="Fisher z-transform correlations")
    p.add_argument("--diagnet-mask", help="also write the quartile mask fitted on these subjects")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train one variant on one fold")
    _common(p)
    _data_flags(p)
    _prep_flags(p)
    _experiment_flags(p, single=True)
    p.add_argument("--seed", type=int, help="top-level seed")
    p.add_argument("--out", required=True, help="output directory for checkpoint and trace")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="AUC of a trained checkpoint")
    _common(p)
    _data_flags(p)
    _prep_flags(p)
    p.add_argument("--checkpoint", required=True, help="model.ckpt written by train")
    p.add_argument("--subjects", type=_csv_strings, help="subject ids (default: the checkpoint's test fold)")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="parameters, GFLOPs and memory of a model")
    _common(p)
    p.add_argument("--model", default="sto", choices=pipeline.VARIANTS, help="variant")
    p.add_argument("--n-rois", type=int, default=116, help="atlas size (116 = AAL, 200 = CC200)")
    p.add_argument("--grid", type=_parse_extents, default=[32, 32, 32], help="voxel input grid")
    p.add_argument("--timepoints", type=int, default=120, help="time-series length for conv1d")
    p.add_argument("--network", choices=("paper", "desk"), default="paper", help="3D CNN width profile")
    p.add_argument("--layers", action="store_true", help="include the per-layer table")
    p.add_argument("--out", help="write the JSON here too")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("reproduce", help="variant x proportion tables on a synthetic cohort")
    _common(p)
    _synth_flags(p)
    _prep_flags(p)
    _experiment_flags(p)
    p.add_argument("--quick", action="store_true", help="small cohort and short schedule")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        from threadpoolctl import threadpool_limits

        cfg = load_config(args.config)
        with threadpool_limits(limits=_threads(args)):
            args.func(args, cfg)
    except StoError as exc:
        return _fail(exc.category, exc)
    except (OSError, EOFError) as exc:
        return _fail("io", exc)
    except FloatingPointError as exc:
        return _fail("numerical", exc)
    return 0


def _fail(category, exc):
    msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
    print(f"error: {category}: {msg}", file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
