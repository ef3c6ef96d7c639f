"""STO networks, single-branch ablations and the connectome baselines.

Every model consumes a dict of batched inputs and returns
``(probabilities[B], auxiliary_loss_or_None)``:

* ``"voxel"`` -- derivative stacks ``[B, C, X, Y, Z]``
* ``"fc"``    -- connectome feature vectors ``[B, D]`` (already quartile-masked for DiagNet models)
* ``"ts"``    -- ROI time series ``[B, M, T]``
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidConfig, ShapeMismatch
from .nn import checkpoint
from .nn import tensor as T
from .nn.layers import (
    BasicResBlock, Conv3d, Dense, Dropout, GlobalAvgPool3d, LayerStat, Module, ReLU,
    Sequential, Sigmoid, conv_bn,
)
from .nn.tensor import Tensor

DROPOUT = 0.2


@dataclass(frozen=True)
class StvOmicsConfig:
    in_channels: int = 4
    stem_channels: int = 64
    stage_channels: tuple = (128, 256, 512)
    stage_strides: tuple = (2, 2, 2)
    embed_dim: int = 512

    def __post_init__(self):
        object.__setattr__(self, "stage_channels", tuple(self.stage_channels))
        object.__setattr__(self, "stage_strides", tuple(self.stage_strides))
        if len(self.stage_channels) != len(self.stage_strides):
            raise InvalidConfig("stage_channels and stage_strides differ in length")
        if min((self.in_channels, self.stem_channels, self.embed_dim) + self.stage_channels) < 1:
            raise InvalidConfig("all channel counts must be positive")


@dataclass(frozen=True)
class StrOmicsConfig:
    input_dim: int = 6670
    embed_dim: int = 512

    def __post_init__(self):
        if self.input_dim < 2:
            raise InvalidConfig("input_dim must be >= 2")


@dataclass(frozen=True)
class StoConfig:
    variant: str = "vanilla"
    stv: StvOmicsConfig = field(default_factory=StvOmicsConfig)
    str: StrOmicsConfig = field(default_factory=StrOmicsConfig)
    dropout: float = DROPOUT
    recon_weight: float = 1.0

    def __post_init__(self):
        if self.variant not in ("vanilla", "diagnet"):
            raise InvalidConfig(f"unknown STO variant {self.variant!r}")
        if isinstance(self.stv, dict):
            object.__setattr__(self, "stv", StvOmicsConfig(**self.stv))
        if isinstance(self.str, dict):
            object.__setattr__(self, "str", StrOmicsConfig(**self.str))

    @property
    def fusion_in(self):
        return self.stv.embed_dim + self.str.embed_dim


def quartile_dim(d):
    return 2 * (d // 4)


class StvOmics(Module):
    """3D ResNet-10 style encoder: stem, Basic-Res-Blocks, 1x1x1 conv, global pooling."""

    def __init__(self, cfg: StvOmicsConfig, rng):
        self.cfg = cfg
        self.stem = conv_bn(cfg.in_channels, cfg.stem_channels, 3, rng)
        blocks, ch = [], cfg.stem_channels
        for out, stride in zip(cfg.stage_channels, cfg.stage_strides):
            blocks.append(BasicResBlock(ch, out, stride, rng))
            ch = out
        self.blocks = blocks
        self.head = conv_bn(ch, cfg.embed_dim, 1, rng)
        self.pool = GlobalAvgPool3d()

    def forward(self, x):
        x = self.stem(x)
        for b in self.blocks:
            x = b(x)
        return self.pool(self.head(x))

    def describe(self, in_shape, name="stv"):
        shape, stats = self.stem.describe(in_shape, f"{name}.stem")
        for i, b in enumerate(self.blocks):
            shape, s = b.describe(shape, f"{name}.block{i}")
            stats.extend(s)
        shape, s = self.head.describe(shape, f"{name}.head")
        stats.extend(s)
        shape, s = self.pool.describe(shape, f"{name}.pool")
        stats.extend(s)
        return shape, stats


class StrOmics(Module):
    """Single dense layer mapping connectome features into the shared embedding."""

    def __init__(self, cfg: StrOmicsConfig, rng):
        self.cfg = cfg
        self.net = Sequential(Dense(cfg.input_dim, cfg.embed_dim, rng), ReLU())

    def forward(self, x):
        return self.net(x)

    def describe(self, in_shape, name="str"):
        return self.net.describe(in_shape, name)


class _Classifier(Module):
    """Dropout, dense to one logit, sigmoid."""

    def __init__(self, n_in, p, rng):
        self.head = Sequential(Dropout(p, rng), Dense(n_in, 1, rng), Sigmoid())

    def forward(self, x):
        return T.reshape(self.head(x), (x.shape[0],))

    def describe(self, in_shape, name="cls"):
        out, stats = self.head.describe(in_shape, name)
        return out, stats


class Sto(Module):
    inputs = ("voxel", "fc")

    def __init__(self, cfg: StoConfig, rng):
        self.cfg = cfg
        self.stv = StvOmics(cfg.stv, rng)
        self.str = StrOmics(cfg.str, rng)
        self.decoder = Dense(cfg.str.embed_dim, cfg.str.input_dim, rng) if cfg.variant == "diagnet" else None
        self.classifier = _Classifier(cfg.fusion_in, cfg.dropout, rng)

    def embed(self, inputs):
        return self.stv(inputs["voxel"]), self.str(inputs["fc"])

    def forward(self, inputs):
        v, r = self.embed(inputs)
        prob = self.classifier(T.concat([v, r], axis=1))
        aux = None
        if self.decoder is not None:
            aux = (self.cfg.recon_weight, T.mse(self.decoder(r), inputs["fc"]))
        return prob, aux

    def describe(self, shapes):
        _, stats = self.stv.describe(shapes["voxel"])
        _, s = self.str.describe(shapes["fc"])
        stats += s
        if self.decoder is not None:
            stats += self.decoder.describe((self.cfg.str.embed_dim,), "decoder")[1]
        stats += self.classifier.describe((self.cfg.fusion_in,), "fusion")[1]
        return stats


class StvClassifier(Module):
    """Voxel branch alone (derivative ablations)."""

    inputs = ("voxel",)

    def __init__(self, cfg: StvOmicsConfig, rng, dropout=DROPOUT):
        self.stv = StvOmics(cfg, rng)
        self.classifier = _Classifier(cfg.embed_dim, dropout, rng)

    def forward(self, inputs):
        return self.classifier(self.stv(inputs["voxel"])), None

    def describe(self, shapes):
        out, stats = self.stv.describe(shapes["voxel"])
        return stats + self.classifier.describe(out, "cls")[1]


class StrClassifier(Module):
    """Connectome branch alone."""

    inputs = ("fc",)

    def __init__(self, cfg: StrOmicsConfig, rng, dropout=DROPOUT):
        self.str = StrOmics(cfg, rng)
        self.classifier = _Classifier(cfg.embed_dim, dropout, rng)

    def forward(self, inputs):
        return self.classifier(self.str(inputs["fc"])), None

    def describe(self, shapes):
        out, stats = self.str.describe(shapes["fc"])
        return stats + self.classifier.describe(out, "cls")[1]


class FcMlp(Module):
    """Two-layer perceptron on the upper-triangle connectome vector."""

    inputs = ("fc",)

    def __init__(self, input_dim, rng, hidden=16, dropout=DROPOUT):
        if input_dim < 2:
            raise InvalidConfig("input_dim must be >= 2")
        self.net = Sequential(Dense(input_dim, hidden, rng), ReLU(), Dropout(dropout, rng),
                              Dense(hidden, 1, rng), Sigmoid())

    def forward(self, inputs):
        x = inputs["fc"]
        return T.reshape(self.net(x), (x.shape[0],)), None

    def describe(self, shapes):
        return self.net.describe(shapes["fc"], "mlp")[1]


class DiagNet(Module):
    """Autoencoder on quartile-selected features with a perceptron on the code.

    ``input_dim`` is the masked width ``2 * floor(D / 4)``. The default code
    width is half of it.
    """

    inputs = ("fc",)

    def __init__(self, input_dim, rng, hidden=None, recon_weight=1.0):
        if input_dim < 2:
            raise InvalidConfig("input_dim must be >= 2")
        hidden = hidden or max(1, input_dim // 2)
        self.recon_weight = recon_weight
        self.encoder = Sequential(Dense(input_dim, hidden, rng), ReLU())
        self.decoder = Dense(hidden, input_dim, rng)
        self.slp = Sequential(Dense(hidden, 1, rng), Sigmoid())

    def forward(self, inputs):
        x = inputs["fc"]
        code = self.encoder(x)
        prob = T.reshape(self.slp(code), (x.shape[0],))
        return prob, (self.recon_weight, T.mse(self.decoder(code), x))

    def describe(self, shapes):
        code, stats = self.encoder.describe(shapes["fc"], "encoder")
        stats += self.decoder.describe(code, "decoder")[1]
        stats += self.slp.describe(code, "slp")[1]
        return stats


class Conv1dNet(Module):
    """Temporal convolution with one input channel per ROI, global pooling, dense, sigmoid.

    The 1D convolution runs as a 3D convolution with a ``(k, 1, 1)`` kernel on
    ``[B, M, T, 1, 1]``.
    """

    inputs = ("ts",)

    def __init__(self, n_rois, rng, filters=32, kernel=7):
        if n_rois < 2:
            raise InvalidConfig("n_rois must be >= 2")
        self.kernel = kernel
        self.conv = Conv3d(n_rois, filters, (kernel, 1, 1), rng, bias=True)
        self.relu = ReLU()
        self.pool = GlobalAvgPool3d()
        self.out = Sequential(Dense(filters, 1, rng), Sigmoid())

    def forward(self, inputs):
        x = inputs["ts"]
        if x.data.ndim != 3:
            raise ShapeMismatch(f"expected [B, M, T], got {x.shape}")
        if x.shape[2] < self.kernel:
            raise ShapeMismatch(f"time axis {x.shape[2]} shorter than kernel {self.kernel}")
        x = T.reshape(x, x.shape + (1, 1))
        h = self.pool(self.relu(self.conv(x)))
        return T.reshape(self.out(h), (x.shape[0],)), None

    def describe(self, shapes):
        m, t = shapes["ts"]
        shape, stats = self.conv.describe((m, t, 1, 1), "conv1d")
        stats += self.relu.describe(shape, "relu")[1]
        shape, s = self.pool.describe(shape, "pool")
        stats += s
        stats += self.out.describe(shape, "out")[1]
        return stats


# ---------------------------------------------------------------------------
# registry and statistics
# ---------------------------------------------------------------------------

def build_stvomics(cfg=StvOmicsConfig(), seed=0):
    return StvOmics(cfg, np.random.default_rng(seed))


def build_stromics(cfg=StrOmicsConfig(), seed=0):
    return StrOmics(cfg, np.random.default_rng(seed))


def build_sto(cfg=StoConfig(), seed=0):
    return Sto(cfg, np.random.default_rng(seed))


def build_baseline_fc_mlp(input_dim, hidden=16, seed=0):
    return FcMlp(input_dim, np.random.default_rng(seed), hidden=hidden)


def build_baseline_diagnet(n_features, hidden=None, recon_weight=1.0, seed=0):
    """DiagNet baseline for ``n_features`` raw connectome features (masks to ``2 * floor(D/4)``)."""
    if n_features < 8:
        raise InvalidConfig("DiagNet needs at least 8 features")
    return DiagNet(quartile_dim(n_features), np.random.default_rng(seed), hidden=hidden,
                   recon_weight=recon_weight)


def build_baseline_1dconv(n_rois, filters=32, kernel=7, seed=0):
    return Conv1dNet(n_rois, np.random.default_rng(seed), filters=filters, kernel=kernel)


def build_model(spec: dict, seed=0):
    """Build from a JSON-able description ``{"kind": ..., **options}``."""
    spec = dict(spec)
    kind = spec.pop("kind")
    rng = np.random.default_rng(seed)
    if kind == "sto":
        return Sto(StoConfig(**spec), rng)
    if kind == "stv":
        dropout = spec.pop("dropout", DROPOUT)
        return StvClassifier(StvOmicsConfig(**spec), rng, dropout=dropout)
    if kind == "str":
        dropout = spec.pop("dropout", DROPOUT)
        return StrClassifier(StrOmicsConfig(**spec), rng, dropout=dropout)
    if kind == "fc_mlp":
        return FcMlp(spec.pop("input_dim"), rng, **spec)
    if kind == "diagnet":
        return DiagNet(spec.pop("input_dim"), rng, **spec)
    if kind == "conv1d":
        return Conv1dNet(spec.pop("n_rois"), rng, **spec)
    raise InvalidConfig(f"unknown model kind {kind!r}")


FLOP_CONVENTION = ("multiply-add = 2 FLOPs for conv/dense; batchnorm 2 per element; "
                   "ReLU, sigmoid and pooling 1 per element; one sample, forward pass only")


def model_stats(model: Module, input_shapes: dict, element_bytes=4) -> dict:
    """Parameters, forward FLOPs and activation memory for one sample, from shape arithmetic.

    ``input_shapes`` omits the batch axis, e.g. ``{"voxel": (4, 32, 32, 32), "fc": (6670,)}``.
    """
    stats = model.describe(input_shapes)
    params = model.n_params()
    described = sum(s.params for s in stats)
    if described != params:
        raise ShapeMismatch(f"layer walk found {described} parameters, model has {params}")
    flops = int(sum(s.flops for s in stats))
    act_elems = int(sum(s.out_elements for s in stats if s.kind != "Dropout"))
    act_bytes = act_elems * element_bytes
    return {
        "params": params,
        "flops": flops,
        "gflops": flops / 1e9,
        "activation_bytes": act_bytes,
        "memory_mb": (params * element_bytes + act_bytes) / 2 ** 20,
        "flop_convention": FLOP_CONVENTION,
        "layers": stats,
    }
