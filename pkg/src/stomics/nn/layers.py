"""Layer modules built on :mod:`stomics.nn.tensor`.

Every module can describe itself for a given input shape without running,
which is how parameter, FLOP and activation-memory figures are produced.
FLOPs count a multiply-add as 2; normalization, activations and pooling add
one FLOP per element they touch (batchnorm: 2 per element).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from . import tensor as T
from .tensor import Tensor


@dataclass
class LayerStat:
    name: str
    kind: str
    out_shape: tuple
    params: int
    flops: int

    @property
    def out_elements(self):
        return int(np.prod(self.out_shape))


class Module:
    training = True

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix=""):
        out = []
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((full, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(full + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{full}.{i}."))
        return out

    def named_buffers(self, prefix=""):
        out = []
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Module):
                out.extend(value.named_buffers(full + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_buffers(f"{full}.{i}."))
        return out

    def children(self):
        for value in vars(self).values():
            if isinstance(value, Module):
                yield value
            elif isinstance(value, (list, tuple)):
                yield from (v for v in value if isinstance(v, Module))

    def modules(self):
        yield self
        for c in self.children():
            yield from c.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def n_params(self):
        return int(sum(p.data.size for p in self.parameters()))

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def describe(self, in_shape, name=""):
        """Return ``(out_shape, [LayerStat, ...])`` for a batch-free input shape."""
        raise NotImplementedError


def he_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense(Module):
    def __init__(self, n_in, n_out, rng, bias=True):
        if n_in < 1 or n_out < 1:
            raise ShapeMismatch("Dense dimensions must be positive")
        self.n_in, self.n_out = n_in, n_out
        self.weight = Tensor(he_uniform(rng, (n_in, n_out), n_in), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def forward(self, x):
        return T.linear(x, self.weight, self.bias)

    def spec(self):
        return {"type": "Dense", "in": self.n_in, "out": self.n_out}

    def describe(self, in_shape, name="dense"):
        if tuple(in_shape) != (self.n_in,):
            raise ShapeMismatch(f"{name}: expected ({self.n_in},), got {in_shape}")
        out = (self.n_out,)
        return out, [LayerStat(name, "Dense", out, self.n_params(), 2 * self.n_in * self.n_out)]


class Conv3d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=0, bias=False):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel = T._triple(kernel)
        self.stride = T._triple(stride)
        self.padding = T._triple(padding)
        fan_in = in_ch * int(np.prod(self.kernel))
        self.weight = Tensor(he_uniform(rng, (out_ch, in_ch) + self.kernel, fan_in), requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True) if bias else None

    def forward(self, x):
        return T.conv3d(x, self.weight, self.bias, self.stride, self.padding)

    def spec(self):
        return {"type": "Conv3d", "in_ch": self.in_ch, "out_ch": self.out_ch, "kernel": self.kernel,
                "stride": self.stride, "padding": self.padding}

    def describe(self, in_shape, name="conv"):
        if len(in_shape) != 4 or in_shape[0] != self.in_ch:
            raise ShapeMismatch(f"{name}: expected {self.in_ch} channels, got {in_shape}")
        sp = T.conv_output_shape(in_shape[1:], self.kernel, self.stride, self.padding)
        out = (self.out_ch,) + sp
        macs = int(np.prod(sp)) * self.out_ch * self.in_ch * int(np.prod(self.kernel))
        return out, [LayerStat(name, "Conv3d", out, self.n_params(), 2 * macs)]


class BatchNorm3d(Module):
    def __init__(self, channels, eps=1e-5, momentum=0.1):
        self.channels, self.eps, self.momentum = channels, eps, momentum
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x):
        return T.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)

    def named_buffers(self, prefix=""):
        return [(f"{prefix}running_mean", self.running_mean), (f"{prefix}running_var", self.running_var)]

    def spec(self):
        return {"type": "BatchNorm3d", "channels": self.channels}

    def describe(self, in_shape, name="bn"):
        if in_shape[0] != self.channels:
            raise ShapeMismatch(f"{name}: expected {self.channels} channels, got {in_shape}")
        return tuple(in_shape), [LayerStat(name, "BatchNorm3d", tuple(in_shape), self.n_params(),
                                           2 * int(np.prod(in_shape)))]


class ReLU(Module):
    def forward(self, x):
        return T.relu(x)

    def describe(self, in_shape, name="relu"):
        return tuple(in_shape), [LayerStat(name, "ReLU", tuple(in_shape), 0, int(np.prod(in_shape)))]


class Sigmoid(Module):
    def forward(self, x):
        return T.sigmoid(x)

    def describe(self, in_shape, name="sigmoid"):
        return tuple(in_shape), [LayerStat(name, "Sigmoid", tuple(in_shape), 0, int(np.prod(in_shape)))]


class Dropout(Module):
    def __init__(self, p, rng):
        if not 0 <= p < 1:
            raise ShapeMismatch("dropout p must lie in [0, 1)")
        self.p = p
        self.rng = rng

    def forward(self, x):
        return T.dropout(x, self.p, self.rng, self.training)

    def describe(self, in_shape, name="dropout"):
        return tuple(in_shape), [LayerStat(name, "Dropout", tuple(in_shape), 0, 0)]


class GlobalAvgPool3d(Module):
    def forward(self, x):
        return T.global_avg_pool3d(x)

    def describe(self, in_shape, name="gap"):
        out = (in_shape[0],)
        return out, [LayerStat(name, "GlobalAvgPool3d", out, 0, int(np.prod(in_shape)))]


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def describe(self, in_shape, name="seq"):
        stats, shape = [], tuple(in_shape)
        for i, layer in enumerate(self.layers):
            shape, s = layer.describe(shape, f"{name}.{i}")
            stats.extend(s)
        return shape, stats


def conv_bn(in_ch, out_ch, kernel, rng, stride=1, relu=True):
    layers = [Conv3d(in_ch, out_ch, kernel, rng, stride=stride, padding=kernel // 2), BatchNorm3d(out_ch)]
    if relu:
        layers.append(ReLU())
    return Sequential(*layers)


class BasicResBlock(Module):
    """Two 3x3x3 conv+BN stages with a projected 1x1x1 shortcut and post-add ReLU."""

    def __init__(self, in_ch, out_ch, stride, rng):
        self.body = Sequential(conv_bn(in_ch, out_ch, 3, rng, stride=stride),
                               conv_bn(out_ch, out_ch, 3, rng, relu=False))
        if stride != 1 or in_ch != out_ch:
            self.shortcut = conv_bn(in_ch, out_ch, 1, rng, stride=stride, relu=False)
        else:
            self.shortcut = None

    def forward(self, x):
        skip = self.shortcut(x) if self.shortcut is not None else x
        return T.relu(T.add(self.body(x), skip))

    def describe(self, in_shape, name="block"):
        out, stats = self.body.describe(in_shape, f"{name}.body")
        if self.shortcut is not None:
            sc_out, sc = self.shortcut.describe(in_shape, f"{name}.shortcut")
            stats.extend(sc)
        else:
            sc_out = tuple(in_shape)
        if sc_out != out:
            raise ShapeMismatch(f"{name}: shortcut {sc_out} vs body {out}")
        n = int(np.prod(out))
        stats.append(LayerStat(f"{name}.add_relu", "AddReLU", out, 0, 2 * n))
        return out, stats
