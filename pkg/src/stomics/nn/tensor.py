"""Reverse-mode tensors and the differentiable operations the models need.

There is no general broadcasting: every op checks the exact shapes it
supports. Arrays are float64 unless a tensor is created otherwise.
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import EmptyOutput, ShapeMismatch

PROB_CLAMP = 1e-7


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without a gradient needs a scalar")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=np.float64).copy()
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node is not self:
                    node.grad = None  # interior gradients are not kept

    def __add__(self, other):
        return add(self, other)


def _result(data, parents, backward):
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, parents=parents if needs else (),
                  backward=backward if needs else None)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"add needs equal shapes, got {a.shape} and {b.shape}")

    def backward(g):
        a._accumulate(g)
        b._accumulate(g)

    return _result(a.data + b.data, (a, b), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        x._accumulate(g * mask)

    return _result(np.maximum(x.data, 0.0), (x,), backward)  # NaN propagates


def sigmoid(x: Tensor) -> Tensor:
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    e = np.exp(x.data[~pos])
    out[~pos] = e / (1.0 + e)

    def backward(g):
        x._accumulate(g * out * (1.0 - out))

    return _result(out, (x,), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: kept units are scaled by ``1 / (1 - p)`` during training."""
    if not training or p == 0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)

    def backward(g):
        x._accumulate(g * keep)

    return _result(x.data * keep, (x,), backward)


def concat(tensors, axis=1) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t._accumulate(g[tuple(idx)])

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def reshape(x: Tensor, shape) -> Tensor:
    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return _result(x.data.reshape(shape), (x,), backward)


def global_avg_pool3d(x: Tensor) -> Tensor:
    """``[B, C, X, Y, Z] -> [B, C]``."""
    if x.data.ndim != 5:
        raise ShapeMismatch(f"global_avg_pool3d expects 5D input, got {x.shape}")
    n = np.prod(x.shape[2:])

    def backward(g):
        x._accumulate(np.broadcast_to(g[:, :, None, None, None] / n, x.shape))

    return _result(x.data.mean(axis=(2, 3, 4)), (x,), backward)


# ---------------------------------------------------------------------------
# dense and convolution
# ---------------------------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    """``y = x W + b`` with ``x: [B, in]``, ``W: [in, out]``, ``b: [out]``."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"linear: x {x.shape} incompatible with W {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeMismatch(f"linear: bias {b.shape} does not match W {w.shape}")
    out = x.data @ w.data
    if b is not None:
        out = out + b.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ w.data.T)
        if w.requires_grad:
            w._accumulate(x.data.T @ g)
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, backward)


def _triple(v):
    if isinstance(v, (int, np.integer)):
        return (int(v),) * 3
    v = tuple(int(i) for i in v)
    if len(v) != 3:
        raise ShapeMismatch(f"expected 3 values, got {v}")
    return v


def conv_output_shape(spatial, kernel, stride, padding):
    kernel, stride, padding = _triple(kernel), _triple(stride), _triple(padding)
    return tuple((n + 2 * p - k) // s + 1 for n, k, s, p in zip(spatial, kernel, stride, padding))


def conv3d(x: Tensor, w: Tensor, b: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """3D cross-correlation. ``x: [B, C, X, Y, Z]``, ``w: [C', C, kx, ky, kz]``."""
    if x.data.ndim != 5 or w.data.ndim != 5:
        raise ShapeMismatch(f"conv3d expects 5D input and kernel, got {x.shape}, {w.shape}")
    B, C = x.shape[:2]
    Co, Ci = w.shape[:2]
    if Ci != C:
        raise ShapeMismatch(f"conv3d: input has {C} channels, kernel expects {Ci}")
    if b is not None and b.shape != (Co,):
        raise ShapeMismatch(f"conv3d: bias {b.shape} does not match {Co} output channels")
    kernel = w.shape[2:]
    stride, padding = _triple(stride), _triple(padding)
    out_sp = conv_output_shape(x.shape[2:], kernel, stride, padding)
    if min(out_sp) < 1:
        raise EmptyOutput(f"conv3d output would be empty: {out_sp}")

    if any(padding):
        px, py, pz = padding
        xpad = np.pad(x.data, ((0, 0), (0, 0), (px, px), (py, py), (pz, pz)))
    else:
        xpad = np.ascontiguousarray(x.data)
    cols = kernels.im2col3d(xpad, kernel, stride, out_sp)
    wm = w.data.reshape(Co, -1)
    out = cols @ wm.T
    if b is not None:
        out += b.data
    out = np.ascontiguousarray(out.reshape(B, *out_sp, Co).transpose(0, 4, 1, 2, 3))

    def backward(g):
        gm = g.transpose(0, 2, 3, 4, 1).reshape(-1, Co)
        if w.requires_grad:
            w._accumulate((gm.T @ cols).reshape(w.shape))
        if b is not None and b.requires_grad:
            b._accumulate(gm.sum(axis=0))
        if x.requires_grad:
            dcols = np.ascontiguousarray(gm @ wm)
            dxpad = kernels.col2im3d(dcols, xpad.shape, kernel, stride, out_sp)
            px, py, pz = padding
            x._accumulate(dxpad[:, :, px:px + x.shape[2], py:py + x.shape[3], pz:pz + x.shape[4]])

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, backward)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean, running_var,
               training: bool, momentum=0.1, eps=1e-5) -> Tensor:
    """Per-channel normalization over batch and spatial axes of ``[B, C, ...]``.

    In training mode the running statistics (numpy arrays) are updated in place
    using the unbiased batch variance.
    """
    if x.data.ndim < 2 or x.shape[1] != gamma.shape[0]:
        raise ShapeMismatch(f"batch_norm: input {x.shape} vs {gamma.shape[0]} channels")
    axes = (0,) + tuple(range(2, x.data.ndim))
    bshape = (1, -1) + (1,) * (x.data.ndim - 2)
    if training:
        n = x.data.size // x.shape[1]
        mean = x.data.mean(axis=axes)
        centered = x.data - mean.reshape(bshape)
        var = np.mean(centered * centered, axis=axes)
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * (n / max(n - 1, 1))
    else:
        mean, var = running_mean, running_var
        centered = x.data - mean.reshape(bshape)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate(np.sum(g * xhat, axis=axes))
        if beta.requires_grad:
            beta._accumulate(np.sum(g, axis=axes))
        if x.requires_grad:
            gx = g * gamma.data.reshape(bshape)
            if training:
                m = x.data.size // x.shape[1]
                dx = (gx - gx.sum(axis=axes).reshape(bshape) / m
                      - xhat * np.sum(gx * xhat, axis=axes).reshape(bshape) / m)
                x._accumulate(dx * inv_std.reshape(bshape))
            else:
                x._accumulate(gx * inv_std.reshape(bshape))

    return _result(out, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def binary_cross_entropy(p: Tensor, y) -> Tensor:
    """Mean BCE of probabilities ``p`` (clamped to ``[1e-7, 1 - 1e-7]``) against 0/1 labels."""
    y = np.asarray(y, dtype=np.float64).reshape(p.shape)
    pc = np.clip(p.data, PROB_CLAMP, 1 - PROB_CLAMP)
    loss = -np.mean(y * np.log(pc) + (1 - y) * np.log(1 - pc))
    inside = (p.data >= PROB_CLAMP) & (p.data <= 1 - PROB_CLAMP)

    def backward(g):
        grad = (-(y / pc) + (1 - y) / (1 - pc)) / p.data.size
        p._accumulate(g * grad * inside)

    return _result(np.array(loss), (p,), backward)


def mse(a: Tensor, b) -> Tensor:
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mse needs equal shapes, got {a.shape} and {b.shape}")
    diff = a.data - b.data

    def backward(g):
        grad = 2.0 * diff / diff.size
        a._accumulate(g * grad)
        b._accumulate(-g * grad)

    return _result(np.array(np.mean(diff * diff)), (a, b), backward)


def weighted_sum(terms) -> Tensor:
    """``sum(w * t)`` for ``(weight, scalar tensor)`` pairs."""
    terms = list(terms)

    def backward(g):
        for wt, t in terms:
            t._accumulate(g * wt)

    total = sum(wt * t.data for wt, t in terms)
    return _result(np.asarray(total, dtype=np.float64), tuple(t for _, t in terms), backward)
