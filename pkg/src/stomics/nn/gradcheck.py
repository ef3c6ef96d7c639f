"""Central finite-difference gradient checks."""
from __future__ import annotations

import numpy as np

from ..errors import NonDeterministicFragment
from .layers import Dropout, Module


def grad_check(loss_fn, tensors, n_coords=200, h=1e-5, seed=0, floor=1e-6, module=None):
    """Largest relative error between backprop and central differences.

    ``loss_fn()`` must return a scalar :class:`Tensor` and be deterministic;
    ``tensors`` are the leaves to perturb. Up to ``n_coords`` coordinates are
    sampled across all of them (all coordinates when there are fewer). The
    error at a coordinate is ``|a - n| / max(|a| + |n|, floor)``.
    """
    if module is not None:
        for m in module.modules():
            if isinstance(m, Dropout) and m.training and m.p > 0:
                raise NonDeterministicFragment("dropout is active; call eval() first")
    first = float(loss_fn().data)
    if float(loss_fn().data) != first:
        raise NonDeterministicFragment("loss function is not deterministic")

    for t in tensors:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    sizes = np.array([t.data.size for t in tensors])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    picks = np.arange(total) if total <= n_coords else np.sort(rng.choice(total, n_coords, replace=False))
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = 0.0
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        idx = np.unravel_index(flat - offsets[k], tensors[k].data.shape)
        data = tensors[k].data
        orig = data[idx]
        data[idx] = orig + h
        up = float(loss_fn().data)
        data[idx] = orig - h
        down = float(loss_fn().data)
        data[idx] = orig
        numeric = (up - down) / (2 * h)
        a = analytic[k][idx]
        err = abs(a - numeric) / max(abs(a) + abs(numeric), floor)
        worst = max(worst, err)
    return worst
