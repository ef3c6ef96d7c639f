"""Pure numpy implementations of the hot kernels.

These are the reference fallbacks for :mod:`stomics.kernels._ckernels` and must
return the same values (up to floating-point summation order).
"""
import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy import ndimage

_SIX_CONNECTED = ndimage.generate_binary_structure(3, 1)


def reho_map(ranks, tie_terms, mask, offsets):
    """Kendall's W of each in-mask voxel with its in-mask neighbours.

    ``ranks`` holds per-voxel midranks ``[X, Y, Z, T]``, ``tie_terms`` the
    per-voxel tie sum ``sum(t^3 - t)``, ``offsets`` the ``(K, 3)`` neighbourhood
    including ``(0, 0, 0)``.
    """
    X, Y, Z, n = ranks.shape
    rank_sum = np.zeros_like(ranks)
    count = np.zeros((X, Y, Z))
    ties = np.zeros((X, Y, Z))
    m = mask.astype(np.float64)
    for dx, dy, dz in offsets:
        dst = tuple(slice(max(0, -d), s - max(0, d)) for d, s in zip((dx, dy, dz), (X, Y, Z)))
        src = tuple(slice(max(0, d), s - max(0, -d)) for d, s in zip((dx, dy, dz), (X, Y, Z)))
        w = m[src]
        rank_sum[dst] += ranks[src] * w[..., None]
        count[dst] += w
        ties[dst] += tie_terms[src] * w
    mean = count * (n + 1) / 2.0
    dev = rank_sum - mean[..., None]
    s = np.sum(dev * dev, axis=-1)
    denom = count * count * (n ** 3 - n) - count * ties
    ok = mask & (count >= 2) & (denom > 1e-12)
    out = np.zeros((X, Y, Z))
    out[ok] = 12.0 * s[ok] / denom[ok]
    return out


def lfcd_map(zts, mask, threshold):
    """Size of the seed-correlated 6-connected cluster around each voxel, minus one.

    ``zts`` holds unit-norm centred series so that a dot product is Pearson r.
    """
    flat = zts.reshape(-1, zts.shape[-1])
    idx = np.flatnonzero(mask)
    out = np.zeros(mask.shape, dtype=np.int64)
    admitted = np.zeros(mask.shape, dtype=bool)
    admitted_flat = admitted.reshape(-1)
    for seed in idx:
        r = flat[idx] @ flat[seed]
        admitted_flat[:] = False
        admitted_flat[idx] = r > threshold
        admitted_flat[seed] = True
        labels, _ = ndimage.label(admitted, structure=_SIX_CONNECTED)
        lab = labels.reshape(-1)[seed]
        out.reshape(-1)[seed] = np.count_nonzero(labels == lab) - 1
    return out


def im2col3d(xpad, kernel, stride, out_shape):
    """Gather receptive fields: ``[B, C, Xp, Yp, Zp] -> [B*Xo*Yo*Zo, C*kx*ky*kz]``."""
    B, C = xpad.shape[:2]
    kx, ky, kz = kernel
    sx, sy, sz = stride
    Xo, Yo, Zo = out_shape
    s = xpad.strides
    view = as_strided(
        xpad,
        shape=(B, Xo, Yo, Zo, C, kx, ky, kz),
        strides=(s[0], s[2] * sx, s[3] * sy, s[4] * sz, s[1], s[2], s[3], s[4]),
        writeable=False,
    )
    return view.reshape(B * Xo * Yo * Zo, C * kx * ky * kz)


def col2im3d(cols, padded_shape, kernel, stride, out_shape):
    """Adjoint of :func:`im2col3d`: scatter-add columns back into a padded input."""
    B, C = padded_shape[:2]
    kx, ky, kz = kernel
    sx, sy, sz = stride
    Xo, Yo, Zo = out_shape
    dx = np.zeros(padded_shape)
    blocks = cols.reshape(B, Xo, Yo, Zo, C, kx, ky, kz).transpose(0, 4, 5, 6, 7, 1, 2, 3)
    for i in range(kx):
        for j in range(ky):
            for k in range(kz):
                dx[:, :, i:i + sx * Xo:sx, j:j + sy * Yo:sy, k:k + sz * Zo:sz] += blocks[:, :, i, j, k]
    return dx
