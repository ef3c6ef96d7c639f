# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; signatures mirror :mod:`stomics.kernels._pykernels`."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def reho_map(double[:, :, :, ::1] ranks, double[:, :, ::1] tie_terms,
             mask, long[:, ::1] offsets):
    cdef Py_ssize_t X = ranks.shape[0], Y = ranks.shape[1], Z = ranks.shape[2]
    cdef Py_ssize_t n = ranks.shape[3], K = offsets.shape[0]
    cdef cnp.uint8_t[:, :, ::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef double[:, :, ::1] out = np.zeros((X, Y, Z))
    cdef double[::1] rsum = np.zeros(n)
    cdef Py_ssize_t x, y, z, t, k, nx, ny, nz
    cdef double count, ties, mean, dev, s, denom, nn = <double> n

    for x in range(X):
        for y in range(Y):
            for z in range(Z):
                if not m[x, y, z]:
                    continue
                for t in range(n):
                    rsum[t] = 0.0
                count = 0.0
                ties = 0.0
                for k in range(K):
                    nx = x + offsets[k, 0]
                    ny = y + offsets[k, 1]
                    nz = z + offsets[k, 2]
                    if nx < 0 or ny < 0 or nz < 0 or nx >= X or ny >= Y or nz >= Z:
                        continue
                    if not m[nx, ny, nz]:
                        continue
                    count += 1.0
                    ties += tie_terms[nx, ny, nz]
                    for t in range(n):
                        rsum[t] += ranks[nx, ny, nz, t]
                if count < 2.0:
                    continue
                mean = count * (nn + 1.0) / 2.0
                s = 0.0
                for t in range(n):
                    dev = rsum[t] - mean
                    s += dev * dev
                denom = count * count * (nn * nn * nn - nn) - count * ties
                if denom > 1e-12:
                    out[x, y, z] = 12.0 * s / denom
    return np.asarray(out)


def lfcd_map(double[:, :, :, ::1] zts, mask, double threshold):
    cdef Py_ssize_t X = zts.shape[0], Y = zts.shape[1], Z = zts.shape[2], n = zts.shape[3]
    cdef Py_ssize_t V = X * Y * Z
    cdef cnp.uint8_t[::1] m = np.ascontiguousarray(mask, dtype=np.uint8).reshape(-1)
    cdef double[:, ::1] ts = np.asarray(zts).reshape(V, n)
    cdef long[::1] queue = np.zeros(V, dtype=np.int64)
    cdef long[::1] stamp = np.full(V, -1, dtype=np.int64)
    cdef long[::1] out = np.zeros(V, dtype=np.int64)
    cdef long seed, cur, nb, head, tail, d
    cdef long x, y, z, nx, ny, nz
    cdef long YZ = Y * Z
    cdef long dxs[6]
    cdef long dys[6]
    cdef long dzs[6]
    cdef double r
    cdef Py_ssize_t t
    dxs[:] = [1, -1, 0, 0, 0, 0]
    dys[:] = [0, 0, 1, -1, 0, 0]
    dzs[:] = [0, 0, 0, 0, 1, -1]

    for seed in range(V):
        if not m[seed]:
            continue
        head = 0
        tail = 1
        queue[0] = seed
        stamp[seed] = seed
        while head < tail:
            cur = queue[head]
            head += 1
            x = cur // YZ
            y = (cur // Z) % Y
            z = cur % Z
            for d in range(6):
                nx = x + dxs[d]
                ny = y + dys[d]
                nz = z + dzs[d]
                if nx < 0 or ny < 0 or nz < 0 or nx >= X or ny >= Y or nz >= Z:
                    continue
                nb = nx * YZ + ny * Z + nz
                if stamp[nb] == seed or not m[nb]:
                    continue
                stamp[nb] = seed
                r = 0.0
                for t in range(n):
                    r += ts[seed, t] * ts[nb, t]
                if r > threshold:
                    queue[tail] = nb
                    tail += 1
        out[seed] = tail - 1
    return np.asarray(out).reshape(X, Y, Z)


def im2col3d(double[:, :, :, :, ::1] xpad, kernel, stride, out_shape):
    cdef Py_ssize_t B = xpad.shape[0], C = xpad.shape[1]
    cdef Py_ssize_t kx = kernel[0], ky = kernel[1], kz = kernel[2]
    cdef Py_ssize_t sx = stride[0], sy = stride[1], sz = stride[2]
    cdef Py_ssize_t Xo = out_shape[0], Yo = out_shape[1], Zo = out_shape[2]
    cdef Py_ssize_t K = C * kx * ky * kz
    cdef double[:, ::1] cols = np.empty((B * Xo * Yo * Zo, K))
    cdef Py_ssize_t b, x, y, z, c, i, j, k, row, col
    row = 0
    for b in range(B):
        for x in range(Xo):
            for y in range(Yo):
                for z in range(Zo):
                    col = 0
                    for c in range(C):
                        for i in range(kx):
                            for j in range(ky):
                                for k in range(kz):
                                    cols[row, col] = xpad[b, c, x * sx + i, y * sy + j, z * sz + k]
                                    col += 1
                    row += 1
    return np.asarray(cols)


def col2im3d(double[:, ::1] cols, padded_shape, kernel, stride, out_shape):
    cdef Py_ssize_t B = padded_shape[0], C = padded_shape[1]
    cdef Py_ssize_t kx = kernel[0], ky = kernel[1], kz = kernel[2]
    cdef Py_ssize_t sx = stride[0], sy = stride[1], sz = stride[2]
    cdef Py_ssize_t Xo = out_shape[0], Yo = out_shape[1], Zo = out_shape[2]
    cdef double[:, :, :, :, ::1] dx = np.zeros(tuple(padded_shape))
    cdef Py_ssize_t b, x, y, z, c, i, j, k, row, col
    row = 0
    for b in range(B):
        for x in range(Xo):
            for y in range(Yo):
                for z in range(Zo):
                    col = 0
                    for c in range(C):
                        for i in range(kx):
                            for j in range(ky):
                                for k in range(kz):
                                    dx[b, c, x * sx + i, y * sy + j, z * sz + k] += cols[row, col]
                                    col += 1
                    row += 1
    return np.asarray(dx)
