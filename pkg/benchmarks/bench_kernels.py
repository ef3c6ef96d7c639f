"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 3] [--size 20]

Times ReHo, LFCD and a Conv3d forward+backward (im2col/col2im) through the
public functions, after checking both backends give the same numbers.
"""
import argparse
import timeit

import numpy as np

from stomics import derivatives as D, kernels
from stomics.nifti import MaskVolume, Volume4D
from stomics.nn import tensor as T
from stomics.nn.tensor import Tensor


def make_volume(size, timepoints, seed=0):
    rng = np.random.default_rng(seed)
    shape = (size, size, size)
    common = rng.standard_normal(timepoints)
    data = rng.standard_normal(shape + (timepoints,)) + rng.uniform(0, 1.5, shape)[..., None] * common
    yy = np.indices(shape) - (size - 1) / 2
    mask = (yy ** 2).sum(axis=0) <= (size / 2) ** 2
    return Volume4D(data), MaskVolume(mask)


def conv_round_trip(x, w):
    xt = Tensor(x, requires_grad=True)
    wt = Tensor(w, requires_grad=True)
    out = T.conv3d(xt, wt, None, 2, 1)
    T.global_avg_pool3d(out).backward(np.ones((x.shape[0], w.shape[0])))
    return out.data, xt.grad


def cases(size, timepoints):
    vol, mask = make_volume(size, timepoints)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 4, size, size, size))
    w = rng.standard_normal((8, 4, 3, 3, 3))
    return {
        "reho (27-nbhd)": lambda: D.reho(vol, mask).data,
        "lfcd": lambda: D.lfcd(vol, mask).data,
        "conv3d fwd+bwd": lambda: conv_round_trip(x, w),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, atol=1e-10, rtol=0)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=20, help="cube edge in voxels")
    ap.add_argument("--timepoints", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3, help="best-of repeats")
    args = ap.parse_args(argv)
    if kernels.compiled_backend is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")

    work = cases(args.size, args.timepoints)
    print(f"grid {args.size}^3, T={args.timepoints}, best of {args.repeat}")
    print(f"{'kernel':<18}{'compiled s':>12}{'python s':>12}{'speedup':>10}")
    for name, fn in work.items():
        timings, outputs = {}, {}
        for backend in ("compiled", "python"):
            kernels.use_backend(backend)
            outputs[backend] = fn()
            timings[backend] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        kernels.use_backend("compiled")
        if not _same(outputs["compiled"], outputs["python"]):
            raise SystemExit(f"{name}: backends disagree")
        c, p = timings["compiled"], timings["python"]
        print(f"{name:<18}{c:>12.4f}{p:>12.4f}{p / c:>9.1f}x")


if __name__ == "__main__":
    main()
