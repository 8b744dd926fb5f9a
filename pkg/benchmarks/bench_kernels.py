"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Prints one line per kernel: best-of-N wall time for each backend and the
speedup. Results are also checked for agreement.
"""
import argparse
import timeit

import numpy as np

from whtpack import _kernels_py

try:
    from whtpack import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(rng):
    rows = rng.standard_normal((3 * 256, 256))
    coeff = rng.standard_normal((256, 224))
    act = rng.standard_normal((8, 16, 64, 64)).astype(np.float32)
    cols = _kernels_py.im2col(act, 3, 1)
    pooled, idx = _kernels_py.maxpool2x2_forward(act)
    return {
        "fwht_rows 768x256": (lambda k: k.fwht_rows(rows.copy())),
        "max_pool_2d 256x224 /4": (lambda k: k.max_pool_2d(coeff, 4, 4)),
        "max_pool_2d 224x32 /8x1": (lambda k: k.max_pool_2d(np.ascontiguousarray(coeff[:, :32]), 8, 1)),
        "im2col 8x16x64x64 k3": (lambda k: k.im2col(act, 3, 1)),
        "col2im 8x16x64x64 k3": (lambda k: k.col2im(cols, act.shape, 3, 1)),
        "maxpool2x2 fwd 8x16x64x64": (lambda k: k.maxpool2x2_forward(act)),
        "maxpool2x2 bwd 8x16x64x64": (lambda k: k.maxpool2x2_backward(pooled, idx, 64, 64)),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-5, atol=1e-5)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    if _kernels is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'cython ms':>10s} {'numpy ms':>10s} {'speedup':>8s}  agree")
    for name, fn in cases(rng).items():
        t_c = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        t_p = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        agree = _same(fn(_kernels), fn(_kernels_py))
        print(f"{name:28s} {t_c:10.3f} {t_p:10.3f} {t_p / t_c:8.2f}  {agree}")


if __name__ == "__main__":
    main()
