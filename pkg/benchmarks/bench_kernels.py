#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-NumPy fallback.

Times im2col / col2im in isolation, a conv2d forward+backward through the
autodiff engine under each backend, and one full desk-scale training step.

Run: python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from garmentgan.backend import kernels_numpy

try:
    from garmentgan.backend import _kernels as kernels_cy
except ImportError:
    kernels_cy = None


def timeit(fn, repeats: int) -> float:
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1000.0


KERNEL_CASES = [
    # (label, n, c, h, k, stride, pad)
    ("stem 8x3x64 k3", 8, 3, 64, 3, 1, 1),
    ("down 8x16x64 k4s2", 8, 16, 64, 4, 2, 1),
    ("res 8x64x16 k3", 8, 64, 16, 3, 1, 1),
    ("disc 8x64x32 k4s2", 8, 64, 32, 4, 2, 1),
]


def bench_kernels(repeats: int) -> None:
    print(f"{'case':<22} {'im2col np':>10} {'im2col cy':>10} {'col2im np':>10} {'col2im cy':>10}")
    rng = np.random.default_rng(0)
    for label, n, c, h, k, stride, pad in KERNEL_CASES:
        x = np.ascontiguousarray(rng.normal(size=(n, c, h, h)).astype(np.float32))
        hout = kernels_numpy.conv_out_size(h, k, stride, pad)
        cols = np.ascontiguousarray(rng.normal(size=(n, c * k * k, hout * hout)).astype(np.float32))
        t_im_np = timeit(lambda: kernels_numpy.im2col(x, k, k, stride, pad), repeats)
        t_col_np = timeit(lambda: kernels_numpy.col2im(cols, h, h, k, k, stride, pad), repeats)
        if kernels_cy is not None:
            t_im_cy = timeit(lambda: kernels_cy.im2col(x, k, k, stride, pad), repeats)
            t_col_cy = timeit(lambda: kernels_cy.col2im(cols, h, h, k, k, stride, pad), repeats)
            print(f"{label:<22} {t_im_np:>9.3f}m {t_im_cy:>9.3f}m {t_col_np:>9.3f}m {t_col_cy:>9.3f}m")
        else:
            print(f"{label:<22} {t_im_np:>9.3f}m {'n/a':>10} {t_col_np:>9.3f}m {'n/a':>10}")


def bench_conv_roundtrip(repeats: int) -> None:
    """conv2d forward+backward through autodiff, once per backend.

    autodiff resolves kernels through the backend module's attributes, so
    swapping them re-routes the hot path without reimporting anything.
    """
    import garmentgan.backend as B
    from garmentgan import autodiff as ad

    rng = np.random.default_rng(1)
    x0 = rng.normal(size=(8, 16, 32, 32)).astype(np.float32)
    w0 = rng.normal(size=(32, 16, 3, 3)).astype(np.float32)
    saved = (B.im2col, B.col2im)

    def step():
        x = ad.Tensor(x0, requires_grad=True)
        w = ad.Tensor(w0.copy(), requires_grad=True)
        ad.total_sum(ad.conv2d(x, w, stride=1, pad=1)).backward()

    print("\nconv2d fwd+bwd (8x16x32x32 -> 32ch):")
    try:
        for impl_name, impl in (("numpy", kernels_numpy), ("cython", kernels_cy)):
            if impl is None:
                continue
            B.im2col, B.col2im = impl.im2col, impl.col2im
            print(f"  {impl_name:<8} {timeit(step, repeats):8.2f} ms")
    finally:
        B.im2col, B.col2im = saved


def bench_training_step(repeats: int) -> None:
    import os
    import subprocess
    import sys

    code = r"""
import time, tempfile, pathlib
import numpy as np
from garmentgan.backend import backend_name
from garmentgan.data import SyntheticSpec, generate_synthetic
from garmentgan.training import TrainConfig, train_reconstruction

tmp = pathlib.Path(tempfile.mkdtemp())
m = generate_synthetic(SyntheticSpec(image_size=64, n_images=16, n_collar_shapes=3), seed=1, out_dir=tmp)
cfg = TrainConfig.desk_scale(recon_iters=%d, adv_iters=0, seed=0)
t0 = time.time()
train_reconstruction(cfg, m)
dt = (time.time() - t0) / %d
print(f"  {backend_name():<8} {dt*1000:8.1f} ms/reconstruction step")
"""
    print("\nfull reconstruction training step (desk scale, batch 8):")
    for backend in ("cython", "numpy"):
        env = dict(os.environ, GARMENTGAN_KERNELS=backend)
        proc = subprocess.run([sys.executable, "-c", code % (repeats, repeats)], env=env, capture_output=True, text=True)
        out = proc.stdout.strip()
        if proc.returncode != 0 or not out:
            print(f"  {backend:<8} unavailable")
        else:
            print(out)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()
    if kernels_cy is None:
        print("note: compiled kernels not built; showing fallback only\n")
    bench_kernels(args.repeats)
    bench_conv_roundtrip(max(5, args.repeats // 2))
    bench_training_step(max(3, args.repeats // 5))


if __name__ == "__main__":
    main()
