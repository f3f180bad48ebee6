#!/usr/bin/env python3
"""Benchmark the numba kernel backend against the pure-numpy fallback.

Times the convolution gather/scatter kernels at the regressor's real layer
shapes, the pooling ops, and an end-to-end forward/backward training step.
Select what production code uses via the DENSECOUNT_BACKEND environment
variable; this script measures both regardless.

Usage:
    python benchmarks/bench_kernels.py [--image-size 64] [--batch 16] [--repeats 3]
"""

import argparse
import time

import numpy as np

from densecount import kernels, model, nn
from densecount.source_training import _loss_and_grads


def timeit(fn, repeats: int) -> float:
    fn()  # warm-up (JIT compile, page-in)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(name: str, image_size: int, batch: int, repeats: int) -> dict[str, float]:
    kernels.set_backend(name)
    rng = np.random.default_rng(0)
    results = {}

    # Gather/scatter at the widest decoder layer (512 channels at 1/4 scale).
    side = image_size // 4
    xp = rng.random((512, side + 2, side + 2), dtype=np.float32)
    results["im2col 512ch"] = timeit(lambda: kernels.im2col(xp, 3, 3), repeats)
    gcols = rng.random((512 * 9, side * side), dtype=np.float32)
    results["col2im 512ch"] = timeit(
        lambda: kernels.col2im_add(gcols, 512, side + 2, side + 2, 3, 3), repeats
    )

    x = rng.random((batch, 32, image_size, image_size), dtype=np.float32)
    results["maxpool 32ch"] = timeit(lambda: kernels.maxpool2x2(x), repeats)

    w = rng.normal(size=(64, 32, 3, 3)).astype(np.float32) * 0.1
    b = np.zeros(64, dtype=np.float32)
    half = x[:, :, : image_size // 2, : image_size // 2]
    results["conv 32->64"] = timeit(lambda: nn.conv2d(half, w, b), repeats)
    gy = rng.normal(size=(batch, 64, image_size // 2, image_size // 2)).astype(np.float32)
    results["conv bwd"] = timeit(lambda: nn.conv2d_backward(half, w, gy), repeats)

    params = model.init_drm(0)
    imgs = rng.random((batch, 1, image_size, image_size), dtype=np.float32)
    targets = rng.random((batch, image_size, image_size), dtype=np.float32) * 0.02
    results["drm fwd"] = timeit(
        lambda: model.decode_batch(params.decoder, model.encode_batch(params.encoder, imgs)), repeats
    )
    results["train step"] = timeit(lambda: _loss_and_grads(params, imgs, targets), repeats)
    return results


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--image-size", type=int, default=64, help="square image side (default 64)")
    parser.add_argument("--batch", type=int, default=16)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = ["numpy"] + (["numba"] if "numba" in kernels._BACKENDS else [])
    previous = kernels.get_backend()
    try:
        timings = {name: bench_backend(name, args.image_size, args.batch, args.repeats)
                   for name in backends}
    finally:
        kernels.set_backend(previous)

    ops = list(next(iter(timings.values())))
    header = f"{'op':<14}" + "".join(f"{name:>12}" for name in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(f"image {args.image_size}x{args.image_size}, batch {args.batch}, best of {args.repeats}")
    print(header)
    for op in ops:
        row = f"{op:<14}" + "".join(f"{timings[name][op] * 1e3:>10.1f}ms" for name in backends)
        if len(backends) == 2:
            row += f"{timings['numpy'][op] / timings['numba'][op]:>9.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
