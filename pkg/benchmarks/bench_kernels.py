#!/usr/bin/env python3
"""Time the numba kernels against the pure numpy/scipy fallbacks.

Run: python benchmarks/bench_kernels.py [--repeats N]

Both backends are imported directly (ignoring VLMPROBE_KERNELS) so the same
process measures the two paths on identical inputs. The first numba call per
kernel compiles; a warmup round keeps that out of the timings.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from vlmprobe.kernels import _numba, _numpy

rng = np.random.default_rng(0)


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    img = rng.integers(0, 256, size=(448, 448), dtype=np.uint8)
    tile = rng.integers(0, 256, size=(20, 100), dtype=np.uint8)
    binary = (rng.random((224, 224)) < 0.1).astype(np.uint8)
    codes_a = rng.integers(48, 58, size=64, dtype=np.uint32)
    codes_b = rng.integers(48, 58, size=64, dtype=np.uint32)

    cases = [
        ("box_downsample 448->64", lambda m: m.box_downsample_to(img, 64, 64)),
        ("box_downsample tile 20x100->8x40", lambda m: m.box_downsample_to(tile, 8, 40)),
        ("nn_scale 448->896", lambda m: m.nn_scale_to(img, 896, 896)),
        ("nn_upsample_frac x5.5", lambda m: m.nn_upsample_frac(tile, 11, 2, 110, 550)),
        ("label_components 224x224", lambda m: m.label_components(binary)),
        ("gpm_match_total 64x64 chars x100", lambda m: [m.gpm_match_total(codes_a, codes_b) for _ in range(100)]),
    ]

    # warmup (also: compile the numba path)
    for _, fn in cases:
        fn(_numba)
        fn(_numpy)

    print(f"{'kernel':40s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, fn in cases:
        t_nb = _time(lambda: fn(_numba), args.repeats)
        t_np = _time(lambda: fn(_numpy), args.repeats)
        print(f"{name:40s} {t_nb * 1e3:9.3f}ms {t_np * 1e3:9.3f}ms {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
