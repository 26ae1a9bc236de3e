"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from liftfuse import kernels
from liftfuse.consistency import full_grid_layout


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    layout = full_grid_layout((16, 16, 8), 4)
    keys, bc = layout.keys, layout.batch_coords()
    table = kernels.python_backend.neighbor_table(keys, bc, layout.grid_shape, 3, 1)
    feats = rng.normal(size=(len(keys), 16))
    cols = rng.normal(size=(len(keys), 27 * 16))
    seg = np.sort(rng.integers(0, len(keys) // 8, size=len(keys)))
    pix = rng.integers(0, 64 * 64, size=100_000)
    depth = rng.random(100_000)
    return {
        "neighbor_table": lambda b: b.neighbor_table(keys, bc, layout.grid_shape, 3, 1),
        "gather_rows": lambda b: b.gather_rows(feats, table),
        "scatter_rows": lambda b: b.scatter_rows(cols, table, len(keys)),
        "segment_max": lambda b: b.segment_max(feats, seg, len(keys) // 8),
        "zbuffer": lambda b: b.zbuffer(pix, depth, 64 * 64),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if kernels.compiled_backend is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'python [ms]':>12}{'compiled [ms]':>15}{'speedup':>9}")
    for name, fn in cases(rng).items():
        tp = best_of(lambda: fn(kernels.python_backend), args.repeat)
        tc = best_of(lambda: fn(kernels.compiled_backend), args.repeat)
        print(f"{name:<16}{tp * 1e3:>12.2f}{tc * 1e3:>15.2f}{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
