"""Benchmark the compiled kernel core against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--image-size 640x480] [--repeats 5]

Each op runs on both backends; results are checked for bit-equality before
timings are reported.
"""

import argparse
import time

import numpy as np

from pobf.kernels import load_backend


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def random_boxes(rng, n):
    return np.column_stack([
        rng.uniform(0, 640, n), rng.uniform(0, 480, n),
        rng.uniform(1, 300, n), rng.uniform(1, 300, n),
    ])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--image-size", default="640x480")
    parser.add_argument("--boxes", type=int, default=200_000,
                        help="box pairs for the IoU benchmarks")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    width, height = (int(v) for v in args.image_size.split("x"))

    backends = {}
    for name in ("native", "python"):
        try:
            backends[name] = load_backend(name)
        except ImportError:
            print(f"backend {name!r} unavailable, skipping")
    if len(backends) < 2:
        print("need both backends for a comparison; build the extension first")

    rng = np.random.default_rng(0)
    a = random_boxes(rng, args.boxes)
    b = random_boxes(rng, args.boxes)
    scalar_args = [tuple(a[i]) + tuple(b[i]) for i in range(0, args.boxes, args.boxes // 2000)]
    img = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    src = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    mask = np.zeros((height, width), dtype=np.uint8)
    rect = (width // 4, height // 4, 3 * width // 4, 3 * height // 4)

    ops = {}
    for name, impl in backends.items():
        work_img = img.copy()
        work_mask = mask.copy()
        impl.fill_outside(work_mask, *rect)
        ops[name] = {
            "iou scalar x2000": lambda impl=impl: [impl.iou_cwh(*sa) for sa in scalar_args],
            f"iou_pairs x{args.boxes}": lambda impl=impl: impl.iou_pairs(a, b),
            f"fill_outside {width}x{height}": lambda impl=impl, m=work_mask: impl.fill_outside(m, *rect),
            f"zero_rect {width}x{height}": lambda impl=impl, i=work_img: impl.zero_rect(i, *rect),
            f"restore_where_keep {width}x{height}": lambda impl=impl, i=work_img, m=work_mask: impl.restore_where_keep(i, src, m),
        }

    if len(backends) == 2:
        nat, py = backends["native"], backends["python"]
        assert np.array_equal(nat.iou_pairs(a, b), py.iou_pairs(a, b)), "backends disagree"
        print("bit-equality check: OK\n")

    names = list(next(iter(ops.values())).keys())
    header = f"{'op':<34}" + "".join(f"{be:>14}" for be in ops)
    if len(ops) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for op_name in names:
        times = {be: timeit(ops[be][op_name], args.repeats) for be in ops}
        row = f"{op_name:<34}" + "".join(f"{times[be] * 1e3:>12.3f}ms" for be in times)
        if len(times) == 2:
            row += f"{times['python'] / times['native']:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
