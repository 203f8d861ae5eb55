"""Benchmark the numba kernels against their pure-numpy twins.

Runs every hot kernel in both implementations on representative shapes
(training crops, full-field inference, the widest fusion input), checks
that the results agree, and prints a timing table.  Run it the same way
regardless of the FIELDNET_BACKEND setting; both modules are imported
directly.

Usage: ``python3 -m fieldnet.backend_bench [--repeats N] [--csv PATH]``
"""

import argparse
import csv
import time

import numpy as np

from . import kernels_numba, kernels_numpy

# (label, channels, height, width)
SHAPES = (
    ("train-crop", 64, 8, 16),
    ("field", 64, 32, 64),
    ("fusion", 320, 32, 64),
)


def _time(fn, args, repeats):
    fn(*args)  # warmup / JIT
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def _cases(c, h, w, rng):
    x = rng.standard_normal((c, h, w)).astype(np.float32)
    grad_cols = rng.standard_normal((c * 9, h * w)).astype(np.float32)
    offsets = rng.uniform(-2, 2, (18, h, w)).astype(np.float32)
    return [
        ("im2col", "im2col", (x, 3, 1, 1)),
        ("col2im", "col2im", (grad_cols, c, h, w, 3, 1, 1)),
        ("deform_im2col", "deform_im2col", (x, offsets, 3)),
        ("deform_col2im_input", "deform_col2im_input",
         (grad_cols, c, h, w, offsets, 3)),
        ("deform_col2im_offsets", "deform_col2im_offsets",
         (grad_cols, x, offsets, 3)),
    ]


def run(repeats=5, seed=0):
    """Rows of (shape_label, kernel, numba_s, numpy_s, speedup, max_diff)."""
    rng = np.random.default_rng(seed)
    rows = []
    for label, c, h, w in SHAPES:
        for name, attr, args in _cases(c, h, w, rng):
            fn_nb = getattr(kernels_numba, attr)
            fn_np = getattr(kernels_numpy, attr)
            diff = float(np.abs(np.asarray(fn_nb(*args), dtype=np.float64)
                                - np.asarray(fn_np(*args), dtype=np.float64)).max())
            t_nb = _time(fn_nb, args, repeats)
            t_np = _time(fn_np, args, repeats)
            rows.append((label, name, t_nb, t_np, t_np / t_nb, diff))
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="compare numba kernels with the pure-numpy fallback")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--csv", default=None)
    args = parser.parse_args(argv)

    rows = run(repeats=args.repeats)
    header = ("shape", "kernel", "numba_s", "numpy_s", "speedup", "max_diff")
    print(f"{'shape':<12} {'kernel':<22} {'numba':>10} {'numpy':>10} "
          f"{'speedup':>8} {'max_diff':>10}")
    for label, name, t_nb, t_np, speedup, diff in rows:
        print(f"{label:<12} {name:<22} {t_nb * 1e6:>8.1f}us {t_np * 1e6:>8.1f}us "
              f"{speedup:>7.2f}x {diff:>10.2e}")
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for label, name, t_nb, t_np, speedup, diff in rows:
                writer.writerow([label, name, f"{t_nb:.6e}", f"{t_np:.6e}",
                                 f"{speedup:.3f}", f"{diff:.3e}"])


if __name__ == "__main__":
    main()
