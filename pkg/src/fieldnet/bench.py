"""Timing and memory benchmark for the two attention variants.

For each requested pixel count n the attention module runs in quadratic
(``sa``) and linear (``esa``) mode on the same random feature map; the
benchmark records median wall time over repeats, the largest transient
allocation, and the elementwise deviation between the two attention terms.
A log-log fit of time against n gives each mode's scaling exponent.
"""

import csv
import time
from dataclasses import dataclass

import numpy as np

from .attention import SAModule, attention_deviation
from .autograd import Tensor, no_grad, track_allocations
from .blocks import ParamStore
from .errors import DataError

BENCH_CSV_HEADER = ("mode", "n", "seconds", "peak_bytes", "deviation")
DEFAULT_SIZES = (1024, 2048, 4096)


@dataclass(frozen=True)
class BenchRow:
    mode: str
    n: int
    seconds: float
    peak_bytes: int
    deviation: float


@dataclass(frozen=True)
class BenchResult:
    rows: tuple
    sa_exponent: float
    esa_exponent: float


def _grid_for(n):
    h = int(np.sqrt(n))
    while h > 1 and n % h != 0:
        h -= 1
    return h, n // h


def fit_exponent(sizes, times):
    """Least-squares slope of log(time) against log(n)."""
    return float(np.polyfit(np.log(np.asarray(sizes, dtype=np.float64)),
                            np.log(np.asarray(times, dtype=np.float64)), 1)[0])


def bench_attention(sizes=DEFAULT_SIZES, channels=64, qk_channels=8, seed=0,
                    repeats=3):
    """BenchResult over ``sizes``; two rows (sa, esa) per size."""
    if not sizes:
        raise DataError("bench needs at least one size")
    rng = np.random.default_rng(seed)
    store = ParamStore()
    module = SAModule(store, "bench", channels, qk_channels, rng, np.float32)
    # a zero scale would skip no work, but make the deviation metric
    # meaningful by giving the attention term nonzero weight
    module.scale.data = np.asarray(0.5, dtype=np.float32)

    rows = []
    times = {"sa": [], "esa": []}
    for n in sizes:
        h, w = _grid_for(n)
        feat = rng.standard_normal((channels, h, w)).astype(np.float32)
        x = Tensor(feat)
        with no_grad():
            max_abs, _rel = attention_deviation(x, module)
        for mode in ("sa", "esa"):
            with no_grad():
                module.forward(x, mode=mode)  # warmup
                samples = []
                peak = 0
                for _ in range(repeats):
                    with track_allocations() as tracker:
                        t0 = time.perf_counter()
                        module.forward(x, mode=mode)
                        samples.append(time.perf_counter() - t0)
                    peak = max(peak, tracker.peak)
            seconds = float(np.median(samples))
            times[mode].append(seconds)
            rows.append(BenchRow(mode, n, seconds, peak, float(max_abs)))
    return BenchResult(rows=tuple(rows),
                       sa_exponent=fit_exponent(sizes, times["sa"]),
                       esa_exponent=fit_exponent(sizes, times["esa"]))


def write_bench_csv(path, result):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(BENCH_CSV_HEADER)
        for r in result.rows:
            writer.writerow([r.mode, r.n, f"{r.seconds:.6f}", r.peak_bytes,
                             f"{r.deviation:.6e}"])


def read_bench_csv(path):
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != BENCH_CSV_HEADER:
            raise DataError(f"{path}: unexpected bench header {header}")
        for rec in reader:
            rows.append(BenchRow(rec[0], int(rec[1]), float(rec[2]),
                                 int(rec[3]), float(rec[4])))
    return rows
