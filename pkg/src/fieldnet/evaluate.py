"""Clip-level evaluation: interlace a progressive clip, deinterlace each
interior field position, and score the results against the original frames.

The first and last two positions are excluded because their 5-field windows
contain replicate-clamped duplicates; the report records how many were
skipped. Evaluation is pure per frame, so positions can be scored by a
thread pool when ``workers`` > 1 with results kept in index order.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .baselines import BASELINE_NAMES, deinterlace_baseline
from .errors import DataError
from .fields import make_window, synth_interlaced
from .metrics import FrameMetrics, psnr, ssim, write_metric_csv
from .model import deinterlace_frame

EDGE_EXCLUSION = 2


@dataclass(frozen=True)
class MetricReport:
    frames: tuple
    mean_psnr: float
    mean_ssim: float
    excluded_edge_frames: int


def model_estimator(weights, config=None):
    """(stream, index) -> Frame using the trained network."""
    def estimate(stream, index):
        return deinterlace_frame(make_window(stream, index), weights,
                                 config=config)
    return estimate


def baseline_estimator(method):
    if method not in BASELINE_NAMES:
        raise DataError(f"unknown baseline {method!r}")
    def estimate(stream, index):
        return deinterlace_baseline(stream, index, method)
    return estimate


def ground_truth_estimator(clip):
    """Returns the original progressive frame; for metric self-checks."""
    def estimate(stream, index):
        return clip[index]
    return estimate


def eval_clip(estimator, clip, report_path=None, workers=1):
    """Score one progressive clip; optionally write the metric CSV."""
    n = len(clip)
    if n < 2 * EDGE_EXCLUSION + 1:
        raise DataError(
            f"clip of {n} frames is too short to evaluate, need at least "
            f"{2 * EDGE_EXCLUSION + 1}")
    stream = synth_interlaced(clip)
    centers = list(range(EDGE_EXCLUSION, n - EDGE_EXCLUSION))

    def score(i):
        out = estimator(stream, i)
        gt = clip[i].pixels
        return FrameMetrics(i, psnr(gt, out.pixels), ssim(gt, out.pixels))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(score, centers))
    else:
        rows = [score(i) for i in centers]

    if report_path is not None:
        mean_psnr, mean_ssim = write_metric_csv(report_path, rows)
    else:
        mean_psnr = sum(r.psnr_db for r in rows) / len(rows)
        mean_ssim = sum(r.ssim for r in rows) / len(rows)
    return MetricReport(frames=tuple(rows), mean_psnr=mean_psnr,
                        mean_ssim=mean_ssim,
                        excluded_edge_frames=2 * EDGE_EXCLUSION)


def eval_clips(estimator, clips, workers=1):
    """Mean PSNR/SSIM across several clips, weighting each frame equally."""
    all_rows = []
    for clip in clips:
        report = eval_clip(estimator, clip, workers=workers)
        all_rows.extend(report.frames)
    mean_psnr = sum(r.psnr_db for r in all_rows) / len(all_rows)
    mean_ssim = sum(r.ssim for r in all_rows) / len(all_rows)
    return mean_psnr, mean_ssim
