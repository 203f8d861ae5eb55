"""Frame quality metrics and their CSV serialization.

PSNR is computed on [0,1] RGB with a dynamic range of 1, so identical
frames yield infinity (serialized as ``inf``). SSIM uses the standard
11x11 Gaussian window with sigma 1.5 and stability constants K1=0.01,
K2=0.03; local statistics come from valid-mode windows only, per channel,
then the per-channel means are averaged.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 1.0

CSV_HEADER = ("frame_index", "psnr_db", "ssim")
MEAN_ROW_LABEL = "mean"


def _check_pair(ref, test):
    ref = np.asarray(ref)
    test = np.asarray(test)
    if ref.shape != test.shape:
        raise ShapeError(f"metric inputs differ: {ref.shape} vs {test.shape}")
    if ref.ndim != 3 or ref.shape[0] != 3:
        raise ShapeError(f"metric inputs must be [3, h, w], got {ref.shape}")
    return ref.astype(np.float64), test.astype(np.float64)


def psnr(ref, test):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    ref, test = _check_pair(ref, test)
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DYNAMIC_RANGE ** 2 / mse)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _filter_valid(plane, kernel):
    windows = sliding_window_view(plane, kernel.shape)
    return np.einsum("hwij,ij->hw", windows, kernel)


def ssim(ref, test):
    """Mean structural similarity over valid windows, averaged over channels."""
    ref, test = _check_pair(ref, test)
    size = SSIM_WINDOW
    if ref.shape[1] < size or ref.shape[2] < size:
        raise ShapeError(
            f"frames must be at least {size}x{size} for SSIM, got "
            f"{ref.shape[1]}x{ref.shape[2]}")
    kernel = gaussian_window()
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    channel_means = []
    for ch in range(3):
        x, y = ref[ch], test[ch]
        mu_x = _filter_valid(x, kernel)
        mu_y = _filter_valid(y, kernel)
        var_x = _filter_valid(x * x, kernel) - mu_x ** 2
        var_y = _filter_valid(y * y, kernel) - mu_y ** 2
        cov = _filter_valid(x * y, kernel) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
        channel_means.append(float(np.mean(num / den)))
    return float(np.mean(channel_means))


@dataclass(frozen=True)
class FrameMetrics:
    frame_index: int
    psnr_db: float
    ssim: float


def _fmt(value):
    # "%.6f" renders infinity as the bare "inf" sentinel required in CSVs
    return f"{value:.6f}"


def write_metric_csv(path, rows):
    """Per-frame rows followed by a ``mean`` summary row; returns the means."""
    mean_psnr = float(np.mean([r.psnr_db for r in rows])) if rows else math.nan
    mean_ssim = float(np.mean([r.ssim for r in rows])) if rows else math.nan
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow([r.frame_index, _fmt(r.psnr_db), _fmt(r.ssim)])
        writer.writerow([MEAN_ROW_LABEL, _fmt(mean_psnr), _fmt(mean_ssim)])
    return mean_psnr, mean_ssim


def read_metric_csv(path):
    """(per-frame rows, mean_psnr, mean_ssim) parsed back from disk."""
    rows = []
    mean_psnr = mean_ssim = None
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for rec in reader:
            if rec[0] == MEAN_ROW_LABEL:
                mean_psnr, mean_ssim = float(rec[1]), float(rec[2])
            else:
                rows.append(FrameMetrics(int(rec[0]), float(rec[1]),
                                         float(rec[2])))
    return rows, mean_psnr, mean_ssim
