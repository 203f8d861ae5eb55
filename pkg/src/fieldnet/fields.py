"""Fields, frames, windows, and synthetic interlacing.

Conventions used throughout the package:

* Pixels are float arrays ``[3, H, W]`` with values in [0, 1].
* The "odd" field of a frame holds the 1-based odd scan lines, i.e. the
  rows at 0-based even indices; the "even" field holds the rest.
* A clip interlaced from a progressive source takes the odd field from
  even-indexed frames and the even field from odd-indexed frames, so field
  parities alternate O, E, O, E, ...
* The indicator bit of a window is 1 exactly when the reference (center)
  field is an even field.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError

PARITY_ODD = "O"
PARITY_EVEN = "E"


def _check_pixels(pixels, what):
    if pixels.ndim != 3 or pixels.shape[0] != 3:
        raise ShapeError(f"{what} pixels must be [3,H,W], got {pixels.shape}")
    lo, hi = float(pixels.min()), float(pixels.max())
    if lo < 0.0 or hi > 1.0:
        raise DataError(f"{what} pixels outside [0,1]: min={lo:.4g} max={hi:.4g}")


@dataclass(frozen=True)
class Frame:
    """Progressive frame; height must be even so it splits cleanly."""

    pixels: np.ndarray

    def __post_init__(self):
        _check_pixels(self.pixels, "frame")
        if self.height % 2 != 0:
            raise ShapeError(f"frame height must be even, got {self.height}")

    @property
    def height(self):
        return self.pixels.shape[1]

    @property
    def width(self):
        return self.pixels.shape[2]


@dataclass(frozen=True)
class Field:
    """Half-height field tagged with the parity of the lines it carries."""

    parity: str
    pixels: np.ndarray

    def __post_init__(self):
        if self.parity not in (PARITY_ODD, PARITY_EVEN):
            raise DataError(f"parity must be 'O' or 'E', got {self.parity!r}")
        _check_pixels(self.pixels, "field")

    @property
    def height(self):
        return self.pixels.shape[1]

    @property
    def width(self):
        return self.pixels.shape[2]


@dataclass(frozen=True)
class FieldWindow:
    """Five consecutive fields centered on the reference at index 2."""

    fields: tuple
    indicator: int
    reference_index: int = 2

    def __post_init__(self):
        if len(self.fields) != 5:
            raise ShapeError(f"window needs 5 fields, got {len(self.fields)}")
        center = self.fields[2]
        want = 1 if center.parity == PARITY_EVEN else 0
        if self.indicator != want:
            raise DataError(
                f"indicator {self.indicator} inconsistent with center parity "
                f"{center.parity}")

    @property
    def reference(self):
        return self.fields[2]


@dataclass
class ClipStream:
    """Interlaced field sequence with per-field provenance.

    ``gt_fields`` holds the opposite-parity field of each source frame when
    the stream came from a progressive clip (supervision targets); streams
    read from disk carry ``None``.
    """

    fields: list
    source_index: list
    gt_fields: list = field(default=None)

    def __len__(self):
        return len(self.fields)


def parity_for_index(i):
    return PARITY_ODD if i % 2 == 0 else PARITY_EVEN


def split_fields(frame):
    """Split a progressive frame into its (odd, even) fields."""
    odd = Field(PARITY_ODD, frame.pixels[:, 0::2])
    even = Field(PARITY_EVEN, frame.pixels[:, 1::2])
    return odd, even


def weave(ref, est, indicator):
    """Interleave the reference field with an estimated opposite field.

    ``est`` may be a Field or a raw [3,h,w] array.  indicator 0 puts the
    reference on the 0-based even rows (odd scan lines), indicator 1 on the
    0-based odd rows.
    """
    est_pixels = est.pixels if isinstance(est, Field) else np.asarray(est)
    if isinstance(est, Field):
        if est.parity == ref.parity:
            raise DataError("weave needs fields of complementary parity")
    if est_pixels.shape != ref.pixels.shape:
        raise ShapeError(
            f"weave: field shapes {ref.pixels.shape} vs {est_pixels.shape}")
    want = 1 if ref.parity == PARITY_EVEN else 0
    if indicator != want:
        raise DataError(
            f"indicator {indicator} inconsistent with reference parity {ref.parity}")
    h2, w = ref.pixels.shape[1:]
    out = np.empty((3, 2 * h2, w), dtype=ref.pixels.dtype)
    if indicator == 0:
        out[:, 0::2] = ref.pixels
        out[:, 1::2] = est_pixels
    else:
        out[:, 1::2] = ref.pixels
        out[:, 0::2] = est_pixels
    return Frame(out)


def synth_interlaced(clip):
    """Interlace a progressive clip: one field per frame, alternating parity.

    Keeps the opposite-parity field of each frame alongside as the
    supervision target.
    """
    if not clip:
        raise DataError("cannot interlace an empty clip")
    shape = clip[0].pixels.shape
    for i, f in enumerate(clip):
        if f.pixels.shape != shape:
            raise ShapeError(
                f"frame {i} has shape {f.pixels.shape}, expected {shape}")
    fields, gts = [], []
    for i, f in enumerate(clip):
        odd, even = split_fields(f)
        if i % 2 == 0:
            fields.append(odd)
            gts.append(even)
        else:
            fields.append(even)
            gts.append(odd)
    return ClipStream(fields=fields, source_index=list(range(len(clip))),
                      gt_fields=gts)


def make_window(stream, center):
    """Build the 5-field window around ``center``, replicate-clamped at edges.

    Clamped duplicates keep their own parity tags, so edge windows may not
    alternate parity strictly.
    """
    n = len(stream)
    if n == 0:
        raise DataError("cannot window an empty stream")
    if not 0 <= center < n:
        raise DataError(f"window center {center} outside stream of length {n}")
    idx = [min(max(center + d, 0), n - 1) for d in (-2, -1, 0, 1, 2)]
    fields = tuple(stream.fields[i] for i in idx)
    indicator = 1 if fields[2].parity == PARITY_EVEN else 0
    return FieldWindow(fields=fields, indicator=indicator)
