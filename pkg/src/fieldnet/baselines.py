"""Non-learned deinterlacing baselines.

Each baseline estimates the missing opposite-parity field for the field at
one stream index, then weaves it with the reference:

- ``bob``: copy the reference field (line doubling).
- ``linear``: vertical average of the two reference rows bracketing each
  missing row, replicating the reference edge row where only one exists.
- ``weave``: copy the nearest opposite-parity field in time, preferring
  the next field over the previous one.
- ``temporal_mean``: average of the previous and next fields; at stream
  ends the single existing neighbor is used alone.
"""

import numpy as np

from .errors import DataError
from .fields import PARITY_EVEN, weave

BASELINE_NAMES = ("bob", "linear", "weave", "temporal_mean")


def _indicator_for(field):
    return 1 if field.parity == PARITY_EVEN else 0


def _bob(stream, index):
    return stream.fields[index].pixels.copy()


def _linear(stream, index):
    ref = stream.fields[index].pixels
    est = np.empty_like(ref)
    if _indicator_for(stream.fields[index]) == 0:
        # missing rows sit below each reference row; bottom edge replicates
        est[:, :-1] = 0.5 * (ref[:, :-1] + ref[:, 1:])
        est[:, -1] = ref[:, -1]
    else:
        est[:, 1:] = 0.5 * (ref[:, :-1] + ref[:, 1:])
        est[:, 0] = ref[:, 0]
    return est


def _weave(stream, index):
    neighbor = index + 1 if index + 1 < len(stream) else index - 1
    if neighbor < 0:
        raise DataError("weave baseline needs at least two fields")
    return stream.fields[neighbor].pixels.copy()


def _temporal_mean(stream, index):
    neighbors = [j for j in (index - 1, index + 1) if 0 <= j < len(stream)]
    if not neighbors:
        raise DataError("temporal_mean baseline needs at least two fields")
    acc = np.zeros_like(stream.fields[index].pixels, dtype=np.float64)
    for j in neighbors:
        acc += stream.fields[j].pixels
    return (acc / len(neighbors)).astype(stream.fields[index].pixels.dtype)


_METHODS = {"bob": _bob, "linear": _linear, "weave": _weave,
            "temporal_mean": _temporal_mean}


def estimate_field(stream, index, method):
    """Estimated opposite-parity field pixels [3, h, w] for one index."""
    if method not in _METHODS:
        raise DataError(f"unknown baseline {method!r}, expected one of "
                        f"{BASELINE_NAMES}")
    return np.clip(_METHODS[method](stream, index), 0.0, 1.0)


def deinterlace_baseline(stream, index, method):
    """Full progressive frame from one baseline at one stream index."""
    ref = stream.fields[index]
    est = estimate_field(stream, index, method)
    return weave(ref, est, _indicator_for(ref))
