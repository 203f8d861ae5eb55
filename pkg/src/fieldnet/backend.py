"""Kernel backend selection.

The hot inner kernels exist twice: numba-compiled (``kernels_numba``) and
pure numpy (``kernels_numpy``).  The env var ``FIELDNET_BACKEND`` forces one:

    FIELDNET_BACKEND=numpy   pure-numpy fallback
    FIELDNET_BACKEND=numba   numba kernels (error if numba is unavailable)

Unset, numba is used when it imports cleanly.  ``python -m fieldnet.backend_bench``
compares the two.
"""

import os

_choice = os.environ.get("FIELDNET_BACKEND", "").strip().lower()
if _choice not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"FIELDNET_BACKEND must be 'numba' or 'numpy', got {_choice!r}")

if _choice == "numpy":
    from . import kernels_numpy as _k
    BACKEND = "numpy"
elif _choice == "numba":
    from . import kernels_numba as _k
    BACKEND = "numba"
else:
    try:
        from . import kernels_numba as _k
        BACKEND = "numba"
    except ImportError:
        from . import kernels_numpy as _k
        BACKEND = "numpy"

conv_out_size = _k.conv_out_size
im2col = _k.im2col
col2im = _k.col2im
deform_im2col = _k.deform_im2col
deform_col2im_input = _k.deform_col2im_input
deform_col2im_offsets = _k.deform_col2im_offsets
bilinear_sample_one = _k.bilinear_sample_one


def active_backend():
    return BACKEND
