"""Kernel backend selection.

Hot inner loops exist twice: numba ``@njit`` kernels in ``_numba`` and a pure
numpy/scipy path in ``_numpy``. Selection is driven by the VLMPROBE_KERNELS
environment variable:

    VLMPROBE_KERNELS=numba   force the compiled path (error if unavailable)
    VLMPROBE_KERNELS=numpy   force the fallback path
    unset / auto             numba when importable, else numpy

``benchmarks/bench_kernels.py`` times both paths side by side.
"""

from __future__ import annotations

import os

import numpy as np

from . import _numpy

_mode = os.environ.get("VLMPROBE_KERNELS", "auto").lower()

if _mode not in ("auto", "numba", "numpy"):
    raise ValueError(f"VLMPROBE_KERNELS must be auto|numba|numpy, got {_mode!r}")

if _mode == "numpy":
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl  # noqa: F401

        BACKEND = "numba"
    except ImportError:
        if _mode == "numba":
            raise
        _impl = _numpy
        BACKEND = "numpy"

box_downsample_to = _impl.box_downsample_to
nn_scale_to = _impl.nn_scale_to
nn_upsample_frac = _impl.nn_upsample_frac
gpm_match_total = _impl.gpm_match_total


def label_components(binary: np.ndarray) -> np.ndarray:
    """Canonical 8-connected labels: renumbered by first raster-order pixel.

    Both backends produce valid labelings with backend-specific numbering;
    canonicalization makes the output identical across them.
    """
    raw = _impl.label_components(np.ascontiguousarray(binary, dtype=np.uint8))
    flat = raw.ravel()
    fg = flat > 0
    if not fg.any():
        return raw
    labels, first = np.unique(flat[fg], return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.zeros(int(labels.max()) + 1, dtype=np.int32)
    remap[labels[order]] = np.arange(1, len(labels) + 1, dtype=np.int32)
    return remap[raw]
