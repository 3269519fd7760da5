"""Kernel selection: the compiled extension when built, else the numpy fallback.

Set ``NOISERL_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("NOISERL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py


def log_softmax_scores(feats, weights) -> np.ndarray:
    return _impl.log_softmax_scores(np.ascontiguousarray(feats, dtype=np.float64),
                                    np.ascontiguousarray(weights, dtype=np.float64))


def segment_replay(feats, offsets, chosen, weights) -> tuple[np.ndarray, np.ndarray]:
    return _impl.segment_replay(np.ascontiguousarray(feats, dtype=np.float64),
                                np.ascontiguousarray(offsets, dtype=np.int64),
                                np.ascontiguousarray(chosen, dtype=np.int64),
                                np.ascontiguousarray(weights, dtype=np.float64))
