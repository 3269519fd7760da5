"""Pure numpy fallback for the softmax-policy kernels in ``_kernels.pyx``."""

from __future__ import annotations

import numpy as np


def log_softmax_scores(feats: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Log-softmax of ``feats @ weights`` over the rows of ``feats``."""
    scores = feats @ weights
    top = scores.max()
    shifted = scores - top
    return shifted - np.log(np.exp(shifted).sum())


def segment_replay(feats: np.ndarray, offsets: np.ndarray, chosen: np.ndarray,
                   weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-step log-prob of the chosen row and its gradient w.r.t. ``weights``.

    Step ``i`` owns candidate rows ``offsets[i]:offsets[i+1]``; ``chosen[i]``
    indexes within that block. The gradient row is
    ``feats[chosen] - sum_a softmax_a * feats[a]``.
    """
    n = len(offsets) - 1
    d = feats.shape[1]
    logp = np.empty(n)
    grad = np.empty((n, d))
    scores = feats @ weights
    for i in range(n):
        lo, hi = offsets[i], offsets[i + 1]
        s = scores[lo:hi]
        top = s.max()
        e = np.exp(s - top)
        z = e.sum()
        logp[i] = s[chosen[i]] - top - np.log(z)
        grad[i] = feats[lo + chosen[i]] - (e / z) @ feats[lo:hi]
    return logp, grad
