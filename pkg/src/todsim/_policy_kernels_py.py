"""Pure-numpy policy kernels: the fallback backend for todsim.kernels.

Semantics must match todsim._policy_kernels (the Cython build) exactly up to
floating-point associativity; the dispatch module treats the two as
interchangeable.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def softmax_probs(weights: np.ndarray, feature_idx: np.ndarray) -> np.ndarray:
    """Token distribution for binary features: softmax(weights[:, idx].sum(1))."""
    if feature_idx.size:
        logits = weights[:, feature_idx].sum(axis=1)
    else:
        logits = np.zeros(weights.shape[0])
    logits -= logits.max()
    probs = np.exp(logits)
    probs /= probs.sum()
    return probs


def sample_index(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw: first index whose cumulative mass exceeds u."""
    acc = 0.0
    last = len(probs) - 1
    for i in range(last):
        acc += probs[i]
        if u < acc:
            return i
    return last


def accumulate_grad(
    grad: np.ndarray,
    probs: np.ndarray,
    chosen: int,
    feature_idx: np.ndarray,
    coeff: float,
) -> None:
    """Add coeff * (onehot(chosen) - probs) x features^T into grad, in place."""
    if not feature_idx.size:
        return
    delta = -coeff * probs
    delta[chosen] += coeff
    grad[:, feature_idx] += delta[:, None]
