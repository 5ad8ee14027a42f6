"""Dense linear baseline: 16 inputs -> 4 logits, no bias, softmax cross entropy.

The default weight matrix has 64 scalars. An optional boolean feature
mask freezes selected input rows at zero contribution; masking two
pixels leaves 14 x 4 = 56 effective parameters for anyone wanting that
exact budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

N_INPUTS = 16
N_OUTPUTS = 4


@dataclass
class DenseParams:
    """Weight matrix (16, 4) plus an optional active-input mask of length 16."""

    weights: np.ndarray
    feature_mask: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (N_INPUTS, N_OUTPUTS):
            raise ValueError(f"weights must be ({N_INPUTS}, {N_OUTPUTS})")
        if self.feature_mask is not None:
            self.feature_mask = np.asarray(self.feature_mask, dtype=bool)
            if self.feature_mask.shape != (N_INPUTS,):
                raise ValueError(f"feature_mask must have length {N_INPUTS}")

    @property
    def n_params(self) -> int:
        active = N_INPUTS if self.feature_mask is None else int(self.feature_mask.sum())
        return active * N_OUTPUTS

    def copy(self) -> "DenseParams":
        mask = None if self.feature_mask is None else self.feature_mask.copy()
        return DenseParams(self.weights.copy(), mask)


def _masked(x: np.ndarray, params: DenseParams) -> np.ndarray:
    return x if params.feature_mask is None else x * params.feature_mask


def nn_forward(features, params: DenseParams) -> np.ndarray:
    """Logits of one sample: masked features times the weight matrix."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (N_INPUTS,):
        raise ValueError(f"expected {N_INPUTS} features, got shape {x.shape}")
    return _masked(x, params) @ params.weights


def nn_grad(features, label: int, params: DenseParams) -> np.ndarray:
    """Exact d loss/d weights of one sample: outer(x, softmax(logits) - onehot)."""
    if not 0 <= label < N_OUTPUTS:
        raise ValueError(f"label {label} out of range for {N_OUTPUTS} classes")
    x = _masked(np.asarray(features, dtype=np.float64), params)
    delta = softmax(x @ params.weights)
    delta[label] -= 1.0
    return np.outer(x, delta)


def batch_logits(features: np.ndarray, params: DenseParams) -> np.ndarray:
    """Logits (B, 4) for a feature matrix (B, 16)."""
    return _masked(features, params) @ params.weights


def stacked_loss_grad(
    features: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    feature_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean loss (...,) and weight gradient (..., 16, 4) over stacked models.

    features: (..., B, 16); labels: (..., B); weights: (..., 16, 4).
    """
    x = features if feature_mask is None else features * feature_mask
    logits = x @ weights
    picked = np.take_along_axis(log_softmax(logits, axis=-1), labels[..., None], axis=-1)
    losses = -picked[..., 0].mean(axis=-1)
    delta = softmax(logits, axis=-1)
    delta -= labels[..., None] == np.arange(N_OUTPUTS)
    grad = np.swapaxes(x, -1, -2) @ delta / labels.shape[-1]
    return losses, grad


def batch_loss_grad(
    features: np.ndarray, labels, params: DenseParams
) -> tuple[float, np.ndarray]:
    """Mean cross entropy and mean weight gradient over a batch."""
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    x = np.asarray(features, dtype=np.float64)
    losses, grad = stacked_loss_grad(x, labels, params.weights, params.feature_mask)
    return float(losses), grad
