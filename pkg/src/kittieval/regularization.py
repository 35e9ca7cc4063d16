"""Detection losses and an inverted-dropout kernel.

All logarithms are natural. Probabilities that hit the log singularity raise
:class:`DomainError` unless ``clamp=True``, which floors them at ``EPS``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-12

# bit generator behind apply_dropout; element i depends only on (seed, i)
DROPOUT_RNG_ALGORITHM = "numpy.random.Philox-4x64-10/uniform-float64"


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class SmoothL1Params:
    beta: float = 1.0 / 9.0

    def __post_init__(self):
        if not self.beta > 0.0:
            raise ValueError(f"beta must be > 0, got {self.beta}")


@dataclass(frozen=True)
class LossWeights:
    classification: float = 1.0
    regression: float = 2.0
    orientation: float = 2.0


@dataclass(frozen=True)
class DropoutSpec:
    rate: float
    seed: int = 0
    training: bool = True

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {self.rate}")


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def _safe_log(p, clamp: bool, what: str):
    p = np.asarray(p, dtype=np.float64)
    if clamp:
        p = np.maximum(p, EPS)
    elif np.any(p <= 0.0):
        raise DomainError(f"{what} has a zero probability; log is undefined (pass clamp=True to floor at {EPS})")
    return np.log(p)


def focal_loss(p, y, params: FocalParams = FocalParams(), clamp: bool = False):
    """``-alpha_t * (1 - p_t)**gamma * ln(p_t)``; works elementwise on arrays."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y)
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0 or 1")
    if np.any((p < 0.0) | (p > 1.0)):
        raise DomainError("probability outside [0, 1]")
    p_t = np.where(y == 1, p, 1.0 - p)
    alpha_t = np.where(y == 1, params.alpha, 1.0 - params.alpha)
    loss = -alpha_t * (1.0 - p_t) ** params.gamma * _safe_log(p_t, clamp, "p_t")
    # exact zero (not -0.0) for perfectly confident predictions
    loss = np.where(p_t == 1.0, 0.0, loss)
    return _scalar_or_array(loss)


def smooth_l1(x, y, params: SmoothL1Params = SmoothL1Params()):
    diff = np.abs(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64))
    beta = params.beta
    loss = np.where(diff < beta, 0.5 * diff * diff / beta, diff - 0.5 * beta)
    return _scalar_or_array(loss)


def cross_entropy(predicted, truth, clamp: bool = False) -> float:
    """``-sum(truth_i * ln(predicted_i))`` over the last axis."""
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predicted.shape != truth.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {truth.shape}")
    if np.any(truth < 0.0):
        raise ValueError("truth weights must be non-negative")
    if np.any((predicted < 0.0) | (predicted > 1.0)):
        raise DomainError("probability outside [0, 1]")
    # classes with zero truth weight never contribute, even at p = 0
    used = truth > 0.0
    logs = _safe_log(np.where(used, predicted, 1.0), clamp, "predicted")
    loss = -np.sum(truth * logs, axis=-1)
    return _scalar_or_array(loss + 0.0)


def total_loss(cls, reg, dir, w: LossWeights = LossWeights()):
    return w.classification * cls + w.regression * reg + w.orientation * dir


def dropout_mask(shape, spec: DropoutSpec) -> np.ndarray:
    """Boolean keep-mask; element ``i`` (C order) is drawn from counter ``i`` of the stream."""
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    return rng.random(int(np.prod(shape, dtype=np.int64))).reshape(shape) >= spec.rate


def apply_dropout(values, spec: DropoutSpec) -> np.ndarray:
    """Inverted dropout: zero with probability ``rate``, scale survivors by ``1 / (1 - rate)``.

    Identity (an exact copy) at inference time or when ``rate == 0``.
    """
    values = np.asarray(values)
    if not spec.training or spec.rate == 0.0:
        return values.copy()
    keep = dropout_mask(values.shape, spec)
    scaled = values / (1.0 - spec.rate)
    return np.where(keep, scaled, np.zeros_like(scaled))
