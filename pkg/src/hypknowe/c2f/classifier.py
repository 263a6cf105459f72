"""Hyperbolic classifier with normalize-and-freeze column discipline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hypknowe.errors import FrozenColumnError, InvalidConfigError, ShapeError
from hypknowe.geometry import BallConfig, BallPoint
from hypknowe.nn.losses import hyperbolic_logits, hyperbolic_logits_vjp, log_softmax, softmax_ce
from hypknowe.nn.optim import MOMENTUM, WEIGHT_DECAY, euclidean_sgd_step


@dataclass
class ClassifierState:
    """Weight matrix W of shape (D, C); column j scores class j.

    Columns ``0 .. n_coarse-1`` are coarse classes, fine class ``f`` uses
    column ``n_coarse + f``. Columns with index below ``frozen_upto`` never
    change again.
    """

    weight: np.ndarray
    config: BallConfig
    frozen_upto: int = 0
    softmax_temp: float = 0.5

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=float)
        if self.weight.ndim != 2 or self.weight.shape[0] != self.config.dim:
            raise ShapeError(f"weight must have shape ({self.config.dim}, C), got {self.weight.shape}")
        if not 0 <= self.frozen_upto <= self.weight.shape[1]:
            raise InvalidConfigError("frozen_upto must lie in [0, C]")
        if not self.softmax_temp > 0:
            raise InvalidConfigError("softmax_temp must be positive")

    @property
    def n_classes(self) -> int:
        return self.weight.shape[1]

    def frozen_snapshot(self) -> np.ndarray:
        return self.weight[:, : self.frozen_upto].copy()


def _features(feat) -> np.ndarray:
    if isinstance(feat, BallPoint):
        return feat.coords
    return np.asarray(feat, dtype=float)


def compute_logits(feat, cls: ClassifierState, normalized: bool = True, columns=None) -> np.ndarray:
    """Logits W^T (x) f; ``feat`` may be a BallPoint or an (N, D) array of feature rows.

    ``columns`` restricts the product to a subset of classes (e.g. only the
    columns learned so far).
    """
    cfg = cls.config
    return hyperbolic_logits(_features(feat), cls.weight, cfg.curvature, cfg.clip_eps, normalized, columns)


def predict_proba(feat, cls: ClassifierState, columns=None) -> np.ndarray:
    logits = compute_logits(feat, cls, True, columns)
    return np.exp(log_softmax(logits / cls.softmax_temp))


def ce_loss(batch, cls: ClassifierState, columns=None) -> float:
    """Mean negative log-probability of the true labels.

    ``batch`` is either a list of ``(feature, label)`` pairs or a tuple
    ``(features_array, labels_array)``. Labels index the selected columns.
    """
    if isinstance(batch, tuple) and len(batch) == 2 and np.ndim(batch[1]) == 1:
        F, labels = _features(batch[0]), np.asarray(batch[1], dtype=int)
    else:
        F = np.stack([_features(f) for f, _ in batch])
        labels = np.array([y for _, y in batch], dtype=int)
    n_cols = cls.n_classes if columns is None else len(np.arange(cls.n_classes)[columns])
    if labels.size and (labels.min() < 0 or labels.max() >= n_cols):
        raise ShapeError(f"labels must lie in [0, {n_cols})")
    logits = compute_logits(F, cls, True, columns)
    return softmax_ce(logits, labels, cls.softmax_temp)[0]


def train_columns(
    cls: ClassifierState,
    F: np.ndarray,
    labels: np.ndarray,
    n_active: int,
    lr: float,
    epochs: int,
    momentum: float = MOMENTUM,
    weight_decay: float = WEIGHT_DECAY,
) -> list[float]:
    """Full-batch cross-entropy over columns ``[0, n_active)`` updating only ``[frozen_upto, n_active)``.

    Freezing is a gradient/update mask, so the optimizer state keeps the full
    shape. Raises :class:`FrozenColumnError` if a frozen column moved.
    """
    cfg = cls.config
    c, eps = cfg.curvature, cfg.clip_eps
    lo = cls.frozen_upto
    if not lo < n_active <= cls.n_classes:
        raise InvalidConfigError("need at least one trainable column inside the active range")
    snapshot = cls.frozen_snapshot()
    mask = np.zeros(n_active, dtype=bool)
    mask[lo:] = True
    W = cls.weight[:, :n_active].copy()
    state = np.zeros_like(W)
    losses = []
    for _ in range(epochs):
        logits = hyperbolic_logits(F, W, c, eps)
        loss, g = softmax_ce(logits, labels, cls.softmax_temp)
        _, gW = hyperbolic_logits_vjp(F, W, c, eps, g)
        W, state = euclidean_sgd_step(W, gW, lr, momentum, state, weight_decay, mask=mask[None, :])
        losses.append(loss)
    cls.weight[:, :n_active] = W
    if not np.array_equal(cls.weight[:, :lo], snapshot):
        raise FrozenColumnError("a frozen classifier column changed during training")
    return losses
