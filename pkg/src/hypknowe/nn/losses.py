"""Hyperbolic contrastive loss and cross-entropy over hyperbolic logits.

Both losses come with exact gradients. Softmax-style expressions are
evaluated with log-sum-exp shifts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from hypknowe.errors import ConfigMismatchError, InvalidConfigError, ShapeError, ZeroColumnError
from hypknowe.geometry import BallConfig, BallPoint
from hypknowe.geometry import kernels as K
from hypknowe.nn import vjp as V


@dataclass(frozen=True)
class ContrastiveBatch:
    """Queries q_n, aligned positives k_n+, and per-query negatives k_m-."""

    queries: Sequence[BallPoint]
    positives: Sequence[BallPoint]
    negatives: Sequence[Sequence[BallPoint]]
    temperature: float = 0.2
    config: BallConfig = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.queries)
        if n < 1 or len(self.positives) != n:
            raise ShapeError("queries and positives must be nonempty and of equal length")
        if len(self.negatives) != n:
            raise ShapeError("need one (possibly empty) negatives list per query")
        if not self.temperature > 0:
            raise InvalidConfigError("temperature must be positive")
        cfg = self.queries[0].config
        for p in (*self.queries, *self.positives, *(k for ks in self.negatives for k in ks)):
            if p.config != cfg:
                raise ConfigMismatchError("contrastive batch mixes points from different balls")
        object.__setattr__(self, "config", cfg)

    def arrays(self):
        """(q, pos, keys, mask): negatives flattened into ``keys`` with an (N, M) mask."""
        dim = self.config.dim
        q = np.stack([p.coords for p in self.queries])
        pos = np.stack([p.coords for p in self.positives])
        flat = [k.coords for ks in self.negatives for k in ks]
        keys = np.stack(flat) if flat else np.zeros((0, dim))
        mask = np.zeros((len(self.queries), len(flat)), dtype=bool)
        start = 0
        for i, ks in enumerate(self.negatives):
            mask[i, start:start + len(ks)] = True
            start += len(ks)
        return q, pos, keys, mask


def contrastive_value_and_grad(q, pos, keys, mask, tau: float, c: float, with_grad: bool = True):
    """Summed hyperbolic InfoNCE.

    ``q``/``pos`` are (N, d), ``keys`` (M, d) and ``mask`` (N, M) marks which
    keys are negatives of which query. Returns ``loss`` or
    ``(loss, grad_q, grad_pos, grad_keys)``.
    """
    d_pos = K.dist(q, pos, c)
    s_pos = -d_pos / tau
    if keys.shape[0]:
        d_neg = K.dist(q[:, None, :], keys[None, :, :], c)
        s_neg = np.where(mask, -d_neg / tau, -np.inf)
    else:
        s_neg = np.zeros((q.shape[0], 0))
    top = np.maximum(s_pos, s_neg.max(axis=1, initial=-np.inf))
    e_pos = np.exp(s_pos - top)
    e_neg = np.exp(s_neg - top[:, None])
    z = e_pos + e_neg.sum(axis=1)
    # Per query the loss is log(1 + sum_m exp(s_neg - s_pos)); log1p keeps it
    # positive when every negative is far away.
    rel = np.exp(np.minimum(s_neg - s_pos[:, None], 0.0)).sum(axis=1)
    per_query = np.where(s_pos >= top, np.log1p(rel), np.log(z) - (s_pos - top))
    loss = float(np.sum(per_query))
    if not with_grad:
        return loss

    p_pos = e_pos / z
    p_neg = e_neg / z[:, None]
    g_dpos = (1.0 - p_pos) / tau
    g_dneg = -p_neg / tau
    gq, gpos = V.dist_vjp(q, pos, c, g_dpos)
    if keys.shape[0]:
        gq2, gk = V.dist_vjp(q[:, None, :], keys[None, :, :], c, g_dneg)
        gq = gq + gq2[:, 0, :]
        gk = gk[0]
    else:
        gk = np.zeros_like(keys)
    return loss, gq, gpos, gk


def hyp_contrastive_loss(batch: ContrastiveBatch) -> float:
    q, pos, keys, mask = batch.arrays()
    return contrastive_value_and_grad(q, pos, keys, mask, batch.temperature, batch.config.curvature, with_grad=False)


# --- hyperbolic logits -------------------------------------------------------------


def hyperbolic_logits(F, W, c: float, eps: float, normalized: bool = True, columns=None) -> np.ndarray:
    """Coordinates of W^T (x) f for each row f of ``F``.

    With ``normalized`` the columns of W are scaled to unit Euclidean norm and
    each feature is divided by its distance to the origin (then projected).
    """
    W = np.asarray(W, dtype=float)
    ids = np.arange(W.shape[1])
    if columns is not None:
        W = W[:, columns]
        ids = ids[columns]
    F = np.asarray(F, dtype=float)
    if F.shape[-1] != W.shape[0]:
        raise ShapeError(f"features of dim {F.shape[-1]} do not match classifier rows {W.shape[0]}")
    if normalized:
        norms = np.linalg.norm(W, axis=0)
        if np.any(norms == 0):
            raise ZeroColumnError(int(ids[np.flatnonzero(norms == 0)[0]]))
        W = W / norms
        F = V.normalize_feature(F, c, eps)
    return K.mmatvec(W.T, F, c, eps)


def hyperbolic_logits_vjp(F, W, c: float, eps: float, g, normalized: bool = True):
    """Returns (grad_F, grad_W) for logits computed from the full ``W``."""
    F = np.asarray(F, dtype=float)
    W = np.asarray(W, dtype=float)
    if normalized:
        Wt, _ = V.normalize_columns(W)
        Ft = V.normalize_feature(F, c, eps)
    else:
        Wt, Ft = W, F
    gM, gFt = V.mmatvec_vjp(Wt.T, Ft, c, eps, g)
    gWt = gM.T
    if normalized:
        return V.normalize_feature_vjp(F, c, eps, gFt), V.normalize_columns_vjp(W, gWt)
    return gFt, gWt


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax_ce(logits, labels, temperature: float):
    """Mean cross-entropy of softmax(logits / temperature); returns (loss, grad_logits)."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n = logits.shape[0]
    logp = log_softmax(logits / temperature)
    loss = float(-np.mean(logp[np.arange(n), labels]))
    g = np.exp(logp)
    g[np.arange(n), labels] -= 1.0
    return loss, g / (temperature * n)
