"""Linear encoder -> TP mapping layer -> HypFC feature extractor, and the base-session objective.

Parameters live in a plain dict of arrays:

``encoder``     (D, input_dim)   Euclidean
``tp_base``     (D,)             ball point w of the mapping layer
``fc_weight``   (D, D)           Euclidean
``fc_bias``     (D,)             ball point
``classifier``  (D, n_coarse)    coarse columns of the classifier (base session only)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hypknowe.geometry import BallConfig
from hypknowe.geometry import kernels as K
from hypknowe.nn import layers
from hypknowe.nn.gradcheck import ParamGradients
from hypknowe.nn.losses import contrastive_value_and_grad, hyperbolic_logits, hyperbolic_logits_vjp, softmax_ce

BALL_PARAMS = frozenset({"tp_base", "fc_bias"})
EXTRACTOR_KEYS = ("encoder", "tp_base", "fc_weight", "fc_bias")


def init_extractor(input_dim: int, config: BallConfig, rng: np.random.Generator, init_scale: float = 0.5) -> dict:
    D = config.dim
    return {
        "encoder": rng.standard_normal((D, input_dim)) * (init_scale / np.sqrt(input_dim)),
        "tp_base": np.zeros(D),
        "fc_weight": np.eye(D),
        "fc_bias": np.zeros(D),
    }


def extract(params: dict, X: np.ndarray, config: BallConfig) -> np.ndarray:
    c, eps = config.curvature, config.clip_eps
    h = np.asarray(X, dtype=float) @ params["encoder"].T
    p = layers.tp_apply(h, params["tp_base"], c, eps)
    return layers.hypfc_apply(p, params["fc_weight"], params["fc_bias"], c, eps)


def _extract_with_cache(params, X, config):
    c, eps = config.curvature, config.clip_eps
    h = X @ params["encoder"].T
    p = layers.tp_apply(h, params["tp_base"], c, eps)
    f = layers.hypfc_apply(p, params["fc_weight"], params["fc_bias"], c, eps)
    return f, (X, h, p)


def _extract_backward(params, cache, config, gf) -> dict:
    c, eps = config.curvature, config.clip_eps
    X, h, p = cache
    gW, gb, gp = layers.hypfc_backward(p, params["fc_weight"], params["fc_bias"], c, eps, gf)
    gw, gh = layers.tp_backward(h, params["tp_base"], c, eps, gp)
    return {"encoder": gh.T @ X, "tp_base": gw, "fc_weight": gW, "fc_bias": gb}


def _touches_boundary(config: BallConfig, *arrays) -> bool:
    limit = config.max_norm * (1.0 - 1e-9)
    return any(np.any(np.linalg.norm(a, axis=-1) >= limit) for a in arrays)


@dataclass
class BaseSessionObjective:
    """Mean hyperbolic contrastive loss plus mean coarse cross-entropy.

    ``X1``/``X2`` are two noisy views of the same raw samples. View-1 features
    are queries, view-2 features are keys; the positive of sample n is its own
    second view and its negatives are the second views of the other samples
    sharing its coarse label. Cross-entropy is taken on view-1 features with
    normalized hyperbolic logits over the coarse columns.
    """

    X1: np.ndarray
    X2: np.ndarray
    coarse: np.ndarray
    config: BallConfig
    tau: float = 0.2
    softmax_temp: float = 0.5
    contrastive_weight: float = 1.0

    def __post_init__(self):
        self.coarse = np.asarray(self.coarse, dtype=int)
        same = self.coarse[:, None] == self.coarse[None, :]
        self.neg_mask = same & ~np.eye(len(self.coarse), dtype=bool)

    def _forward(self, params):
        f1, c1 = _extract_with_cache(params, self.X1, self.config)
        f2, c2 = _extract_with_cache(params, self.X2, self.config)
        return f1, c1, f2, c2

    def value(self, params: dict) -> float:
        return self.value_and_grad(params, with_grad=False)

    def value_and_grad(self, params: dict, with_grad: bool = True):
        cfg = self.config
        c, eps = cfg.curvature, cfg.clip_eps
        n = len(self.coarse)
        f1, c1, f2, c2 = self._forward(params)
        con = contrastive_value_and_grad(f1, f2, f2, self.neg_mask, self.tau, c, with_grad=with_grad)
        logits = hyperbolic_logits(f1, params["classifier"], c, eps)
        ce, g_logits = softmax_ce(logits, self.coarse, self.softmax_temp)
        if not with_grad:
            return self.contrastive_weight * con / n + ce
        con_loss, gq, gpos, gk = con
        w = self.contrastive_weight / n
        loss = w * con_loss + ce

        gf1_ce, g_cls = hyperbolic_logits_vjp(f1, params["classifier"], c, eps, g_logits)
        gf1 = w * gq + gf1_ce
        gf2 = w * (gpos + gk)
        g1 = _extract_backward(params, c1, cfg, gf1)
        g2 = _extract_backward(params, c2, cfg, gf2)
        grads = {k: g1[k] + g2[k] for k in EXTRACTOR_KEYS}
        grads["classifier"] = g_cls
        boundary = _touches_boundary(cfg, f1, f2, c1[2], c2[2])
        return loss, ParamGradients(grads, boundary)
