"""Tangent-to-ball mapping layer and hyperbolic fully-connected layer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hypknowe.errors import ConfigMismatchError, ShapeError
from hypknowe.geometry import BallConfig, BallPoint
from hypknowe.geometry import kernels as K
from hypknowe.nn import vjp as V


@dataclass(frozen=True)
class MappingLayerParams:
    """TP(x) = exp_w(x): Euclidean features are read as tangent vectors at ``base_point``."""

    base_point: BallPoint

    @property
    def config(self) -> BallConfig:
        return self.base_point.config


@dataclass(frozen=True)
class HypFCParams:
    """y = W (x) x (+) b with Euclidean ``weight`` (m, n) and ball-valued ``bias``."""

    weight: np.ndarray
    bias: BallPoint

    def __post_init__(self):
        w = np.array(self.weight, dtype=float)
        if w.ndim != 2 or w.shape[0] != self.bias.config.dim:
            raise ShapeError(f"weight of shape {w.shape} does not produce bias dim {self.bias.config.dim}")
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)

    @property
    def config(self) -> BallConfig:
        return self.bias.config


def tp_forward(x, p: MappingLayerParams) -> BallPoint:
    cfg = p.config
    x = np.asarray(x, dtype=float)
    if x.shape != (cfg.dim,):
        raise ShapeError(f"input of shape {x.shape} does not match mapping dim {cfg.dim}")
    return BallPoint(K.expmap(p.base_point.coords, x, cfg.curvature, cfg.clip_eps), cfg)


def hypfc_forward(x: BallPoint, p: HypFCParams) -> BallPoint:
    cfg = p.config
    if x.config.curvature != cfg.curvature or x.config.clip_eps != cfg.clip_eps:
        raise ConfigMismatchError("input and layer use different balls")
    if p.weight.shape[1] != x.config.dim:
        raise ShapeError(f"weight of shape {p.weight.shape} cannot act on a point of dim {x.config.dim}")
    y = K.mmatvec(p.weight, x.coords, cfg.curvature, cfg.clip_eps)
    return BallPoint(K.madd(y, p.bias.coords, cfg.curvature, cfg.clip_eps), cfg)


# --- batched array forms used by the trainers ------------------------------------


def tp_apply(h: np.ndarray, base: np.ndarray, c: float, eps: float) -> np.ndarray:
    return K.expmap(base, h, c, eps)


def tp_backward(h, base, c, eps, g):
    """Returns (grad_base, grad_h)."""
    return V.expmap_vjp(base, h, c, eps, g)


def hypfc_apply(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, c: float, eps: float) -> np.ndarray:
    return K.madd(K.mmatvec(weight, x, c, eps), bias, c, eps)


def hypfc_backward(x, weight, bias, c, eps, g):
    """Returns (grad_weight, grad_bias, grad_x)."""
    m = K.mmatvec(weight, x, c, eps)
    gm, gb = V.madd_vjp(m, bias, c, eps, g)
    gW, gx = V.mmatvec_vjp(weight, x, c, eps, gm)
    return gW, gb, gx
