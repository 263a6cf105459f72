"""Parameter updates: Riemannian SGD for ball-valued parameters, momentum SGD otherwise."""

from __future__ import annotations

import numpy as np

from hypknowe.errors import ShapeError
from hypknowe.geometry import BallPoint
from hypknowe.geometry import kernels as K

MOMENTUM = 0.9
WEIGHT_DECAY = 5e-4


def rsgd_update(x: np.ndarray, grad: np.ndarray, lr: float, c: float, eps: float = K.DEFAULT_EPS) -> np.ndarray:
    """x - lr * (1 - c|x|^2)^2 / 4 * grad, projected back into the ball.

    The factor is the inverse of the conformal metric, so ``grad`` is the
    ordinary Euclidean gradient.
    """
    x = np.asarray(x, dtype=float)
    scale = (1.0 - c * np.sum(x * x, axis=-1, keepdims=True)) ** 2 / 4.0
    return K.project(x - lr * scale * grad, c, eps)


def riemannian_sgd_step(param: BallPoint, grad, lr: float) -> BallPoint:
    grad = np.asarray(grad, dtype=float)
    if grad.shape != param.coords.shape:
        raise ShapeError(f"gradient shape {grad.shape} != parameter shape {param.coords.shape}")
    cfg = param.config
    return BallPoint(rsgd_update(param.coords, grad, lr, cfg.curvature, cfg.clip_eps), cfg)


def euclidean_sgd_step(
    param: np.ndarray,
    grad: np.ndarray,
    lr: float,
    momentum: float = MOMENTUM,
    state: np.ndarray | None = None,
    weight_decay: float = WEIGHT_DECAY,
    mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Classical momentum SGD with L2 weight decay.

    ``v <- momentum * v + (grad + weight_decay * param)``, ``param <- param - lr * v``.
    Entries where ``mask`` is False are returned untouched (bit-identical) and
    their velocity stays zero.
    """
    param = np.asarray(param, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != param.shape:
        raise ShapeError(f"gradient shape {grad.shape} != parameter shape {param.shape}")
    if state is None:
        state = np.zeros_like(param)
    velocity = momentum * state + grad + weight_decay * param
    new = param - lr * velocity
    if mask is not None:
        mask = np.broadcast_to(mask, param.shape)
        velocity = np.where(mask, velocity, 0.0)
        new = np.where(mask, new, param)
    return new, velocity
