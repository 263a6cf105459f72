"""Hyperbolic layers, losses, gradient evaluation and optimizers."""

from hypknowe.nn.gradcheck import (
    ContrastivePointsObjective,
    DistanceObjective,
    LogitCEObjective,
    ParamGradients,
    analytic_gradient,
    numeric_gradient,
    relative_error,
)
from hypknowe.nn.layers import HypFCParams, MappingLayerParams, hypfc_forward, tp_forward
from hypknowe.nn.losses import (
    ContrastiveBatch,
    contrastive_value_and_grad,
    hyp_contrastive_loss,
    hyperbolic_logits,
    hyperbolic_logits_vjp,
    softmax_ce,
)
from hypknowe.nn.model import BALL_PARAMS, BaseSessionObjective, extract, init_extractor
from hypknowe.nn.optim import euclidean_sgd_step, riemannian_sgd_step, rsgd_update

__all__ = [
    "BALL_PARAMS",
    "BaseSessionObjective",
    "ContrastiveBatch",
    "ContrastivePointsObjective",
    "DistanceObjective",
    "HypFCParams",
    "LogitCEObjective",
    "MappingLayerParams",
    "ParamGradients",
    "analytic_gradient",
    "contrastive_value_and_grad",
    "euclidean_sgd_step",
    "extract",
    "hyp_contrastive_loss",
    "hyperbolic_logits",
    "hyperbolic_logits_vjp",
    "hypfc_forward",
    "init_extractor",
    "numeric_gradient",
    "relative_error",
    "riemannian_sgd_step",
    "rsgd_update",
    "softmax_ce",
    "tp_forward",
]
