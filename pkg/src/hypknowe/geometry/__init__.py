"""Poincaré-ball geometry: typed points, Möbius operations and the exp/log maps."""

from hypknowe.geometry import kernels
from hypknowe.geometry.ball import (
    BallConfig,
    BallPoint,
    TangentVector,
    clip_to_ball,
    conformal_factor,
    default_curvature,
    distance,
    exp_map,
    log_map,
    max_safe_distance,
    mobius_add,
    mobius_matvec,
    mobius_scalar_mul,
)

__all__ = [
    "BallConfig",
    "BallPoint",
    "TangentVector",
    "clip_to_ball",
    "conformal_factor",
    "default_curvature",
    "distance",
    "exp_map",
    "kernels",
    "log_map",
    "max_safe_distance",
    "mobius_add",
    "mobius_matvec",
    "mobius_scalar_mul",
]
