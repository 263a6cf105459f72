"""Hyperbolic coarse-to-fine few-shot class-incremental learning on the Poincaré ball."""

from hypknowe.geometry import BallConfig, BallPoint, default_curvature

__version__ = "0.1.0"

__all__ = ["BallConfig", "BallPoint", "__version__", "default_curvature"]
