"""Typed Poincaré-ball points and the checked operations on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hypknowe.errors import (
    ConfigMismatchError,
    InvalidConfigError,
    InvalidDimensionError,
    ShapeError,
)
from hypknowe.geometry import kernels as K

# relative slack accepted when certifying a point that was just projected
_CERT_SLACK = 1e-12


@dataclass(frozen=True)
class BallConfig:
    """The ball B_c^dim of radius 1/sqrt(curvature).

    ``curvature`` is the magnitude c (sectional curvature is -c). It is a
    frozen configuration value, never trained.
    """

    dim: int
    curvature: float
    clip_eps: float = K.DEFAULT_EPS

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidDimensionError(f"dim must be a positive integer, got {self.dim!r}")
        if not (math.isfinite(self.curvature) and self.curvature > 0):
            raise InvalidConfigError(f"curvature must be positive and finite, got {self.curvature!r}")
        if not self.clip_eps > 0:
            raise InvalidConfigError(f"clip_eps must be positive, got {self.clip_eps!r}")
        if not self.clip_eps < 1.0 / math.sqrt(self.curvature):
            raise InvalidConfigError("clip_eps must be smaller than the ball radius 1/sqrt(c)")

    @property
    def radius(self) -> float:
        return 1.0 / math.sqrt(self.curvature)

    @property
    def max_norm(self) -> float:
        return K.max_norm(self.curvature, self.clip_eps)

    def origin(self) -> "BallPoint":
        return BallPoint(np.zeros(self.dim), self)

    def with_dim(self, dim: int) -> "BallConfig":
        return BallConfig(dim, self.curvature, self.clip_eps)


def _frozen_array(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BallPoint:
    """A coordinate vector certified to lie inside its ball."""

    coords: np.ndarray
    config: BallConfig = field(repr=False)

    def __post_init__(self):
        coords = _frozen_array(self.coords)
        if coords.shape != (self.config.dim,):
            raise ShapeError(f"expected coords of shape ({self.config.dim},), got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ShapeError("ball point coordinates must be finite")
        n = float(np.linalg.norm(coords))
        if n > self.config.max_norm * (1.0 + _CERT_SLACK):
            raise ShapeError(
                f"norm {n!r} exceeds the admissible radius {self.config.max_norm!r}; use clip_to_ball"
            )
        object.__setattr__(self, "coords", coords)

    def __neg__(self) -> "BallPoint":
        return BallPoint(-self.coords, self.config)

    def __eq__(self, other):
        if not isinstance(other, BallPoint):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash((self.config, self.coords.tobytes()))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A vector in the tangent space at ``base``."""

    coords: np.ndarray
    base: BallPoint

    def __post_init__(self):
        coords = _frozen_array(self.coords)
        if coords.shape != (self.base.config.dim,):
            raise ShapeError(f"expected tangent coords of shape ({self.base.config.dim},), got {coords.shape}")
        object.__setattr__(self, "coords", coords)

    @property
    def config(self) -> BallConfig:
        return self.base.config


def _same_config(*points: BallPoint) -> BallConfig:
    cfg = points[0].config
    for p in points[1:]:
        if p.config != cfg:
            raise ConfigMismatchError(f"ball points from different configs: {cfg} vs {p.config}")
    return cfg


def _wrap(coords: np.ndarray, cfg: BallConfig) -> BallPoint:
    return BallPoint(coords, cfg)


# --- constants ----------------------------------------------------------------


def default_curvature(d: int) -> float:
    """Empirical curvature for feature dimension ``d``.

    c = (Gamma(d/2 + 1) / pi^(d/2 - 1)) ** (-1/d), evaluated in log space so
    large ``d`` does not overflow. Gives 0.162 at d=640 and 0.091 at d=2048.
    """
    if int(d) != d or d < 1:
        raise InvalidDimensionError(f"dimension must be a positive integer, got {d!r}")
    log_ratio = math.lgamma(d / 2.0 + 1.0) - (d / 2.0 - 1.0) * math.log(math.pi)
    return math.exp(-log_ratio / d)


def max_safe_distance(config: BallConfig | float) -> float:
    """Largest origin distance representable in float64: 16 ln 10 + ln(2/sqrt(c))."""
    c = config.curvature if isinstance(config, BallConfig) else float(config)
    return 16.0 * math.log(10.0) + math.log(2.0 / math.sqrt(c))


# --- operations ---------------------------------------------------------------


def clip_to_ball(raw, config: BallConfig) -> BallPoint:
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (config.dim,):
        raise ShapeError(f"expected a vector of length {config.dim}, got shape {raw.shape}")
    return _wrap(K.project(raw, config.curvature, config.clip_eps), config)


def conformal_factor(x: BallPoint) -> float:
    return float(K.conformal(x.coords, x.config.curvature)[0])


def mobius_add(x: BallPoint, y: BallPoint) -> BallPoint:
    cfg = _same_config(x, y)
    return _wrap(K.madd(x.coords, y.coords, cfg.curvature, cfg.clip_eps), cfg)


def mobius_scalar_mul(r: float, x: BallPoint) -> BallPoint:
    cfg = x.config
    return _wrap(K.mscale(float(r), x.coords, cfg.curvature, cfg.clip_eps), cfg)


def mobius_matvec(M, x: BallPoint) -> BallPoint:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[1] != x.config.dim:
        raise ShapeError(f"matrix of shape {M.shape} cannot act on a point of dim {x.config.dim}")
    out_cfg = x.config.with_dim(M.shape[0])
    return _wrap(K.mmatvec(M, x.coords, x.config.curvature, x.config.clip_eps), out_cfg)


def exp_map(w: BallPoint, v: TangentVector | np.ndarray) -> BallPoint:
    if isinstance(v, TangentVector):
        _same_config(w, v.base)
        if not np.array_equal(v.base.coords, w.coords):
            raise ConfigMismatchError("tangent vector is not based at the expansion point")
        v = v.coords
    v = np.asarray(v, dtype=float)
    if v.shape != (w.config.dim,):
        raise ShapeError(f"tangent vector of shape {v.shape} does not match dim {w.config.dim}")
    cfg = w.config
    return _wrap(K.expmap(w.coords, v, cfg.curvature, cfg.clip_eps), cfg)


def log_map(w: BallPoint, y: BallPoint) -> TangentVector:
    cfg = _same_config(w, y)
    return TangentVector(K.logmap(w.coords, y.coords, cfg.curvature, cfg.clip_eps), w)


def distance(x: BallPoint, y: BallPoint) -> float:
    cfg = _same_config(x, y)
    return float(K.dist(x.coords, y.coords, cfg.curvature))
