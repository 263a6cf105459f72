"""Means, variance and normal distributions on the Poincaré ball.

The geometric mean is the closed-form gyrocentroid (Einstein midpoint). The
statistical (Fréchet) mean is found by the fixed-point iteration
``mu <- exp_mu(mean_i log_mu(x_i))`` started from the gyrocentroid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from hypknowe.errors import (
    ConfigMismatchError,
    DegenerateDistributionError,
    InvalidConfigError,
    ShapeError,
)
from hypknowe.geometry import BallConfig, BallPoint, log_map
from hypknowe.geometry import kernels as K


@dataclass(frozen=True, eq=False)
class SampleSet:
    """A nonempty set of points sharing one ball; stored as an (n, dim) array."""

    coords: np.ndarray
    config: BallConfig

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        if coords.ndim != 2 or coords.shape[0] == 0 or coords.shape[1] != self.config.dim:
            raise ShapeError(f"expected a nonempty (n, {self.config.dim}) array, got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ShapeError("sample coordinates must be finite")
        if np.max(np.linalg.norm(coords, axis=1)) > self.config.max_norm * (1.0 + 1e-12):
            raise ShapeError("sample set contains points outside the ball")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_points(cls, points: Sequence[BallPoint]) -> "SampleSet":
        if not points:
            raise ShapeError("a sample set needs at least one point")
        cfg = points[0].config
        for p in points:
            if p.config != cfg:
                raise ConfigMismatchError("sample set points come from different configs")
        return cls(np.stack([p.coords for p in points]), cfg)

    def __len__(self) -> int:
        return self.coords.shape[0]

    def __iter__(self) -> Iterator[BallPoint]:
        for row in self.coords:
            yield BallPoint(row, self.config)

    @property
    def points(self) -> list[BallPoint]:
        return list(self)


@dataclass(frozen=True)
class WrappedNormalParams:
    mean: BallPoint
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.variance) and self.variance >= 0):
            raise InvalidConfigError(f"variance must be a finite nonnegative number, got {self.variance!r}")


class FrechetResult(NamedTuple):
    mean: BallPoint
    iterations: int
    converged: bool


MeanSolver = Callable[[SampleSet], BallPoint]


# --- means --------------------------------------------------------------------


def gyrocentroid_array(X: np.ndarray, c: float, eps: float = K.DEFAULT_EPS) -> np.ndarray:
    x2 = np.sum(X * X, axis=-1)
    gamma2 = 1.0 / np.maximum(1.0 - c * x2, 1e-300)
    weighted = (2.0 * gamma2[:, None] * X).sum(axis=0) / np.sum(2.0 * gamma2 - 1.0)
    return K.mscale(0.5, weighted, c, eps)


def gyrocentroid(s: SampleSet) -> BallPoint:
    cfg = s.config
    return BallPoint(gyrocentroid_array(s.coords, cfg.curvature, cfg.clip_eps), cfg)


def frechet_mean(s: SampleSet, tol: float = 1e-7, max_iter: int = 200) -> FrechetResult:
    """Minimizer of the summed squared distances, by Karcher iteration.

    Stops once an update moves the estimate less than ``tol`` (hyperbolic
    distance). If ``max_iter`` is exhausted the iterate with the lowest
    objective is returned with ``converged=False``.
    """
    if not tol > 0:
        raise InvalidConfigError("tol must be positive")
    if max_iter < 1:
        raise InvalidConfigError("max_iter must be at least 1")
    cfg = s.config
    c, eps = cfg.curvature, cfg.clip_eps
    X = s.coords

    def objective(m):
        return float(np.sum(K.dist(m, X, c) ** 2))

    mu = gyrocentroid_array(X, c, eps)
    best, best_obj = mu, objective(mu)
    for it in range(1, max_iter + 1):
        step = K.logmap(mu, X, c, eps).mean(axis=0)
        new = K.expmap(mu, step, c, eps)
        moved = float(K.dist(new, mu, c))
        mu = new
        obj = objective(mu)
        if obj <= best_obj:
            best, best_obj = mu, obj
        if moved < tol:
            return FrechetResult(BallPoint(mu, cfg), it, True)
    return FrechetResult(BallPoint(best, cfg), max_iter, False)


def estimate_variance(s: SampleSet, mean: BallPoint) -> float:
    """Isotropic variance: the mean squared hyperbolic distance to ``mean``."""
    if mean.config != s.config:
        raise ConfigMismatchError("mean and samples live in different balls")
    d = K.dist(mean.coords, s.coords, s.config.curvature)
    return float(np.mean(d * d))


# --- wrapped normal -----------------------------------------------------------


def sample_wrapped_normal(params: WrappedNormalParams, n: int, seed: int) -> SampleSet:
    """Draw ``n`` points as exp_mu(v / lambda_mu) with v ~ N(0, variance * I).

    Uses a private ``numpy.random.default_rng(seed)`` (PCG64), so the output is
    a pure function of ``(params, n, seed)``.
    """
    if n < 1:
        raise InvalidConfigError("n must be at least 1")
    mu = params.mean
    cfg = mu.config
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, cfg.dim)) * math.sqrt(params.variance)
    lam = K.conformal(mu.coords, cfg.curvature)
    X = K.expmap(mu.coords, v / lam, cfg.curvature, cfg.clip_eps)
    return SampleSet(X, cfg)


def log_density_ratio(dist, c: float, d: int):
    """(d - 1) * log(sqrt(c) r / sinh(sqrt(c) r)), stable for small and large r."""
    a = np.sqrt(c) * np.asarray(dist, dtype=float)
    small = a < 1e-4
    safe = np.where(small, 1.0, a)
    # log(sinh a) = a + log1p(-exp(-2a)) - log 2
    log_ratio = np.log(safe) - (safe + np.log1p(-np.exp(-2.0 * safe)) - math.log(2.0))
    log_ratio = np.where(small, -a * a / 6.0, log_ratio)
    out = (d - 1) * log_ratio
    return float(out) if np.ndim(out) == 0 else out


def density_ratio_term(dist: float, c: float, d: int) -> float:
    """Factor turning the Riemannian normal density into the wrapped one.

    Equals ``(sqrt(c) r / sinh(sqrt(c) r)) ** (d - 1)``; 1 at r = 0 and in
    (0, 1) for r > 0 when d >= 2.
    """
    if dist < 0:
        raise InvalidConfigError("distance must be nonnegative")
    return math.exp(log_density_ratio(dist, c, d))


def _check(x: BallPoint, params: WrappedNormalParams) -> None:
    if x.config != params.mean.config:
        raise ConfigMismatchError("point and distribution live in different balls")
    if params.variance == 0:
        raise DegenerateDistributionError("density of a zero-variance distribution is undefined")


def riemannian_normal_logdensity_unnorm(x: BallPoint, params: WrappedNormalParams) -> float:
    """-d(mu, x)^2 / (2 sigma^2), without the normalizing constant."""
    _check(x, params)
    r = float(K.dist(params.mean.coords, x.coords, x.config.curvature))
    return -r * r / (2.0 * params.variance)


def wrapped_normal_logdensity_unnorm(x: BallPoint, params: WrappedNormalParams) -> float:
    """Tangent Gaussian at u = lambda_mu log_mu(x) plus the log-Jacobian of the exponential map."""
    _check(x, params)
    mu, cfg = params.mean, x.config
    u = K.conformal(mu.coords, cfg.curvature) * log_map(mu, x).coords
    sq = float(np.dot(u, u))
    a = math.sqrt(cfg.curvature * sq)
    if a < 1e-4:
        log_jac = -a * a / 6.0
    else:
        log_jac = math.log(a) - (a + math.log(-math.expm1(-2.0 * a)) - math.log(2.0))
    return -sq / (2.0 * params.variance) + (cfg.dim - 1) * log_jac
