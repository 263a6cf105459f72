"""Central finite differences and ready-made objectives for checking analytic gradients.

Finite differences are a verification oracle only; training always uses the
analytic pullbacks.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from hypknowe.errors import InvalidConfigError, NonFiniteError
from hypknowe.geometry import BallConfig
from hypknowe.geometry import kernels as K
from hypknowe.nn import vjp as V
from hypknowe.nn.losses import contrastive_value_and_grad, hyperbolic_logits, hyperbolic_logits_vjp, softmax_ce


@dataclass
class ParamGradients(Mapping):
    """Gradients keyed like the parameter dict they belong to.

    ``boundary`` is set when some ball-valued intermediate sat on the clamp
    radius, where the zero-derivative clip convention applies.
    """

    grads: dict = field(default_factory=dict)
    boundary: bool = False

    def __getitem__(self, key):
        return self.grads[key]

    def __iter__(self):
        return iter(self.grads)

    def __len__(self):
        return len(self.grads)


def relative_error(a, b) -> float:
    a = np.ravel(np.asarray(a, dtype=float))
    b = np.ravel(np.asarray(b, dtype=float))
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def numeric_gradient(
    loss_fn: Callable[[dict], float],
    params: dict,
    step: float = 1e-5,
    ball_keys: Iterable[str] = (),
    config: BallConfig | None = None,
) -> ParamGradients:
    """Central differences of ``loss_fn`` with respect to every scalar in ``params``.

    Ball-valued entries (named in ``ball_keys``) are perturbed in ambient
    coordinates and projected back with ``config``.
    """
    if not step > 0:
        raise InvalidConfigError("step must be positive")
    ball_keys = set(ball_keys)
    if ball_keys and config is None:
        raise InvalidConfigError("config is required to perturb ball-valued parameters")
    work = {k: np.array(v, dtype=float) for k, v in params.items()}
    out = {}
    for key, value in work.items():
        grad = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            vals = []
            for sign in (1.0, -1.0):
                value[idx] = orig + sign * step
                if key in ball_keys:
                    work[key] = K.project(value, config.curvature, config.clip_eps)
                loss = float(loss_fn(work))
                if not np.isfinite(loss):
                    raise NonFiniteError(f"non-finite loss while perturbing {key}{list(idx)}")
                vals.append(loss)
                work[key] = value
            value[idx] = orig
            grad[idx] = (vals[0] - vals[1]) / (2.0 * step)
        out[key] = grad
    return ParamGradients(out)


def analytic_gradient(objective, params: dict) -> ParamGradients:
    """Exact gradient of an objective exposing ``value_and_grad(params)``."""
    _, grads = objective.value_and_grad(params)
    return grads


# --- point-level objectives -------------------------------------------------------


@dataclass
class ContrastivePointsObjective:
    """Hyperbolic contrastive loss as a function of the points themselves.

    params: ``queries`` (N, d), ``positives`` (N, d), ``keys`` (M, d).
    """

    mask: np.ndarray
    config: BallConfig
    tau: float = 0.2

    def value(self, params) -> float:
        return contrastive_value_and_grad(
            params["queries"], params["positives"], params["keys"], self.mask, self.tau, self.config.curvature, with_grad=False
        )

    def value_and_grad(self, params):
        loss, gq, gp, gk = contrastive_value_and_grad(
            params["queries"], params["positives"], params["keys"], self.mask, self.tau, self.config.curvature
        )
        return loss, ParamGradients({"queries": gq, "positives": gp, "keys": gk})


@dataclass
class LogitCEObjective:
    """Mean cross-entropy of normalized hyperbolic logits; params ``features`` (N, D), ``weight`` (D, C)."""

    labels: np.ndarray
    config: BallConfig
    softmax_temp: float = 0.5
    normalized: bool = True

    def value(self, params) -> float:
        cfg = self.config
        logits = hyperbolic_logits(params["features"], params["weight"], cfg.curvature, cfg.clip_eps, self.normalized)
        return softmax_ce(logits, self.labels, self.softmax_temp)[0]

    def value_and_grad(self, params):
        cfg = self.config
        c, eps = cfg.curvature, cfg.clip_eps
        logits = hyperbolic_logits(params["features"], params["weight"], c, eps, self.normalized)
        loss, g = softmax_ce(logits, self.labels, self.softmax_temp)
        gF, gW = hyperbolic_logits_vjp(params["features"], params["weight"], c, eps, g, self.normalized)
        return loss, ParamGradients({"features": gF, "weight": gW})


@dataclass
class DistanceObjective:
    """sum_i weights_i * d(x_i, y_i); params ``x`` and ``y`` of shape (N, d)."""

    weights: np.ndarray
    config: BallConfig

    def value(self, params) -> float:
        return float(np.sum(self.weights * K.dist(params["x"], params["y"], self.config.curvature)))

    def value_and_grad(self, params):
        gx, gy = V.dist_vjp(params["x"], params["y"], self.config.curvature, self.weights)
        return self.value(params), ParamGradients({"x": gx, "y": gy})
