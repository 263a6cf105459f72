"""Vectorized Poincaré-ball kernels on raw float64 arrays.

Points and tangent vectors are arrays whose last axis holds coordinates; all
leading axes broadcast. ``c`` is the (positive) curvature magnitude and ``eps``
the boundary margin used by :func:`project`. Every kernel that returns a ball
point projects its result, so outputs always satisfy
``norm <= 1/sqrt(c) - eps``.

These functions do no type checking. The typed API in
:mod:`hypknowe.geometry.ball` wraps them.
"""

from __future__ import annotations

import numpy as np

from hypknowe.errors import NonFiniteError

DEFAULT_EPS = 1e-6
ATANH_MAX = 1.0 - 1e-15
_SERIES_CUTOFF = 1e-3
_TINY = 1e-300


def _sqnorm(x: np.ndarray) -> np.ndarray:
    return np.sum(x * x, axis=-1, keepdims=True)


def _norm(x: np.ndarray) -> np.ndarray:
    return np.sqrt(_sqnorm(x))


def _dot(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.sum(x * y, axis=-1, keepdims=True)


def max_norm(c: float, eps: float = DEFAULT_EPS) -> float:
    return 1.0 / np.sqrt(c) - eps


def artanh(a: np.ndarray) -> np.ndarray:
    return np.arctanh(np.clip(a, 0.0, ATANH_MAX))


# --- radial profile helpers -------------------------------------------------
# tanh(a)/a and artanh(a)/a together with f'(a)/a, used by the radial maps
# exp_0, log_0 and their pullbacks. Series branches avoid 0/0 near a = 0.


def tanh_ratio(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    small = a < _SERIES_CUTOFF
    safe = np.where(small, 1.0, a)
    return np.where(small, 1.0 - a * a / 3.0 + 2.0 * a**4 / 15.0, np.tanh(safe) / safe)


def tanh_ratio_dq(a: np.ndarray) -> np.ndarray:
    """d/da [tanh(a)/a] divided by a."""
    a = np.asarray(a, dtype=float)
    small = a < _SERIES_CUTOFF
    safe = np.where(small, 1.0, a)
    sech2 = 1.0 / np.cosh(np.minimum(safe, 350.0)) ** 2
    exact = (sech2 - np.tanh(safe) / safe) / (safe * safe)
    return np.where(small, -2.0 / 3.0 + 8.0 * a * a / 15.0, exact)


def artanh_ratio(a: np.ndarray) -> np.ndarray:
    a = np.clip(np.asarray(a, dtype=float), 0.0, ATANH_MAX)
    small = a < _SERIES_CUTOFF
    safe = np.where(small, 0.5, a)
    return np.where(small, 1.0 + a * a / 3.0 + a**4 / 5.0, np.arctanh(safe) / safe)


def artanh_ratio_dq(a: np.ndarray) -> np.ndarray:
    """d/da [artanh(a)/a] divided by a."""
    a = np.clip(np.asarray(a, dtype=float), 0.0, ATANH_MAX)
    small = a < _SERIES_CUTOFF
    safe = np.where(small, 0.5, a)
    exact = (1.0 / (1.0 - safe * safe) - np.arctanh(safe) / safe) / (safe * safe)
    return np.where(small, 2.0 / 3.0 + 4.0 * a * a / 5.0, exact)


# --- projection -------------------------------------------------------------


_SHRINK = 1.0 - 4.0 * np.finfo(float).eps


def project(x, c: float, eps: float = DEFAULT_EPS, return_mask: bool = False):
    """Rescale rows whose norm exceeds ``1/sqrt(c) - eps`` onto that radius.

    Direction is preserved. With ``return_mask`` the boolean array of clamped
    rows (shape ``x.shape[:-1] + (1,)``) is returned as well.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("non-finite coordinates passed to the ball projection")
    limit = max_norm(c, eps)
    n = _norm(x)
    clamped = n > limit
    # Shrink by a few ulps so the rescaled norm cannot round above the limit.
    out = np.where(clamped, x * (limit * _SHRINK / np.maximum(n, _TINY)), x)
    if return_mask:
        return out, clamped
    return out


# --- core operations --------------------------------------------------------


def conformal(x: np.ndarray, c: float) -> np.ndarray:
    """lambda_x = 2 / (1 - c|x|^2), keepdims on the last axis."""
    return 2.0 / np.maximum(1.0 - c * _sqnorm(x), _TINY)


def madd(x, y, c: float, eps: float = DEFAULT_EPS) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xy = _dot(x, y)
    x2 = _sqnorm(x)
    y2 = _sqnorm(y)
    num = (1.0 + 2.0 * c * xy + c * y2) * x + (1.0 - c * x2) * y
    den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
    return project(num / np.maximum(den, _TINY), c, eps)


def mscale(r, x, c: float, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Möbius scalar multiplication r (x) x; the origin maps to itself."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(c)
    xn = _norm(x)
    zero = xn <= 0.0
    safe = np.where(zero, 1.0, xn)
    out = np.tanh(r * artanh(s * safe)) * x / (s * safe)
    return project(np.where(zero, 0.0, out), c, eps)


def mmatvec(M, x, c: float, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Möbius matrix-vector product for ``M`` of shape (m, n), ``x`` (..., n).

    Closed form; returns the origin when ``x`` or ``M x`` vanishes.
    """
    M = np.asarray(M, dtype=float)
    x = np.asarray(x, dtype=float)
    s = np.sqrt(c)
    mx = x @ M.T
    xn = _norm(x)
    mxn = _norm(mx)
    zero = (xn <= 0.0) | (mxn <= 0.0)
    xn_s = np.where(zero, 1.0, xn)
    mxn_s = np.where(zero, 1.0, mxn)
    out = np.tanh(mxn_s / xn_s * artanh(s * xn_s)) * mx / (s * mxn_s)
    return project(np.where(zero, 0.0, out), c, eps)


def expmap0(v, c: float, eps: float = DEFAULT_EPS) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    s = np.sqrt(c)
    return project(tanh_ratio(s * _norm(v)) * v, c, eps)


def logmap0(y, c: float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    s = np.sqrt(c)
    return artanh_ratio(s * _norm(y)) * y


def expmap(w, v, c: float, eps: float = DEFAULT_EPS) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    s = np.sqrt(c)
    k = s * conformal(w, c) / 2.0
    # tanh(k|v|) v / (s|v|) == (k/s) * tanh_ratio(k|v|) * v
    step = project((k / s) * tanh_ratio(k * _norm(v)) * v, c, eps)
    return madd(w, step, c, eps)


def logmap(w, y, c: float, eps: float = DEFAULT_EPS) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    s = np.sqrt(c)
    u = madd(-w, y, c, eps)
    # (-w) (+) w rounds to ~1e-17 rather than 0; log_w(w) is exactly zero.
    u = np.where(np.all(w == y, axis=-1, keepdims=True), 0.0, u)
    # 2/(s lam) * artanh(s|u|) u/|u| == (2/lam) * artanh_ratio(s|u|) * u
    return (2.0 / conformal(w, c)) * artanh_ratio(s * _norm(u)) * u


def dist_arg(x, y, c: float) -> np.ndarray:
    """delta = 2c|x-y|^2 / ((1-c|x|^2)(1-c|y|^2)); distance = acosh(1+delta)/sqrt(c)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = np.maximum(1.0 - c * _sqnorm(x), _TINY)
    b = np.maximum(1.0 - c * _sqnorm(y), _TINY)
    return (2.0 * c * _sqnorm(x - y) / (a * b))[..., 0]


def acosh1p(delta: np.ndarray) -> np.ndarray:
    """acosh(1 + delta), accurate for small delta."""
    return np.log1p(delta + np.sqrt(delta * (delta + 2.0)))


def dist(x, y, c: float) -> np.ndarray:
    """Hyperbolic distance; reduces the last axis."""
    return acosh1p(dist_arg(x, y, c)) / np.sqrt(c)


def dist0(x, c: float) -> np.ndarray:
    s = np.sqrt(c)
    return 2.0 * artanh(s * _norm(np.asarray(x, dtype=float)))[..., 0] / s
