"""Reverse-mode pullbacks of the ball kernels.

Each ``*_vjp`` takes the forward inputs and the upstream gradient ``g`` of the
forward output and returns gradients shaped like the inputs (broadcast axes
are summed out). The projection applied at the end of every ball-valued
kernel is differentiated as the identity for rows strictly inside the clamp
radius and as zero for rows that were clamped.
"""

from __future__ import annotations

import numpy as np

from hypknowe.geometry import kernels as K

_TINY = 1e-300


def _dot(x, y):
    return np.sum(x * y, axis=-1, keepdims=True)


def _sqnorm(x):
    return np.sum(x * x, axis=-1, keepdims=True)


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _clamp_mask(raw: np.ndarray, c: float, eps: float) -> np.ndarray:
    return np.sqrt(_sqnorm(raw)) > K.max_norm(c, eps)


def madd_vjp(x, y, c, eps, g):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xy = _dot(x, y)
    x2 = _sqnorm(x)
    y2 = _sqnorm(y)
    A = 1.0 + 2.0 * c * xy + c * y2
    B = 1.0 - c * x2
    D = np.maximum(1.0 + 2.0 * c * xy + c * c * x2 * y2, _TINY)
    out = (A * x + B * y) / D
    g = np.where(_clamp_mask(out, c, eps), 0.0, g)

    gN = g / D
    gD = -_dot(g, out) / D
    gA = _dot(gN, x)
    gB = _dot(gN, y)
    gx = A * gN + gA * (2.0 * c * y) - gB * (2.0 * c * x) + gD * (2.0 * c * y + 2.0 * c * c * y2 * x)
    gy = B * gN + gA * (2.0 * c * (x + y)) + gD * (2.0 * c * x + 2.0 * c * c * x2 * y)
    return unbroadcast(gx, x.shape), unbroadcast(gy, y.shape)


def expmap0_vjp(v, c, eps, g):
    v = np.asarray(v, dtype=float)
    s = np.sqrt(c)
    a = s * np.sqrt(_sqnorm(v))
    T = K.tanh_ratio(a)
    g = np.where(_clamp_mask(T * v, c, eps), 0.0, g)
    return T * g + c * K.tanh_ratio_dq(a) * _dot(g, v) * v


def logmap0_vjp(y, c, g):
    y = np.asarray(y, dtype=float)
    a = np.sqrt(c) * np.sqrt(_sqnorm(y))
    return K.artanh_ratio(a) * g + c * K.artanh_ratio_dq(a) * _dot(g, y) * y


def expmap_vjp(w, v, c, eps, g):
    """Pullback of exp_w(v) to (w, v)."""
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    s = np.sqrt(c)
    lam = K.conformal(w, c)
    k = s * lam / 2.0
    a = k * np.sqrt(_sqnorm(v))
    T = K.tanh_ratio(a)
    raw_step = (k / s) * T * v
    step = K.project(raw_step, c, eps)

    gw, gstep = madd_vjp(w, step, c, eps, g)
    gstep = np.broadcast_to(gstep, np.broadcast_shapes(gstep.shape, raw_step.shape))
    gstep = np.where(_clamp_mask(raw_step, c, eps), 0.0, gstep)

    gv_dot = _dot(gstep, v)
    gv = (k / s) * (T * gstep + k * k * K.tanh_ratio_dq(a) * gv_dot * v)
    sech2 = 1.0 / np.cosh(np.minimum(a, 350.0)) ** 2
    gk = gv_dot * sech2 / s
    gw_extra = gk * (s / 2.0) * lam * lam * c * w
    gw = gw + unbroadcast(gw_extra, w.shape)
    return gw, unbroadcast(gv, v.shape)


def mmatvec_vjp(M, x, c, eps, g):
    """Pullback of M (x) x to (M, x) via the exp_0(M log_0 x) factorization."""
    M = np.asarray(M, dtype=float)
    x = np.asarray(x, dtype=float)
    u = K.logmap0(x, c)
    z = u @ M.T
    gz = expmap0_vjp(z, c, eps, g)
    gM = gz.reshape(-1, M.shape[0]).T @ u.reshape(-1, M.shape[1])
    gx = logmap0_vjp(x, c, gz @ M)
    return gM, gx


def dist_vjp(x, y, c, g):
    """Pullback of the distance (last axis reduced) to (x, y).

    At coincident points the distance has a kink; the zero subgradient is used.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    g = np.asarray(g, dtype=float)[..., None]
    a = np.maximum(1.0 - c * _sqnorm(x), _TINY)
    b = np.maximum(1.0 - c * _sqnorm(y), _TINY)
    diff = x - y
    u = _sqnorm(diff)
    delta = 2.0 * c * u / (a * b)
    pos = delta > 0
    dd = np.where(pos, 1.0 / (np.sqrt(c) * np.sqrt(np.where(pos, delta * (delta + 2.0), 1.0))), 0.0)
    gd = g * dd
    base = 4.0 * c / (a * b) * diff
    gx = gd * (base + 4.0 * c * c * u * x / (a * a * b))
    gy = gd * (-base + 4.0 * c * c * u * y / (a * b * b))
    return unbroadcast(gx, x.shape), unbroadcast(gy, y.shape)


# --- classifier normalizations ---------------------------------------------------


def normalize_feature(f, c, eps):
    """f / d(0, f), projected; the origin maps to the origin."""
    f = np.asarray(f, dtype=float)
    r = np.sqrt(_sqnorm(f))
    zero = r <= 0.0
    r_s = np.where(zero, 1.0, r)
    rho = 1.0 / (2.0 * r_s * K.artanh_ratio(np.sqrt(c) * r_s))
    return K.project(np.where(zero, 0.0, rho * f), c, eps)


def normalize_feature_vjp(f, c, eps, g):
    f = np.asarray(f, dtype=float)
    s = np.sqrt(c)
    r = np.sqrt(_sqnorm(f))
    zero = r <= 0.0
    r_s = np.where(zero, 1.0, r)
    A = K.artanh_ratio(s * r_s)
    rho = 1.0 / (2.0 * r_s * A)
    g = np.where(_clamp_mask(rho * f, c, eps) | zero, 0.0, g)
    a = np.minimum(s * r_s, K.ATANH_MAX)
    drho_over_r = -1.0 / (2.0 * (1.0 - a * a) * r_s**3 * A * A)
    return rho * g + drho_over_r * _dot(g, f) * f


def normalize_columns(W):
    """Unit-normalize the columns of W; returns (W_tilde, column_norms)."""
    W = np.asarray(W, dtype=float)
    norms = np.linalg.norm(W, axis=0)
    return W / norms, norms


def normalize_columns_vjp(W, g):
    Wt, norms = normalize_columns(W)
    return (g - np.sum(g * Wt, axis=0) * Wt) / norms
