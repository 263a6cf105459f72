"""Property suites for geometry, statistics and gradients, run by ``hypknowe selftest``.

Each property returns its worst observed error next to the tolerance it was
held to. Tolerances are scaled by a single factor so the whole suite can be
tightened or loosened at once.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from hypknowe.geometry import BallConfig
from hypknowe.geometry import kernels as K
from hypknowe.nn import vjp as V
from hypknowe.nn.gradcheck import (
    ContrastivePointsObjective,
    DistanceObjective,
    LogitCEObjective,
    numeric_gradient,
    relative_error,
)
from hypknowe.stats import (
    SampleSet,
    WrappedNormalParams,
    density_ratio_term,
    frechet_mean,
    gyrocentroid_array,
    log_density_ratio,
    riemannian_normal_logdensity_unnorm,
    sample_wrapped_normal,
    wrapped_normal_logdensity_unnorm,
)
from hypknowe.geometry import BallPoint

DEFAULT_CURVATURES = (0.1, 0.5, 1.0)
EUCLIDEAN_C = 1e-8


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    error: float
    tol: float
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<36s} err={self.error:.3e}  tol={self.tol:.1e}  ({self.seconds:.2f}s)"


def random_ball(rng: np.random.Generator, n: int, d: int, c: float, frac: float = 0.9) -> np.ndarray:
    """Points with uniform directions and norms uniform in [0, frac / sqrt(c))."""
    u = rng.standard_normal((n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = rng.uniform(0.0, frac, size=(n, 1)) / np.sqrt(c)
    return u * r


# --- individual properties; each returns the worst error ---------------------------


def exp_log_inversion(c: float, rng, n: int = 1000, d: int = 5) -> float:
    w = random_ball(rng, n, d, c, 0.8)
    y = random_ball(rng, n, d, c, 0.8)
    back = K.expmap(w, K.logmap(w, y, c), c)
    err1 = np.max(np.linalg.norm(back - y, axis=1))
    v = rng.standard_normal((n, d)) * rng.uniform(0.0, 2.0, (n, 1)) / np.sqrt(c)
    # Keep exp_w(v) away from the clamp radius so the inverse is defined.
    v *= np.minimum(1.0, 3.0 / (np.sqrt(c) * K.conformal(w, c) * np.linalg.norm(v, axis=1, keepdims=True) + 1e-300))
    err2 = np.max(np.linalg.norm(K.logmap(w, K.expmap(w, v, c), c) - v, axis=1) / np.maximum(1.0, np.linalg.norm(v, axis=1)))
    return float(max(err1, err2))


def mobius_identity_inverse(c: float, rng, n: int = 1000, d: int = 5) -> float:
    x = random_ball(rng, n, d, c)
    zero = np.zeros_like(x)
    errs = [
        np.abs(K.madd(zero, x, c) - x),
        np.abs(K.madd(x, zero, c) - x),
        np.abs(K.madd(-x, x, c)),
        np.abs(K.madd(x, -x, c)),
    ]
    return float(max(e.max() for e in errs))


def gyro_translation_invariance(c: float, rng, n: int = 1000, d: int = 5) -> float:
    a, x, y = (random_ball(rng, n, d, c, 0.7) for _ in range(3))
    before = K.dist(x, y, c)
    after = K.dist(K.madd(a, x, c), K.madd(a, y, c), c)
    return float(np.max(np.abs(after - before) / np.maximum(1.0, before)))


def triangle_inequality(c: float, rng, n: int = 1000, d: int = 5) -> float:
    x, y, z = (random_ball(rng, n, d, c) for _ in range(3))
    slack = K.dist(x, y, c) + K.dist(y, z, c) - K.dist(x, z, c)
    # Error is the worst violation; any nonnegative slack counts as zero.
    return float(max(0.0, -slack.min()))


def euclidean_limit(rng, n: int = 500, d: int = 5, c: float = EUCLIDEAN_C) -> float:
    x = rng.uniform(-1.0, 1.0, (n, d))
    y = rng.uniform(-1.0, 1.0, (n, d))
    zero = np.zeros_like(x)
    errs = [
        np.abs(K.madd(x, y, c) - (x + y)).max(),
        np.abs(K.expmap(x, y, c) - (x + y)).max(),
        np.abs(K.expmap(zero, y, c) - y).max(),
        np.abs(K.logmap(x, y, c) - (y - x)).max(),
        np.abs(K.dist(x, y, c) - 2.0 * np.linalg.norm(x - y, axis=1)).max(),
    ]
    return float(max(errs))


def _grad_error(objective, params: dict, ball_keys=(), config=None) -> float:
    _, analytic = objective.value_and_grad(params)
    numeric = numeric_gradient(objective.value, params, 1e-5, ball_keys, config)
    return max(relative_error(analytic[k], numeric[k]) for k in params)


def grad_contrastive(c: float, rng, trials: int = 5) -> float:
    worst = 0.0
    for _ in range(trials):
        n, m, d = rng.integers(2, 5), rng.integers(3, 7), rng.integers(2, 5)
        cfg = BallConfig(int(d), c)
        mask = rng.random((n, m)) < 0.7
        mask[:, 0] = True
        params = {
            "queries": random_ball(rng, n, d, c, 0.7),
            "positives": random_ball(rng, n, d, c, 0.7),
            "keys": random_ball(rng, m, d, c, 0.7),
        }
        worst = max(worst, _grad_error(ContrastivePointsObjective(mask, cfg, 0.2), params))
    return worst


def grad_logit_ce(c: float, rng, trials: int = 5) -> float:
    worst = 0.0
    for _ in range(trials):
        n, C, d = rng.integers(2, 6), rng.integers(2, 5), rng.integers(2, 5)
        cfg = BallConfig(int(d), c)
        params = {"features": random_ball(rng, n, d, c, 0.7), "weight": rng.standard_normal((d, C))}
        labels = rng.integers(0, C, n)
        worst = max(worst, _grad_error(LogitCEObjective(labels, cfg, 0.5), params))
    return worst


def grad_distance(c: float, rng, trials: int = 5) -> float:
    worst = 0.0
    for _ in range(trials):
        n, d = rng.integers(1, 5), rng.integers(2, 5)
        cfg = BallConfig(int(d), c)
        params = {"x": random_ball(rng, n, d, c, 0.7), "y": random_ball(rng, n, d, c, 0.7)}
        worst = max(worst, _grad_error(DistanceObjective(rng.uniform(0.5, 2.0, n), cfg), params))
    return worst


def frechet_two_point(c: float, rng, trials: int = 200, d: int = 4) -> float:
    worst = 0.0
    cfg = BallConfig(d, c)
    for _ in range(trials):
        X = random_ball(rng, 2, d, c, 0.8)
        fm = frechet_mean(SampleSet(X, cfg)).mean.coords
        worst = max(worst, float(K.dist(fm, gyrocentroid_array(X, c), c)))
    return worst


def descent_minimizer(X: np.ndarray, c: float, iters: int = 5000) -> np.ndarray:
    """Minimize sum_i d(m, x_i)^2 by preconditioned gradient descent with backtracking.

    Deliberately unrelated to the Karcher iteration: it only uses the distance
    and its pullback.
    """
    m = X.mean(axis=0) * 0.5
    ones = np.ones(len(X))

    def f(p):
        return float(np.sum(K.dist(p[None, :], X, c) ** 2))

    def grad(p):
        dd = K.dist(p[None, :], X, c)
        gx, _ = V.dist_vjp(np.broadcast_to(p, X.shape), X, c, 2.0 * dd * ones)
        return gx.sum(axis=0)

    fm = f(m)
    step = 1.0
    for _ in range(iters):
        g = grad(m) * ((1.0 - c * np.dot(m, m)) ** 2 / 4.0)
        if np.linalg.norm(g) < 1e-13:
            break
        while step > 1e-16:
            cand = K.project(m - step * g, c)
            fc = f(cand)
            if fc < fm:
                m, fm = cand, fc
                step *= 2.0
                break
            step *= 0.5
        else:
            break
    return m


def frechet_bruteforce(c: float, rng, trials: int = 20) -> float:
    worst = 0.0
    for _ in range(trials):
        n, d = int(rng.integers(3, 7)), int(rng.integers(2, 5))
        X = random_ball(rng, n, d, c, 0.8)
        fm = frechet_mean(SampleSet(X, BallConfig(d, c))).mean.coords
        worst = max(worst, float(K.dist(fm, descent_minimizer(X, c), c)))
    return worst


def wrapped_sample_mean(c: float, rng, n: int = 10_000, d: int = 4, variance: float = 0.04, seeds: int = 5) -> float:
    cfg = BallConfig(d, c)
    worst = 0.0
    for s in range(seeds):
        mu = BallPoint(random_ball(rng, 1, d, c, 0.6)[0], cfg)
        draws = sample_wrapped_normal(WrappedNormalParams(mu, variance), n, seed=s)
        est = frechet_mean(draws).mean
        worst = max(worst, float(K.dist(est.coords, mu.coords, c)))
    return worst


def density_relation(c: float, rng, n: int = 100) -> float:
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 8))
        cfg = BallConfig(d, c)
        mu = BallPoint(random_ball(rng, 1, d, c, 0.7)[0], cfg)
        x = BallPoint(random_ball(rng, 1, d, c, 0.7)[0], cfg)
        params = WrappedNormalParams(mu, float(rng.uniform(0.05, 2.0)))
        r = float(K.dist(mu.coords, x.coords, c))
        lhs = wrapped_normal_logdensity_unnorm(x, params)
        rhs = riemannian_normal_logdensity_unnorm(x, params) + log_density_ratio(r, c, d)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
        ratio = density_ratio_term(r, c, d)
        if not 0.0 < ratio <= 1.0:
            return float("inf")
        if d == 1:
            worst = max(worst, abs(lhs - riemannian_normal_logdensity_unnorm(x, params)) / max(1.0, abs(lhs)))
    return worst + abs(density_ratio_term(0.0, c, 5) - 1.0)


def clip_contract(c: float, rng, n: int = 500, d: int = 5) -> float:
    """Excess norm beyond 1/sqrt(c) - eps over ball-producing ops on huge inputs; inf on non-finite output."""
    limit = K.max_norm(c, K.DEFAULT_EPS)
    big = rng.standard_normal((n, d)) * 10.0 ** rng.uniform(-3, 6, (n, 1))
    x = K.project(big, c)
    y = K.project(rng.standard_normal((n, d)) * 1e6, c)
    outs = [
        x,
        K.madd(x, y, c),
        K.mscale(1e6, x, c),
        K.expmap0(big, c),
        K.expmap(x, big, c),
        K.mmatvec(rng.standard_normal((d, d)) * 1e3, x, c),
    ]
    worst = 0.0
    for out in outs:
        if not np.all(np.isfinite(out)):
            return float("inf")
        worst = max(worst, float(np.max(np.linalg.norm(out, axis=-1) - limit)))
    for arr in (K.logmap0(x, c), K.dist(x, y, c), K.logmap(x, y, c)):
        if not np.all(np.isfinite(arr)):
            return float("inf")
    return max(0.0, worst)


# --- suite ------------------------------------------------------------------------

# name, function, base tolerance, whether it depends on the curvature
PROPERTIES: list[tuple[str, Callable, float, bool]] = [
    ("exp_log_inversion", exp_log_inversion, 1e-6, True),
    ("mobius_identity_inverse", mobius_identity_inverse, 1e-9, True),
    ("gyro_translation_invariance", gyro_translation_invariance, 1e-7, True),
    ("triangle_inequality", triangle_inequality, 1e-9, True),
    ("euclidean_limit", euclidean_limit, 1e-4, False),
    ("grad_contrastive", grad_contrastive, 1e-4, True),
    ("grad_logit_ce", grad_logit_ce, 1e-4, True),
    ("grad_distance", grad_distance, 1e-4, True),
    ("frechet_two_point", frechet_two_point, 1e-6, True),
    ("frechet_bruteforce", frechet_bruteforce, 1e-5, True),
    ("wrapped_sample_mean", wrapped_sample_mean, 0.05, True),
    ("density_relation", density_relation, 1e-10, True),
    ("clip_contract", clip_contract, 0.0, True),
]


def run_suite(curvatures: Iterable[float] = DEFAULT_CURVATURES, tol_scale: float = 1.0, seed: int = 0) -> list[PropertyResult]:
    if not tol_scale > 0:
        raise ValueError("tol_scale must be positive")
    results = []
    curvatures = list(curvatures)
    for name, fn, base_tol, per_c in PROPERTIES:
        runs = [(f"{name}[c={c:g}]", (c,)) for c in curvatures] if per_c else [(name, ())]
        for label, args in runs:
            rng = np.random.default_rng([seed, len(results)])
            t0 = time.perf_counter()
            err = fn(*args, rng)
            tol = base_tol * tol_scale
            passed = bool(np.isfinite(err) and err <= tol)
            results.append(PropertyResult(label, passed, float(err), tol, time.perf_counter() - t0))
    return results
