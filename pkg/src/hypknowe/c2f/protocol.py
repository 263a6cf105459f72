"""Coarse-to-fine few-shot class-incremental training and evaluation.

Session 0 trains the feature extractor and the coarse classifier columns on
coarse labels. Each later session freezes everything learned so far and fits
only the classifier columns of its new fine classes from a few support shots,
optionally augmented with wrapped-normal samples around each class mean.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from hypknowe.c2f.classifier import ClassifierState, compute_logits, train_columns
from hypknowe.c2f.metrics import RunHistory, SessionReport
from hypknowe.data import HierarchicalDataset, Schedule, SessionSpec
from hypknowe.errors import InsufficientClassesError, ProtocolError
from hypknowe.geometry import BallConfig
from hypknowe.geometry import kernels as K
from hypknowe.nn.model import BALL_PARAMS, BaseSessionObjective, extract, init_extractor
from hypknowe.nn.optim import euclidean_sgd_step, rsgd_update
from hypknowe.stats import SampleSet, WrappedNormalParams, estimate_variance, frechet_mean, sample_wrapped_normal

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LearningConfig:
    base_epochs: int = 100
    base_lr: float = 0.12
    batch_size: int = 128
    tau: float = 0.2
    softmax_temp: float = 0.5
    contrastive_weight: float = 1.0
    view_noise: float = 0.05
    inc_epochs: int = 50
    inc_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    n_augment: int = 3
    init_scale: float = 0.5
    grad_clip: float = 1.0


@dataclass
class EvalSet:
    """Frozen-extractor features of the test samples with both label levels."""

    features: np.ndarray
    coarse: np.ndarray
    fine: np.ndarray


@dataclass
class BaseResult:
    params: dict
    classifier: ClassifierState
    report: SessionReport
    epoch_losses: list[float] = field(default_factory=list)


def clip_global_norm(grads: dict, max_norm: float) -> dict:
    """Rescale all gradients together so their joint norm is at most ``max_norm`` (0 disables)."""
    if max_norm <= 0:
        return grads
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


def _session_seed(seed: int, session: int, salt: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, session, salt])


def train_base_session(
    ds: HierarchicalDataset,
    indices: np.ndarray,
    config: BallConfig,
    n_fine: int,
    hyper: LearningConfig = LearningConfig(),
    seed: int = 0,
    eval_indices: np.ndarray | None = None,
) -> BaseResult:
    """Jointly minimize the hyperbolic contrastive loss and the coarse cross-entropy.

    Returns the trained (now frozen) extractor parameters, a classifier with
    its coarse columns trained and frozen, and the session-0 report on
    ``eval_indices`` (defaults to the training indices).
    """
    X = ds.inputs[indices]
    coarse = ds.coarse[indices]
    n_coarse = ds.n_coarse
    if len(np.unique(coarse)) < 2:
        raise InsufficientClassesError("the base session needs at least two coarse classes")
    rng = np.random.default_rng(_session_seed(seed, 0))
    params = init_extractor(X.shape[1], config, rng, hyper.init_scale)
    params["classifier"] = rng.standard_normal((config.dim, n_coarse))
    state = {k: np.zeros_like(v) for k, v in params.items() if k not in BALL_PARAMS}
    c, eps = config.curvature, config.clip_eps

    epoch_losses = []
    n = len(X)
    for epoch in range(hyper.base_epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            xb = X[idx]
            x1 = xb + hyper.view_noise * rng.standard_normal(xb.shape)
            x2 = xb + hyper.view_noise * rng.standard_normal(xb.shape)
            obj = BaseSessionObjective(x1, x2, coarse[idx], config, hyper.tau, hyper.softmax_temp, hyper.contrastive_weight)
            loss, grads = obj.value_and_grad(params)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite base-session loss at epoch {epoch}")
            grads = clip_global_norm(dict(grads), hyper.grad_clip)
            for key, g in grads.items():
                if key in BALL_PARAMS:
                    params[key] = rsgd_update(params[key], g, hyper.base_lr, c, eps)
                else:
                    params[key], state[key] = euclidean_sgd_step(
                        params[key], g, hyper.base_lr, hyper.momentum, state[key], hyper.weight_decay
                    )
            total += loss * len(idx)
        epoch_losses.append(total / n)
        if epoch % 20 == 0 or epoch == hyper.base_epochs - 1:
            log.debug("base epoch %d loss %.6f", epoch, epoch_losses[-1])

    weight = np.zeros((config.dim, n_coarse + n_fine))
    weight[:, :n_coarse] = params.pop("classifier")
    cls = ClassifierState(weight, config, frozen_upto=n_coarse, softmax_temp=hyper.softmax_temp)
    for v in params.values():
        v.setflags(write=False)
    ev = eval_indices if eval_indices is not None else indices
    eval_set = make_eval_set(ds, ev, params, config)
    report = evaluate_session(eval_set, cls, 0, n_coarse, 0)
    return BaseResult(params, cls, report, epoch_losses)


def make_eval_set(ds: HierarchicalDataset, indices, params: dict, config: BallConfig) -> EvalSet:
    return EvalSet(extract(params, ds.inputs[indices], config), ds.coarse[indices], ds.fine[indices])


def _class_prototype_direction(feats: np.ndarray, config: BallConfig) -> np.ndarray:
    """Unit tangent direction at the origin of the class Fréchet mean."""
    mu = frechet_mean(SampleSet(feats, config)).mean
    v = K.logmap0(mu.coords, config.curvature)
    n = np.linalg.norm(v)
    if n == 0:
        v = K.logmap0(feats.mean(axis=0), config.curvature)
        n = np.linalg.norm(v)
    return v / n if n > 0 else np.full(config.dim, 1.0 / np.sqrt(config.dim))


def augment_class(feats: np.ndarray, config: BallConfig, n_samples: int, seed) -> np.ndarray:
    """Draw wrapped-normal features around the Fréchet mean of ``feats``."""
    s = SampleSet(feats, config)
    mu = frechet_mean(s).mean
    var = estimate_variance(s, mu)
    return sample_wrapped_normal(WrappedNormalParams(mu, var), n_samples, seed).coords


def train_incremental_session(
    spec: SessionSpec,
    support_features: np.ndarray,
    support_fine: np.ndarray,
    cls: ClassifierState,
    n_coarse: int,
    augment: bool,
    seed: int,
    hyper: LearningConfig = LearningConfig(),
) -> list[float]:
    """Fit the columns of the session's new fine classes; everything else stays frozen.

    ``support_fine`` are fine labels in ``spec.class_range``. New columns are
    initialized at the class prototype direction, then trained with
    cross-entropy over all learned columns. ``cls`` is updated in place and
    ``frozen_upto`` advances past the new columns. Returns per-epoch losses.
    """
    if spec.index < 1:
        raise ProtocolError("incremental sessions start at index 1")
    F = np.asarray(support_features, dtype=float)
    y = np.asarray(support_fine, dtype=int)
    if len(F) != spec.way * spec.shot or len(y) != len(F):
        raise ProtocolError(f"support set has {len(F)} items, expected way*shot = {spec.way * spec.shot}")
    lo, hi = spec.class_range
    if set(np.unique(y)) != set(range(lo, hi)):
        raise ProtocolError("support labels do not match the session's class range")
    col_lo, col_hi = n_coarse + lo, n_coarse + hi
    if cls.frozen_upto != col_lo:
        raise ProtocolError(f"classifier frozen up to {cls.frozen_upto}, session expects {col_lo}")

    config = cls.config
    feats, labels = [F], [y]
    for f in range(lo, hi):
        cf = F[y == f]
        cls.weight[:, n_coarse + f] = _class_prototype_direction(cf, config)
        if augment and hyper.n_augment > 0:
            extra = augment_class(cf, config, hyper.n_augment, _session_seed(seed, spec.index, f + 1))
            feats.append(extra)
            labels.append(np.full(len(extra), f))
    F_all = np.concatenate(feats)
    y_all = np.concatenate(labels) + n_coarse
    losses = train_columns(
        cls, F_all, y_all, col_hi, hyper.inc_lr, hyper.inc_epochs, hyper.momentum, hyper.weight_decay
    )
    cls.frozen_upto = col_hi
    return losses


def evaluate_session(ev: EvalSet, cls: ClassifierState, session: int, n_coarse: int, learned_fine: int) -> SessionReport:
    """Coarse, fine and total accuracy after a session.

    coarse: argmax over coarse columns against coarse labels, on every test sample.
    fine:   argmax over learned fine columns against fine labels, on samples of learned fine classes.
    total:  argmax over all learned columns against the finest learned label of each sample.
    Session 0 reports fine = 0 and total = coarse.
    """
    F = ev.features
    coarse_pred = np.argmax(compute_logits(F, cls, True, slice(0, n_coarse)), axis=1)
    acc_coarse = float(np.mean(coarse_pred == ev.coarse))
    if session == 0 or learned_fine == 0:
        return SessionReport(session, acc_coarse, 0.0, acc_coarse)

    learned = ev.fine < learned_fine
    fine_pred = np.argmax(compute_logits(F[learned], cls, True, slice(n_coarse, n_coarse + learned_fine)), axis=1)
    acc_fine = float(np.mean(fine_pred == ev.fine[learned])) if learned.any() else 0.0

    total_pred = np.argmax(compute_logits(F, cls, True, slice(0, n_coarse + learned_fine)), axis=1)
    target = np.where(learned, n_coarse + ev.fine, ev.coarse)
    acc_total = float(np.mean(total_pred == target))
    return SessionReport(session, acc_coarse, acc_fine, acc_total)


@dataclass
class ProtocolResult:
    history: RunHistory
    base: BaseResult
    classifier: ClassifierState
    frozen_snapshots: list[np.ndarray]


def run_protocol(
    ds: HierarchicalDataset,
    schedule: Schedule,
    config: BallConfig,
    hyper: LearningConfig = LearningConfig(),
    augment: bool = True,
    seed: int = 0,
) -> ProtocolResult:
    """Base session followed by every scheduled incremental session."""
    n_coarse, n_fine = ds.n_coarse, ds.n_fine
    test_idx = np.sort(np.concatenate([schedule.query[f] for f in range(n_fine)]))
    base = train_base_session(ds, schedule.base, config, n_fine, hyper, seed, eval_indices=test_idx)
    cls = base.classifier
    ev = make_eval_set(ds, test_idx, base.params, config)
    reports = [base.report]
    snapshots = [cls.frozen_snapshot()]
    for spec in schedule.sessions:
        sup = np.concatenate([schedule.support[f] for f in spec.classes])
        feats = extract(base.params, ds.inputs[sup], config)
        train_incremental_session(spec, feats, ds.fine[sup], cls, n_coarse, augment, seed, hyper)
        snapshots.append(cls.frozen_snapshot())
        reports.append(evaluate_session(ev, cls, spec.index, n_coarse, spec.class_range[1]))
        log.info("session %d: %s", spec.index, reports[-1])
    history = RunHistory(reports, schedule.cumulative_fine_counts, n_fine)
    return ProtocolResult(history, base, cls, snapshots)
