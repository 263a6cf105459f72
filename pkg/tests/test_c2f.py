import json
import math

import numpy as np
import pytest

from conftest import random_ball
from hypknowe.c2f import (
    CSV_COLUMNS,
    ClassifierState,
    EvalSet,
    LearningConfig,
    RunHistory,
    SchemaError,
    SessionReport,
    average_accuracy,
    ce_loss,
    compute_logits,
    evaluate_session,
    forgetting_rates,
    from_json,
    predict_proba,
    run_protocol,
    to_csv,
    to_json,
    train_base_session,
    train_columns,
    train_incremental_session,
)
from hypknowe.c2f import classifier as classifier_module
from hypknowe.c2f.metrics import summary
from hypknowe.data import HierarchicalDataset, HierarchySpec, SessionSpec, generate_hierarchy, schedule_sessions
from hypknowe.errors import (
    FrozenColumnError,
    InsufficientClassesError,
    InvalidConfigError,
    ProtocolError,
    ShapeError,
    UndefinedRateError,
    ZeroColumnError,
)
from hypknowe.geometry import BallConfig, BallPoint, default_curvature
from hypknowe.geometry import kernels as K
from hypknowe.nn.optim import euclidean_sgd_step


def history(rows, counts, total_fine):
    return RunHistory([SessionReport(*r) for r in rows], counts, total_fine)


# --- metrics ---------------------------------------------------------------------------

HAND = [(0, 0.8, 0.0, 0.8), (1, 0.7, 0.6, 0.5), (2, 0.6, 0.45, 0.4)]


def test_average_accuracy_cases():
    h = history([(0, 0.8, 0.0, 0.8), (1, 0.9, 0.5, 0.6)], [0, 2], 4)
    assert average_accuracy(h, 1) == pytest.approx(0.7, abs=1e-15)
    assert average_accuracy(h, 0) == 0.8
    h3 = history(HAND, [0, 10, 20], 20)
    assert abs(average_accuracy(h3, 2) - (0.8 + 0.5 + 0.4) / 3) < 1e-9
    with pytest.raises(InvalidConfigError):
        average_accuracy(h3, 3)


def test_forgetting_hand_case():
    # F_fine^2 = 0.15 / 0.6 = 0.25; F_coarse^1 = 0.1 / 0.8 = 0.125; F_coarse^2 = 0.25
    # F = 1/(2-1) * 0.25 * 20/20 + 0.125 * (1 - 10/20) = 0.3125
    rates = forgetting_rates(history(HAND, [0, 10, 20], 20))
    assert rates.fine[2] == pytest.approx(0.25, abs=1e-12)
    assert rates.coarse[1] == pytest.approx(0.125, abs=1e-12)
    assert rates.coarse[2] == pytest.approx(0.25, abs=1e-12)
    assert rates.fine[0] is None and rates.fine[1] is None and rates.coarse[0] is None
    assert abs(rates.overall - 0.3125) < 1e-9


def test_forgetting_trivial_cases():
    const = history([(0, 0.9, 0, 0.9), (1, 0.9, 0.5, 0.7), (2, 0.9, 0.5, 0.6), (3, 0.9, 0.5, 0.5)], [0, 2, 4, 6], 6)
    r = forgetting_rates(const)
    assert r.overall == 0.0 and all(v == 0.0 for v in r.fine[2:] + r.coarse[1:])
    drop = history([(0, 0.9, 0, 0.9), (1, 0.9, 0.5, 0.7), (2, 0.9, 0.25, 0.6)], [0, 2, 4], 4)
    assert forgetting_rates(drop).fine[2] == 0.5
    with pytest.raises(ProtocolError):
        forgetting_rates(history(HAND[:2], [0, 10], 20))
    zero = history([(0, 0.9, 0, 0.9), (1, 0.9, 0.0, 0.7), (2, 0.9, 0.25, 0.6)], [0, 2, 4], 4)
    with pytest.raises(UndefinedRateError, match="session 2"):
        forgetting_rates(zero)


def test_report_and_history_validation():
    with pytest.raises(ProtocolError):
        SessionReport(0, 0.8, 0.1, 0.8)
    with pytest.raises(ProtocolError):
        SessionReport(0, 0.8, 0.0, 0.7)
    with pytest.raises(InvalidConfigError):
        SessionReport(1, 1.2, 0.0, 0.5)
    with pytest.raises(InvalidConfigError):
        history(HAND, [0, 20, 10], 20)
    with pytest.raises(InvalidConfigError):
        history(HAND, [0, 10, 30], 20)
    with pytest.raises(InvalidConfigError):
        history(HAND, [0, 10], 20)


def test_json_csv_round_trip():
    h = history(HAND, [0, 10, 20], 20)
    text = to_json(h)
    back = from_json(text)
    assert back.reports == h.reports and back.cumulative_fine_counts == [0, 10, 20]
    assert to_json(back) == text
    doc = json.loads(text)
    assert doc["summary"]["forgetting"] == pytest.approx(0.3125, abs=1e-12)
    lines = to_csv(h).splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 4


def test_json_missing_field_is_named():
    doc = json.loads(to_json(history(HAND, [0, 10, 20], 20)))
    del doc["sessions"][1]["acc_fine"]
    with pytest.raises(SchemaError, match=r"sessions\[1\]\.acc_fine"):
        from_json(json.dumps(doc))
    doc = json.loads(to_json(history(HAND, [0, 10, 20], 20)))
    del doc["total_fine"]
    with pytest.raises(SchemaError, match="total_fine"):
        from_json(json.dumps(doc))


# --- classifier ---------------------------------------------------------------------------


def make_cls(W, c=0.5, frozen=0, temp=0.5):
    return ClassifierState(np.array(W, dtype=float), BallConfig(np.shape(W)[0], c), frozen, temp)


def test_classifier_validation():
    with pytest.raises(ShapeError):
        ClassifierState(np.zeros((3, 2)), BallConfig(2, 1.0))
    with pytest.raises(InvalidConfigError):
        ClassifierState(np.ones((2, 2)), BallConfig(2, 1.0), frozen_upto=3)
    with pytest.raises(InvalidConfigError):
        ClassifierState(np.ones((2, 2)), BallConfig(2, 1.0), softmax_temp=0.0)


def test_aligned_feature_wins():
    cls = make_cls(np.eye(4))
    for k in range(4):
        f = BallPoint(0.5 * np.eye(4)[k], cls.config)
        assert np.argmax(compute_logits(f, cls)) == k


def test_column_scaling_invariance(rng):
    c = 0.5
    W = rng.standard_normal((4, 6))
    cls = make_cls(W, c)
    F = random_ball(rng, 20, 4, c)
    base = compute_logits(F, cls)
    for i in range(6):
        for s in (9.0, 1e-3, 250.0):
            W2 = W.copy()
            W2[:, i] *= s
            out = compute_logits(F, make_cls(W2, c))
            assert np.abs(out - base).max() <= 1e-9
            assert np.array_equal(np.argmax(out, 1), np.argmax(base, 1))


def test_logits_composition_oracle(rng):
    c = 0.5
    W = rng.standard_normal((4, 3))
    cls = make_cls(W, c)
    f = random_ball(rng, 1, 4, c)[0]
    Wn = W / np.linalg.norm(W, axis=0)
    fn = K.project(f / K.dist0(f, c), c)
    ref = K.expmap0(Wn.T @ K.logmap0(fn, c), c)
    np.testing.assert_allclose(compute_logits(f, cls), ref, atol=1e-7)


def test_zero_column_names_class():
    W = np.eye(3)
    W[:, 1] = 0
    with pytest.raises(ZeroColumnError, match="column 1"):
        compute_logits(np.array([0.1, 0.2, 0.0]), make_cls(W))


def test_predict_proba_properties(rng):
    c = 0.5
    cls = make_cls(rng.standard_normal((4, 5)), c)
    P = predict_proba(random_ball(rng, 100, 4, c), cls)
    assert np.abs(P.sum(axis=1) - 1).max() <= 1e-9
    same = make_cls(np.ones((4, 5)), c)
    np.testing.assert_allclose(predict_proba(random_ball(rng, 3, 4, c), same), 0.2, atol=1e-15)
    f = random_ball(rng, 1, 4, c)
    kl = []
    for lam in (0.5, 5.0, 50.0):
        p = predict_proba(f, make_cls(cls.weight, c, temp=lam))[0]
        kl.append(float(np.sum(p * np.log(p * 5))))
    assert kl[0] > kl[1] > kl[2] >= 0


def test_ce_loss_cases(rng):
    c = 0.5
    same = make_cls(np.ones((3, 4)), c)
    F = random_ball(rng, 2, 3, c)
    assert ce_loss((F, np.array([0, 3])), same) == pytest.approx(math.log(4), rel=1e-14)
    cls = make_cls(rng.standard_normal((3, 4)), c)
    P = predict_proba(F, cls)
    hand = -(math.log(P[0, 2]) + math.log(P[1, 0])) / 2
    pairs = [(BallPoint(F[0], cls.config), 2), (BallPoint(F[1], cls.config), 0)]
    assert ce_loss(pairs, cls) == pytest.approx(hand, rel=1e-12)
    assert ce_loss((F, np.array([2, 0])), cls) == pytest.approx(hand, rel=1e-12)
    with pytest.raises(ShapeError):
        ce_loss((F, np.array([0, 4])), cls)
    # near-one-hot logits give near-zero loss
    confident = make_cls(np.eye(3), 1.0, temp=1e-3)
    f = np.array([[0.9, 0.0, 0.0]])
    assert ce_loss((f, np.array([0])), confident) < 1e-10


def test_train_columns_masks_frozen(rng):
    c = 0.5
    cls = make_cls(rng.standard_normal((3, 5)), c, frozen=2)
    snap = cls.frozen_snapshot()
    F = random_ball(rng, 12, 3, c)
    losses = train_columns(cls, F, rng.integers(2, 4, 12), 4, 0.1, 30)
    assert np.array_equal(cls.weight[:, :2], snap)
    assert losses[-1] < losses[0]
    with pytest.raises(InvalidConfigError):
        train_columns(cls, F, rng.integers(0, 2, 12), 2, 0.1, 1)


def test_train_columns_detects_frozen_violation(rng, monkeypatch):
    def leaky(param, grad, lr, momentum, state, weight_decay, mask=None):
        return euclidean_sgd_step(param, grad, lr, momentum, state, weight_decay, None)

    monkeypatch.setattr(classifier_module, "euclidean_sgd_step", leaky)
    cls = make_cls(rng.standard_normal((3, 4)), 0.5, frozen=2)
    with pytest.raises(FrozenColumnError):
        train_columns(cls, random_ball(rng, 6, 3, 0.5), rng.integers(0, 4, 6), 4, 0.1, 2)


# --- evaluation -------------------------------------------------------------------------


def test_evaluate_session_zero_convention(rng):
    cls = make_cls(rng.standard_normal((4, 6)), 0.5, frozen=2)
    ev = EvalSet(random_ball(rng, 30, 4, 0.5), rng.integers(0, 2, 30), rng.integers(0, 4, 30))
    r = evaluate_session(ev, cls, 0, 2, 0)
    assert r.acc_fine == 0.0 and r.acc_total == r.acc_coarse


def test_evaluate_oracle_classifier():
    n_coarse, n_fine = 2, 4
    D = n_coarse + n_fine
    cls = make_cls(np.eye(D), 1.0)
    fine = np.repeat(np.arange(n_fine), 5)
    coarse = fine // 2
    F = 0.8 * np.eye(D)[n_coarse + fine] + 0.4 * np.eye(D)[coarse]
    F = 0.9 * F / np.linalg.norm(F, axis=1, keepdims=True)
    r = evaluate_session(EvalSet(F, coarse, fine), cls, 2, n_coarse, n_fine)
    assert (r.acc_coarse, r.acc_fine, r.acc_total) == (1.0, 1.0, 1.0)


def test_evaluate_random_classifier_near_chance():
    rng = np.random.default_rng(5)
    n_coarse, n_fine, N = 3, 9, 4000
    C = n_coarse + n_fine
    cls = make_cls(rng.standard_normal((8, C)), 0.5)
    fine = rng.integers(0, n_fine, N)
    ev = EvalSet(random_ball(rng, N, 8, 0.5), fine // 3, fine)
    r = evaluate_session(ev, cls, 3, n_coarse, n_fine)
    p = 1 / C
    assert abs(r.acc_total - p) <= 3 * math.sqrt(p * (1 - p) / N)


# --- sessions ---------------------------------------------------------------------------


def separable_two_coarse(seed=0):
    rng = np.random.default_rng(seed)
    n = 60
    X = np.concatenate([rng.normal(2.0, 0.5, (n, 6)), rng.normal(-2.0, 0.5, (n, 6))])
    coarse = np.repeat([0, 1], n)
    fine = coarse * 2 + rng.integers(0, 2, 2 * n)
    return HierarchicalDataset(X, coarse, fine, 2)


def test_base_session_separable_two_coarse():
    ds = separable_two_coarse()
    cfg = BallConfig(4, default_curvature(4))
    hyper = LearningConfig(base_epochs=100, base_lr=0.12)
    idx = np.arange(len(ds))
    res = train_base_session(ds, idx, cfg, 4, hyper, seed=1)
    assert res.report.acc_coarse > 0.9
    assert res.report.acc_fine == 0.0 and res.report.acc_total == res.report.acc_coarse
    assert res.epoch_losses[-1] < res.epoch_losses[0]
    assert res.classifier.frozen_upto == 2
    assert all(not v.flags.writeable for v in res.params.values())
    again = train_base_session(ds, idx, cfg, 4, hyper, seed=1)
    assert again.report == res.report
    assert again.epoch_losses == res.epoch_losses


def test_base_session_needs_two_coarse_classes():
    ds = separable_two_coarse()
    with pytest.raises(InsufficientClassesError):
        train_base_session(ds, np.arange(60), BallConfig(4, 1.0), 4, LearningConfig(base_epochs=1))


def _incremental_setup(rng, c=0.5, D=4):
    W = np.zeros((D, 4))
    W[:, :2] = rng.standard_normal((D, 2))
    cls = ClassifierState(W, BallConfig(D, c), frozen_upto=2)
    centers = np.array([[1.0, 0.2, 0, 0], [-0.2, 1.0, 0, 0]]) * 0.6 / math.sqrt(c)

    def draw(k, n):
        return K.project(centers[k] + rng.normal(0, 0.15 / math.sqrt(c), (n, D)), c)

    return cls, draw


def test_incremental_two_way_five_shot(rng):
    cls, draw = _incremental_setup(rng)
    spec = SessionSpec(1, (0, 2), 2, 5, 15)
    sup = np.concatenate([draw(0, 5), draw(1, 5)])
    lab = np.repeat([0, 1], 5)
    snap = cls.frozen_snapshot()
    losses = train_incremental_session(spec, sup, lab, cls, 2, True, seed=0)
    assert np.array_equal(cls.weight[:, :2], snap)
    assert cls.frozen_upto == 4 and losses[-1] < losses[0]
    Q = np.concatenate([draw(0, 15), draw(1, 15)])
    pred = np.argmax(compute_logits(Q, cls, True, slice(2, 4)), axis=1)
    assert np.mean(pred == np.repeat([0, 1], 15)) > 0.8


def test_incremental_point_mass_support(rng):
    cls, draw = _incremental_setup(rng)
    spec = SessionSpec(1, (0, 2), 2, 5, 15)
    a, b = draw(0, 1), draw(1, 1)
    sup = np.concatenate([np.repeat(a, 5, 0), np.repeat(b, 5, 0)])
    from hypknowe.c2f import augment_class

    extra = augment_class(np.repeat(a, 5, 0), cls.config, 3, seed=0)
    assert np.abs(extra - a).max() < 1e-9
    losses = train_incremental_session(spec, sup, np.repeat([0, 1], 5), cls, 2, True, seed=0)
    assert np.all(np.isfinite(losses)) and losses[-1] < losses[0]


def test_incremental_rejects_bad_support(rng):
    cls, draw = _incremental_setup(rng)
    spec = SessionSpec(1, (0, 2), 2, 5, 15)
    with pytest.raises(ProtocolError):
        train_incremental_session(spec, draw(0, 9), np.repeat([0, 1], 5)[:9], cls, 2, False, 0)
    with pytest.raises(ProtocolError):
        train_incremental_session(spec, draw(0, 10), np.zeros(10, int), cls, 2, False, 0)
    with pytest.raises(ProtocolError):
        train_incremental_session(SessionSpec(2, (2, 4), 2, 5, 15), draw(0, 10), np.repeat([2, 3], 5), cls, 2, False, 0)


QUICK = LearningConfig(base_epochs=15, inc_epochs=20)


@pytest.fixture(scope="module")
def quick_run():
    ds = generate_hierarchy(HierarchySpec())
    sch = schedule_sessions(ds.fine, 4, 5, 15, seed=0)
    cfg = BallConfig(16, default_curvature(16))
    return ds, sch, cfg, run_protocol(ds, sch, cfg, QUICK, augment=True, seed=0)


def test_protocol_freeze_invariance(quick_run):
    _, sch, _, res = quick_run
    snaps = res.frozen_snapshots
    assert [s.shape[1] for s in snaps] == [5 + c for c in sch.cumulative_fine_counts]
    for earlier, later in zip(snaps, snaps[1:]):
        assert np.array_equal(later[:, : earlier.shape[1]], earlier)
    assert np.array_equal(res.classifier.weight, snaps[-1])


def test_protocol_history_shape(quick_run):
    _, sch, _, res = quick_run
    h = res.history
    assert len(h.reports) == 6 and h.total_sessions == 5
    assert h.cumulative_fine_counts == [0, 4, 8, 12, 16, 20]
    assert sum(s.way for s in sch.sessions) == h.total_fine == 20
    assert h.reports[0].acc_fine == 0.0
    # coarse head and extractor are frozen, so coarse accuracy never moves
    assert len({r.acc_coarse for r in h.reports}) == 1
    assert summary(h)["forgetting"] is not None


def test_protocol_determinism(quick_run):
    ds, sch, cfg, res = quick_run
    again = run_protocol(ds, sch, cfg, QUICK, augment=True, seed=0)
    assert again.history.reports == res.history.reports
    assert to_json(again.history) == to_json(res.history)
