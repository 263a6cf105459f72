"""Coarse-to-fine few-shot class-incremental protocol and its metrics."""

from hypknowe.c2f.classifier import ClassifierState, ce_loss, compute_logits, predict_proba, train_columns
from hypknowe.c2f.metrics import (
    CSV_COLUMNS,
    ForgettingRates,
    RunHistory,
    SchemaError,
    SessionReport,
    average_accuracy,
    forgetting_rates,
    from_json,
    to_csv,
    to_json,
)
from hypknowe.c2f.protocol import (
    EvalSet,
    LearningConfig,
    augment_class,
    evaluate_session,
    make_eval_set,
    run_protocol,
    train_base_session,
    train_incremental_session,
)

__all__ = [
    "CSV_COLUMNS",
    "ClassifierState",
    "EvalSet",
    "ForgettingRates",
    "LearningConfig",
    "RunHistory",
    "SchemaError",
    "SessionReport",
    "augment_class",
    "average_accuracy",
    "ce_loss",
    "compute_logits",
    "evaluate_session",
    "forgetting_rates",
    "from_json",
    "make_eval_set",
    "predict_proba",
    "run_protocol",
    "to_csv",
    "to_json",
    "train_base_session",
    "train_columns",
    "train_incremental_session",
]
