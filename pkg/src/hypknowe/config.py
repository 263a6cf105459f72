"""Experiment configuration (JSON) with field-level validation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from hypknowe.c2f.protocol import LearningConfig
from hypknowe.data import HierarchySpec
from hypknowe.errors import InvalidConfigError
from hypknowe.geometry import BallConfig, default_curvature

SCHEMA_VERSION = 1
EUCLIDEAN_LIMIT_CURVATURE = 1e-8


class ConfigFieldError(InvalidConfigError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ProtocolSpec:
    way: int = 4
    shot: int = 5
    query: int = 15
    sessions: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    hierarchy: HierarchySpec = field(default_factory=HierarchySpec)
    protocol: ProtocolSpec = field(default_factory=ProtocolSpec)
    feature_dim: int = 16
    curvature: float | str = "auto"
    hyperbolic: bool = True
    augment: bool = True
    learning: LearningConfig = field(default_factory=LearningConfig)
    seed: int = 0
    output: str = "runs/default"

    def resolved_curvature(self) -> float:
        if not self.hyperbolic:
            return EUCLIDEAN_LIMIT_CURVATURE
        if self.curvature == "auto":
            return default_curvature(self.feature_dim)
        return float(self.curvature)

    def ball(self) -> BallConfig:
        return BallConfig(self.feature_dim, self.resolved_curvature())

    def to_dict(self) -> dict:
        """JSON document in the on-disk schema; ``parse_config(cfg.to_dict()) == cfg``."""
        L = self.learning
        doc = {"schema_version": SCHEMA_VERSION}
        doc["hierarchy"] = asdict(self.hierarchy)
        doc["protocol"] = asdict(self.protocol)
        doc.update(feature_dim=self.feature_dim, curvature=self.curvature, hyperbolic=self.hyperbolic,
                   augment=self.augment, seed=self.seed, output=self.output)
        for section, mapping in _LEARNING_GROUPS.items():
            doc[section] = {k: getattr(L, attr) for k, attr in mapping.items()}
        return doc


# JSON key -> LearningConfig attribute, grouped by top-level section.
_LEARNING_GROUPS = {
    "temperatures": {"tau": "tau", "lambda": "softmax_temp"},
    "learning_rates": {"base": "base_lr", "incremental": "inc_lr"},
    "epochs": {"base": "base_epochs", "incremental": "inc_epochs"},
    "training": {
        "batch_size": "batch_size",
        "momentum": "momentum",
        "weight_decay": "weight_decay",
        "contrastive_weight": "contrastive_weight",
        "view_noise": "view_noise",
        "n_augment": "n_augment",
        "init_scale": "init_scale",
        "grad_clip": "grad_clip",
    },
}
_SECTIONS = {"hierarchy": HierarchySpec, "protocol": ProtocolSpec}
_SCALARS = {"feature_dim": int, "hyperbolic": bool, "augment": bool, "seed": int, "output": str}


def _coerce(name: str, value, kind):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigFieldError(name, f"expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigFieldError(name, f"expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigFieldError(name, f"expected a finite number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigFieldError(name, f"expected a string, got {value!r}")
        return value
    raise AssertionError(kind)


def _section(name: str, cls, raw) -> object:
    if not isinstance(raw, dict):
        raise ConfigFieldError(name, "expected an object")
    defaults = cls()
    kwargs = {}
    for key, value in raw.items():
        if not hasattr(defaults, key):
            raise ConfigFieldError(f"{name}.{key}", "unknown field")
        kwargs[key] = _coerce(f"{name}.{key}", value, type(getattr(defaults, key)))
    try:
        return cls(**kwargs)
    except InvalidConfigError as exc:
        raise ConfigFieldError(name, str(exc)) from None


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a config document; missing keys take their defaults, unknown keys are errors."""
    if not isinstance(doc, dict):
        raise ConfigFieldError("<root>", "expected a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigFieldError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    kwargs = {}
    learning = {}
    defaults = LearningConfig()
    for key, value in doc.items():
        if key == "schema_version":
            continue
        if key in _SECTIONS:
            kwargs[key] = _section(key, _SECTIONS[key], value)
        elif key in _LEARNING_GROUPS:
            if not isinstance(value, dict):
                raise ConfigFieldError(key, "expected an object")
            for sub, v in value.items():
                attr = _LEARNING_GROUPS[key].get(sub)
                if attr is None:
                    raise ConfigFieldError(f"{key}.{sub}", "unknown field")
                learning[attr] = _coerce(f"{key}.{sub}", v, type(getattr(defaults, attr)))
        elif key == "curvature":
            if value != "auto":
                value = _coerce("curvature", value, float)
                if value <= 0:
                    raise ConfigFieldError("curvature", 'must be positive or "auto"')
            kwargs[key] = value
        elif key in _SCALARS:
            kwargs[key] = _coerce(key, value, _SCALARS[key])
        else:
            raise ConfigFieldError(key, "unknown field")
    kwargs["learning"] = LearningConfig(**learning)
    cfg = ExperimentConfig(**kwargs)
    _validate(cfg)
    return cfg


def _field_name(attr: str) -> str:
    for section, mapping in _LEARNING_GROUPS.items():
        for key, a in mapping.items():
            if a == attr:
                return f"{section}.{key}"
    return attr


def _validate(cfg: ExperimentConfig) -> None:
    L = cfg.learning
    for name in ("base_lr", "inc_lr", "tau", "softmax_temp"):
        if not getattr(L, name) > 0:
            raise ConfigFieldError(_field_name(name), "must be positive")
    for name in ("base_epochs", "inc_epochs", "batch_size"):
        if getattr(L, name) < 1:
            raise ConfigFieldError(_field_name(name), "must be at least 1")
    if L.n_augment < 0:
        raise ConfigFieldError("training.n_augment", "must be nonnegative")
    if not 0 <= L.momentum < 1:
        raise ConfigFieldError("training.momentum", "must lie in [0, 1)")
    if L.grad_clip < 0:
        raise ConfigFieldError("training.grad_clip", "must be nonnegative (0 disables clipping)")
    if L.weight_decay < 0 or L.view_noise < 0 or not L.init_scale > 0:
        raise ConfigFieldError("training", "weight_decay and view_noise must be nonnegative, init_scale positive")
    if cfg.feature_dim < 1:
        raise ConfigFieldError("feature_dim", "must be at least 1")
    P, H = cfg.protocol, cfg.hierarchy
    if min(P.way, P.shot, P.query) < 1:
        raise ConfigFieldError("protocol", "way, shot and query must be at least 1")
    expected = math.ceil(H.n_fine / P.way)
    if P.sessions != expected:
        raise ConfigFieldError(
            "protocol.sessions", f"{H.n_fine} fine classes at way={P.way} give {expected} sessions, not {P.sessions}"
        )
    if P.shot + P.query >= H.samples_per_fine:
        raise ConfigFieldError("protocol", "shot + query must leave samples for the base session")
    try:
        cfg.ball()
    except InvalidConfigError as exc:
        raise ConfigFieldError("curvature", str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigFieldError("<root>", f"invalid JSON: {exc}") from None
    return parse_config(doc)


def default_config_dict() -> dict:
    return ExperimentConfig().to_dict()
