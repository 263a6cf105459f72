"""Per-session reports, average accuracy and forgetting rates, with JSON/CSV I/O."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from hypknowe.errors import InvalidConfigError, ProtocolError, UndefinedRateError

SCHEMA_VERSION = 1
CSV_COLUMNS = ("session", "acc_coarse", "acc_fine", "acc_total", "avg_acc", "f_fine", "f_coarse")


@dataclass(frozen=True)
class SessionReport:
    session: int
    acc_coarse: float
    acc_fine: float
    acc_total: float

    def __post_init__(self):
        for name in ("acc_coarse", "acc_fine", "acc_total"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfigError(f"{name} must lie in [0, 1], got {v!r}")
        if self.session == 0 and (self.acc_fine != 0.0 or self.acc_total != self.acc_coarse):
            raise ProtocolError("session 0 must report acc_fine = 0 and acc_total = acc_coarse")


@dataclass
class RunHistory:
    """Reports for sessions 0..T; ``cumulative_fine_counts[n]`` is C_n (C_0 = 0)."""

    reports: list[SessionReport]
    cumulative_fine_counts: list[int]
    total_fine: int
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        counts = self.cumulative_fine_counts
        if len(counts) != len(self.reports):
            raise InvalidConfigError("need one cumulative count per session")
        if any(b < a for a, b in zip(counts, counts[1:])):
            raise InvalidConfigError("cumulative fine counts must be nondecreasing")
        if counts and counts[-1] > self.total_fine:
            raise InvalidConfigError("cumulative fine count exceeds the total number of fine classes")
        if [r.session for r in self.reports] != list(range(len(self.reports))):
            raise InvalidConfigError("reports must be ordered by session starting at 0")

    @property
    def total_sessions(self) -> int:
        """T, the index of the last session."""
        return len(self.reports) - 1


class ForgettingRates(NamedTuple):
    fine: list[Optional[float]]
    coarse: list[Optional[float]]
    overall: float


def average_accuracy(h: RunHistory, upto: int) -> float:
    if not 0 <= upto < len(h.reports):
        raise InvalidConfigError(f"upto must lie in [0, {len(h.reports)})")
    return math.fsum(r.acc_total for r in h.reports[: upto + 1]) / (upto + 1)


def forgetting_rates(h: RunHistory) -> ForgettingRates:
    """Per-session fine/coarse forgetting and the overall weighted rate.

    fine[n] (n >= 2) = (A_fine^{n-1} - A_fine^n) / A_fine^{n-1}
    coarse[n] (n >= 1) = (A_coarse^0 - A_coarse^n) / A_coarse^0
    overall = 1/(T-1) * sum_{n=2..T} fine[n] C_n/N_fine + sum_{n=1..T-1} coarse[n] (1 - C_n/N_fine)
    """
    T = h.total_sessions
    if T < 2:
        raise ProtocolError("forgetting rates need at least two incremental sessions (T >= 2)")
    reps = h.reports
    fine: list[Optional[float]] = [None] * (T + 1)
    coarse: list[Optional[float]] = [None] * (T + 1)
    for n in range(2, T + 1):
        prev = reps[n - 1].acc_fine
        if prev == 0:
            raise UndefinedRateError("fine", n)
        fine[n] = (prev - reps[n].acc_fine) / prev
    a0 = reps[0].acc_coarse
    if a0 == 0:
        raise UndefinedRateError("coarse", 0)
    for n in range(1, T + 1):
        coarse[n] = (a0 - reps[n].acc_coarse) / a0
    N = h.total_fine
    C = h.cumulative_fine_counts
    fine_part = math.fsum(fine[n] * C[n] / N for n in range(2, T + 1)) / (T - 1)
    coarse_part = math.fsum(coarse[n] * (1.0 - C[n] / N) for n in range(1, T))
    return ForgettingRates(fine, coarse, fine_part + coarse_part)


# --- serialization -------------------------------------------------------------------


def session_rows(h: RunHistory) -> list[dict]:
    try:
        rates = forgetting_rates(h)
        f_fine, f_coarse = rates.fine, rates.coarse
    except (ProtocolError, UndefinedRateError):
        f_fine = f_coarse = [None] * len(h.reports)
    return [
        {
            "session": r.session,
            "acc_coarse": r.acc_coarse,
            "acc_fine": r.acc_fine,
            "acc_total": r.acc_total,
            "avg_acc": average_accuracy(h, r.session),
            "f_fine": f_fine[r.session],
            "f_coarse": f_coarse[r.session],
        }
        for r in h.reports
    ]


def summary(h: RunHistory) -> dict:
    try:
        overall = forgetting_rates(h).overall
    except (ProtocolError, UndefinedRateError):
        overall = None
    T = h.total_sessions
    return {
        "acc_coarse_0": h.reports[0].acc_coarse,
        "acc_fine_T": h.reports[T].acc_fine,
        "avg_acc": average_accuracy(h, T),
        "forgetting": overall,
    }


def to_json_dict(h: RunHistory) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "sessions": session_rows(h),
        "cumulative_fine_counts": list(h.cumulative_fine_counts),
        "total_fine": h.total_fine,
        "total_sessions": h.total_sessions,
        "summary": summary(h),
        "run": h.extra,
    }


def to_json(h: RunHistory) -> str:
    return json.dumps(to_json_dict(h), indent=2, sort_keys=True) + "\n"


def to_csv(h: RunHistory) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in session_rows(h):
        w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


class SchemaError(InvalidConfigError):
    def __init__(self, field_name: str, message: str = "missing or invalid field"):
        super().__init__(f"{message}: {field_name}")
        self.field = field_name


def _require(doc: dict, key: str, where: str = ""):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError(where + key)
    return doc[key]


def from_json_dict(doc: dict) -> RunHistory:
    version = _require(doc, "schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError("schema_version", f"unsupported version {version!r}")
    sessions = _require(doc, "sessions")
    if not isinstance(sessions, list) or not sessions:
        raise SchemaError("sessions", "expected a nonempty list")
    reports = []
    for i, row in enumerate(sessions):
        vals = {}
        for key in ("session", "acc_coarse", "acc_fine", "acc_total"):
            v = _require(row, key, f"sessions[{i}].")
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise SchemaError(f"sessions[{i}].{key}", "expected a number")
            vals[key] = v
        reports.append(SessionReport(int(vals["session"]), float(vals["acc_coarse"]), float(vals["acc_fine"]), float(vals["acc_total"])))
    counts = _require(doc, "cumulative_fine_counts")
    total_fine = _require(doc, "total_fine")
    _require(doc, "total_sessions")
    return RunHistory(reports, [int(c) for c in counts], int(total_fine), doc.get("run", {}))


def from_json(text: str) -> RunHistory:
    return from_json_dict(json.loads(text))
