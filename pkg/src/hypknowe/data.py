"""Synthetic coarse/fine datasets and few-shot session scheduling."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from hypknowe.errors import InsufficientSamplesError, InvalidConfigError, ProtocolError


@dataclass(frozen=True)
class HierarchySpec:
    n_coarse: int = 5
    fine_per_coarse: int = 4
    input_dim: int = 16
    coarse_spread: float = 1.0
    fine_spread: float = 0.3
    noise: float = 0.3
    seed: int = 0
    samples_per_fine: int = 40

    def __post_init__(self):
        for name in ("n_coarse", "fine_per_coarse", "input_dim", "samples_per_fine"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfigError(f"{name} must be a positive integer")
        if self.coarse_spread <= 0 or self.fine_spread < 0 or self.noise < 0:
            raise InvalidConfigError("spreads must be nonnegative and coarse_spread positive")
        if not self.fine_spread < self.coarse_spread:
            raise InvalidConfigError("fine_spread must be smaller than coarse_spread")

    @property
    def n_fine(self) -> int:
        return self.n_coarse * self.fine_per_coarse


@dataclass(frozen=True)
class LabeledSample:
    input: np.ndarray
    coarse_label: int
    fine_label: int


@dataclass(frozen=True, eq=False)
class HierarchicalDataset:
    """Column-stored samples; iterating yields :class:`LabeledSample`."""

    inputs: np.ndarray
    coarse: np.ndarray
    fine: np.ndarray
    fine_per_coarse: int

    def __len__(self) -> int:
        return len(self.fine)

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(self.inputs[i], int(self.coarse[i]), int(self.fine[i]))

    def __iter__(self) -> Iterator[LabeledSample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def n_coarse(self) -> int:
        return int(self.coarse.max()) + 1

    @property
    def n_fine(self) -> int:
        return int(self.fine.max()) + 1


def generate_hierarchy(spec: HierarchySpec) -> HierarchicalDataset:
    """Gaussian coarse prototypes, fine prototypes around them, samples around those.

    Fine class ``f`` belongs to coarse class ``f // fine_per_coarse``. Samples
    are ordered by fine class with ``samples_per_fine`` each.
    """
    rng = np.random.default_rng(spec.seed)
    d = spec.input_dim
    coarse_protos = rng.standard_normal((spec.n_coarse, d)) * spec.coarse_spread
    fine_ids = np.arange(spec.n_fine)
    fine_protos = coarse_protos[fine_ids // spec.fine_per_coarse] + rng.standard_normal((spec.n_fine, d)) * spec.fine_spread
    fine = np.repeat(fine_ids, spec.samples_per_fine)
    inputs = fine_protos[fine] + rng.standard_normal((len(fine), d)) * spec.noise
    return HierarchicalDataset(inputs, fine // spec.fine_per_coarse, fine, spec.fine_per_coarse)


def save_csv(ds: HierarchicalDataset, path: str | Path) -> None:
    d = ds.inputs.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"input_{i}" for i in range(d)] + ["coarse_label", "fine_label"])
        for x, c, f in zip(ds.inputs, ds.coarse, ds.fine):
            w.writerow([repr(float(v)) for v in x] + [int(c), int(f)])


def load_csv(path: str | Path, fine_per_coarse: int) -> HierarchicalDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n_in = sum(h.startswith("input_") for h in header)
    arr = np.array(body, dtype=float)
    return HierarchicalDataset(arr[:, :n_in], arr[:, n_in].astype(int), arr[:, n_in + 1].astype(int), fine_per_coarse)


# --- session scheduling -------------------------------------------------------------


@dataclass(frozen=True)
class SessionSpec:
    """Incremental session ``index`` learning fine classes ``class_range[0] <= f < class_range[1]``.

    In classifier-column space these are columns ``n_coarse + f``.
    """

    index: int
    class_range: tuple[int, int]
    way: int
    shot: int
    query: int

    def __post_init__(self):
        lo, hi = self.class_range
        if self.index >= 1 and self.way != hi - lo:
            raise ProtocolError("way must equal the size of the class range")
        if self.shot < 1 or self.query < 1:
            raise ProtocolError("shot and query must be at least 1")

    @property
    def classes(self) -> range:
        return range(*self.class_range)


@dataclass(frozen=True, eq=False)
class Schedule:
    sessions: list[SessionSpec]
    support: dict[int, np.ndarray]
    query: dict[int, np.ndarray]
    base: np.ndarray

    @property
    def cumulative_fine_counts(self) -> list[int]:
        """C_n for n = 0..T (0 at the base session)."""
        return [0] + [s.class_range[1] for s in self.sessions]


def plan_sessions(n_fine: int, way: int, shot: int, query: int) -> list[SessionSpec]:
    if way < 1 or n_fine < 1:
        raise ProtocolError("way and n_fine must be positive")
    specs = []
    for t, lo in enumerate(range(0, n_fine, way), start=1):
        hi = min(lo + way, n_fine)
        if hi - lo < way:
            warnings.warn(f"last session {t} has only {hi - lo} classes (way={way})", stacklevel=2)
        specs.append(SessionSpec(t, (lo, hi), hi - lo, shot, query))
    return specs


def schedule_sessions(fine_labels, way: int, shot: int, query: int, seed: int) -> Schedule:
    """Split each fine class into support/query/base indices and group classes into sessions.

    Sessions take fine classes in label order, ``way`` at a time. Within each
    class the sample order is shuffled with ``seed``; the first ``shot`` go to
    the support set, the next ``query`` to the test set, and the remainder is
    used (with coarse labels) in the base session.
    """
    fine_labels = np.asarray(fine_labels, dtype=int)
    n_fine = int(fine_labels.max()) + 1
    sessions = plan_sessions(n_fine, way, shot, query)
    rng = np.random.default_rng(seed)
    support, queries, base = {}, {}, []
    for f in range(n_fine):
        idx = np.flatnonzero(fine_labels == f)
        if shot + query > len(idx):
            raise InsufficientSamplesError(f"fine class {f} has {len(idx)} samples, needs shot+query={shot + query}")
        idx = rng.permutation(idx)
        support[f] = np.sort(idx[:shot])
        queries[f] = np.sort(idx[shot:shot + query])
        base.append(idx[shot + query:])
    return Schedule(sessions, support, queries, np.sort(np.concatenate(base)))
