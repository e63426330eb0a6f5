"""Work generation: data split, per-epoch subtasks, epoch barrier, stopping rule."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .models import Dataset, LocalTrainConfig, ModelSpec
from .vcasgd import AlphaPolicy


class EpochStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class JobSpec:
    model: ModelSpec
    dataset: Dataset
    n_subsets: int = 50
    accuracy_threshold: float = 0.73
    max_epochs: int = 40
    alpha_policy: AlphaPolicy = field(default_factory=lambda: AlphaPolicy.fixed(0.95))
    local_cfg: LocalTrainConfig = field(default_factory=LocalTrainConfig)
    validation_fraction: float = 0.1
    split_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.accuracy_threshold <= 1.0:
            raise ValueError("accuracy_threshold must lie in (0, 1]")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        n_train = len(self.dataset) - holdout_size(len(self.dataset), self.validation_fraction)
        if not 1 <= self.n_subsets <= n_train:
            raise ValueError(f"n_subsets must lie in 1..{n_train} (training samples), got {self.n_subsets}")
        if self.local_cfg.batch_size > n_train // self.n_subsets:
            raise ValueError(
                f"batch_size {self.local_cfg.batch_size} exceeds smallest subset size {n_train // self.n_subsets}"
            )
        if self.dataset.d != self.model.d:
            raise ValueError("dataset feature count does not match model")


def holdout_size(m: int, validation_fraction: float) -> int:
    size = int(round(m * validation_fraction))
    return min(max(size, 1), m - 1)


def split_dataset(m: int, n_subsets: int, seed: int) -> list[np.ndarray]:
    """Shuffle ``range(m)`` by ``seed`` and cut it into near-even subsets.

    The first ``m % n_subsets`` subsets get one extra sample.
    """
    if not 1 <= n_subsets <= m:
        raise ValueError(f"n_subsets must lie in 1..{m}, got {n_subsets}")
    order = np.random.default_rng(seed).permutation(m)
    return np.array_split(order, n_subsets)


def train_holdout_split(m: int, validation_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle and hold out the last ``validation_fraction`` of samples."""
    order = np.random.default_rng(seed).permutation(m)
    n_hold = holdout_size(m, validation_fraction)
    return order[: m - n_hold], order[m - n_hold:]


@dataclass(frozen=True)
class Subtask:
    id: int
    epoch: int
    subset_index: int
    param_snapshot: np.ndarray
    attempt: int = 1
    created_at: float = 0.0

    @property
    def key(self) -> tuple[int, int]:
        return (self.epoch, self.subset_index)


@dataclass
class EpochState:
    epoch: int
    n_subsets: int
    outstanding: set[int] = field(default_factory=set)
    per_subtask_metric: dict[int, float] = field(default_factory=dict)

    @property
    def completed(self) -> bool:
        return not self.outstanding

    def record_completion(self, subset_index: int, metric: float) -> "EpochState":
        if subset_index in self.per_subtask_metric:
            raise EpochStateError(f"epoch {self.epoch}: subset {subset_index} already completed")
        if subset_index not in self.outstanding:
            raise EpochStateError(f"epoch {self.epoch}: unknown subset {subset_index}")
        self.outstanding.remove(subset_index)
        self.per_subtask_metric[subset_index] = float(metric)
        return self

    def metrics(self) -> list[float]:
        return [self.per_subtask_metric[i] for i in sorted(self.per_subtask_metric)]

    def mean_metric(self) -> float:
        return float(np.mean(self.metrics()))


class WorkGenerator:
    """Turns a :class:`JobSpec` into epochs of subtasks behind a hard barrier."""

    def __init__(self, job: JobSpec):
        self.job = job
        m = len(job.dataset)
        train_idx, hold_idx = train_holdout_split(m, job.validation_fraction, job.split_seed)
        self.holdout = job.dataset.subset(hold_idx)
        self.subsets = [
            job.dataset.subset(train_idx[part])
            for part in split_dataset(len(train_idx), job.n_subsets, job.split_seed + 1)
        ]
        self.state: EpochState | None = None
        self.subtasks_created = 0
        self._ids = itertools.count()

    def open_epoch(self, e: int, server_params: np.ndarray, now: float = 0.0) -> list[Subtask]:
        expected = 1 if self.state is None else self.state.epoch + 1
        if self.state is not None and not self.state.completed:
            raise EpochStateError(f"epoch {self.state.epoch} is still incomplete")
        if e != expected:
            raise EpochStateError(f"expected epoch {expected}, got {e}")
        snapshot = np.array(server_params, dtype=np.float64)
        snapshot.setflags(write=False)
        n = self.job.n_subsets
        self.state = EpochState(e, n, outstanding=set(range(n)))
        tasks = [Subtask(next(self._ids), e, i, snapshot, 1, now) for i in range(n)]
        self.subtasks_created += n
        return tasks

    def retry(self, task: Subtask, now: float) -> Subtask:
        """New attempt for the same (epoch, subset), carrying the same snapshot."""
        self.subtasks_created += 1
        return Subtask(next(self._ids), task.epoch, task.subset_index, task.param_snapshot,
                       task.attempt + 1, now)

    def record_completion(self, subset_index: int, metric: float) -> EpochState:
        if self.state is None:
            raise EpochStateError("no epoch is open")
        return self.state.record_completion(subset_index, metric)

    def should_stop(self) -> bool:
        if self.state is None:
            raise EpochStateError("no epoch is open")
        return should_stop(self.state, self.job)


def should_stop(state: EpochState, job: JobSpec) -> bool:
    if not state.completed:
        raise EpochStateError(f"epoch {state.epoch} is incomplete")
    return state.mean_metric() >= job.accuracy_threshold or state.epoch >= job.max_epochs
