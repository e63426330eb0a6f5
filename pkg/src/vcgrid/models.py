"""Small convex models and synthetic datasets for desk-scale training runs.

Two model kinds are supported:

* ``least_squares``: parameters are a weight vector ``w`` of length ``d``;
  loss is ``(1/2m) * ||X w - y||^2``.
* ``logistic``: multinomial logistic regression.  The flat parameter vector is
  the ``d x K`` weight matrix in row-major order followed by the ``K`` biases.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .vcasgd import as_params

LEAST_SQUARES = "least_squares"
LOGISTIC = "logistic"
REGRESSION = "regression"
CLASSIFICATION = "classification"


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in (REGRESSION, CLASSIFICATION):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1 or self.inputs.shape[1] < 1:
            raise ValueError(f"inputs must be an m x d matrix with m, d >= 1, got {self.inputs.shape}")
        if self.targets.shape != (self.inputs.shape[0],):
            raise ValueError("targets length must match number of samples")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    def subset(self, index: np.ndarray) -> "Dataset":
        return Dataset(self.inputs[index], self.targets[index], self.kind)


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    d: int
    K: int = 2

    def __post_init__(self) -> None:
        if self.kind not in (LEAST_SQUARES, LOGISTIC):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.kind == LOGISTIC and self.K < 2:
            raise ValueError("logistic model needs K >= 2 classes")

    @property
    def dim(self) -> int:
        if self.kind == LEAST_SQUARES:
            return self.d
        return self.d * self.K + self.K

    @property
    def dataset_kind(self) -> str:
        return REGRESSION if self.kind == LEAST_SQUARES else CLASSIFICATION

    def zeros(self) -> np.ndarray:
        return as_params(np.zeros(self.dim))


@dataclass(frozen=True)
class LocalTrainConfig:
    steps: int = 10
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")


def generate_dataset(
    kind: str,
    m: int,
    d: int,
    K: int = 2,
    noise: float = 0.0,
    seed: int = 0,
    separation: float = 3.0,
) -> tuple[Dataset, np.ndarray | None]:
    """Draw a synthetic dataset.

    Regression returns ``(dataset, w_star)`` with targets ``X @ w_star`` plus
    Gaussian noise of standard deviation ``noise``.  Classification draws
    Gaussian blobs whose centres are ``separation`` apart on average (scaled
    by ``noise`` as the within-class spread, default unit) and returns
    ``(dataset, None)``.
    """
    if m < 1 or d < 1:
        raise ValueError(f"need m, d >= 1, got m={m}, d={d}")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    if kind == REGRESSION:
        X = rng.standard_normal((m, d))
        w_star = rng.standard_normal(d)
        y = X @ w_star
        if noise > 0:
            y = y + noise * rng.standard_normal(m)
        return Dataset(X, y, REGRESSION), w_star
    if kind == CLASSIFICATION:
        if K < 2:
            raise ValueError("classification needs K >= 2")
        centres = separation * rng.standard_normal((K, d))
        labels = rng.permutation(np.arange(m) % K)
        spread = noise if noise > 0 else 1.0
        X = centres[labels] + spread * rng.standard_normal((m, d))
        return Dataset(X, labels.astype(np.int64), CLASSIFICATION), None
    raise ValueError(f"unknown dataset kind {kind!r}")


def _check_dims(spec: ModelSpec, params: np.ndarray, data: Dataset) -> None:
    if params.shape != (spec.dim,):
        raise ValueError(f"params have shape {params.shape}, model expects ({spec.dim},)")
    if data.d != spec.d:
        raise ValueError(f"data has {data.d} features, model expects {spec.d}")


def _unpack_logistic(spec: ModelSpec, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    W = params[: spec.d * spec.K].reshape(spec.d, spec.K)
    b = params[spec.d * spec.K:]
    return W, b


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_gradient(
    spec: ModelSpec, params: np.ndarray, batch: Dataset
) -> tuple[float, np.ndarray]:
    params = np.asarray(params, dtype=np.float64)
    _check_dims(spec, params, batch)
    X, y = batch.inputs, batch.targets
    m = X.shape[0]
    if spec.kind == LEAST_SQUARES:
        resid = X @ params - y
        return float(resid @ resid) / (2 * m), X.T @ resid / m

    W, b = _unpack_logistic(spec, params)
    labels = y.astype(np.int64)
    if labels.min() < 0 or labels.max() >= spec.K:
        raise ValueError(f"labels must lie in 0..{spec.K - 1}")
    probs = _softmax(X @ W + b)
    rows = np.arange(m)
    loss = -float(np.mean(np.log(np.clip(probs[rows, labels], 1e-300, None))))
    delta = probs
    delta[rows, labels] -= 1.0
    delta /= m
    grad = np.concatenate([(X.T @ delta).reshape(-1), delta.sum(axis=0)])
    return loss, grad


def local_train(
    spec: ModelSpec, start: np.ndarray, subset: Dataset, cfg: LocalTrainConfig
) -> np.ndarray:
    """Run ``cfg.steps`` minibatch SGD steps from ``start`` on ``subset``.

    Batches are drawn without replacement per step from a generator seeded by
    ``cfg.seed``; a batch as large as the subset is plain full-batch descent.
    """
    if len(subset) == 0:
        raise ValueError("cannot train on an empty subset")
    if cfg.batch_size > len(subset):
        raise ValueError(f"batch_size {cfg.batch_size} exceeds subset size {len(subset)}")
    w = np.array(start, dtype=np.float64)
    _check_dims(spec, w, subset)
    n = len(subset)
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.steps):
        if cfg.batch_size == n:
            batch = subset
        else:
            batch = subset.subset(rng.choice(n, size=cfg.batch_size, replace=False))
        _, grad = loss_and_gradient(spec, w, batch)
        w -= cfg.learning_rate * grad
    return as_params(w)


def evaluate(spec: ModelSpec, params: np.ndarray, holdout: Dataset) -> float:
    """Validation metric in [0, 1]: accuracy, or ``1 / (1 + loss)`` for regression."""
    if len(holdout) == 0:
        raise ValueError("holdout set is empty")
    params = np.asarray(params, dtype=np.float64)
    _check_dims(spec, params, holdout)
    if spec.kind == LEAST_SQUARES:
        loss, _ = loss_and_gradient(spec, params, holdout)
        return 1.0 / (1.0 + loss)
    W, b = _unpack_logistic(spec, params)
    predicted = np.argmax(holdout.inputs @ W + b, axis=1)
    return float(np.mean(predicted == holdout.targets))


def least_squares_optimum(data: Dataset) -> np.ndarray:
    """Closed-form minimiser of the least-squares loss on ``data``."""
    w, *_ = np.linalg.lstsq(data.inputs, data.targets, rcond=None)
    return w


def save_csv(data: Dataset, path: str | Path) -> None:
    """Write one sample per line, features first, target/label in the last column."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(data.d)] + ["target"])
        for row, target in zip(data.inputs, data.targets):
            tail = int(target) if data.kind == CLASSIFICATION else repr(float(target))
            writer.writerow([repr(float(v)) for v in row] + [tail])


def load_csv(path: str | Path, kind: str) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise ValueError(f"{path}: missing or short header row")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no samples")
    table = np.array(rows, dtype=np.float64)
    targets = table[:, -1]
    if kind == CLASSIFICATION:
        targets = targets.astype(np.int64)
    return Dataset(table[:, :-1], targets, kind)
