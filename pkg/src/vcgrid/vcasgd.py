"""Server-side parameter assimilation for asynchronous volunteer training.

Every returning client result is blended into the server copy immediately::

    server <- alpha * server + (1 - alpha) * client

Folding that rule over the ``n_t`` results of one epoch gives a closed form
(see :func:`epoch_closed_form`), which the test-suite checks against the
literal fold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "AlphaPolicy",
    "alpha_for_epoch",
    "as_params",
    "assimilate",
    "epoch_closed_form",
    "relative_error",
]


def as_params(values: Iterable[float] | np.ndarray) -> np.ndarray:
    """Return ``values`` as a read-only, finite, 1-D float64 parameter vector."""
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError("parameter vector must have dim >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter vector contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    return alpha


def _finite(result: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(result)):
        raise ValueError("assimilation produced non-finite parameters")
    result.setflags(write=False)
    return result


def assimilate(server: np.ndarray, client: np.ndarray, alpha: float) -> np.ndarray:
    """Blend one client result into the server copy; inputs are not modified."""
    alpha = _check_alpha(alpha)
    server = np.asarray(server, dtype=np.float64)
    client = np.asarray(client, dtype=np.float64)
    if server.shape != client.shape:
        raise ValueError(f"dimension mismatch: server {server.shape} vs client {client.shape}")
    return _finite(alpha * server + (1.0 - alpha) * client)


def epoch_closed_form(
    prev: np.ndarray, client_results: Sequence[np.ndarray], alpha: float
) -> np.ndarray:
    """Server copy after assimilating ``client_results`` in order, in one shot.

    Equals ``alpha**n * prev + (1 - alpha) * sum_j alpha**(n - j) * client_results[j]``
    with ``j`` running from 1 to ``n``.
    """
    alpha = _check_alpha(alpha)
    if len(client_results) == 0:
        raise ValueError("client_results must not be empty")
    prev = np.asarray(prev, dtype=np.float64)
    stacked = np.stack([np.asarray(c, dtype=np.float64) for c in client_results])
    if stacked.shape[1:] != prev.shape:
        raise ValueError(f"dimension mismatch: prev {prev.shape} vs clients {stacked.shape[1:]}")
    n = stacked.shape[0]
    weights = alpha ** np.arange(n - 1, -1, -1, dtype=np.float64)
    return _finite(alpha**n * prev + (1.0 - alpha) * (weights @ stacked))


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Sum over entries of ``|a - b| / (1 + |a| + |b|)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.sum(np.abs(a - b) / (1.0 + np.abs(a) + np.abs(b))))


@dataclass(frozen=True)
class AlphaPolicy:
    """Either a constant alpha or the epoch schedule ``alpha_e = e / (e + 1)``."""

    kind: str = "fixed"
    fixed_value: float = 0.95

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "schedule"):
            raise ValueError(f"unknown alpha policy kind {self.kind!r}")
        if self.kind == "fixed":
            _check_alpha(self.fixed_value)

    @classmethod
    def fixed(cls, value: float) -> "AlphaPolicy":
        return cls("fixed", float(value))

    @classmethod
    def schedule(cls) -> "AlphaPolicy":
        return cls("schedule", 1.0)

    @classmethod
    def parse(cls, text: str) -> "AlphaPolicy":
        """Parse ``schedule``, ``fixed:<v>`` or a bare number."""
        text = text.strip().lower()
        if text in ("schedule", "var"):
            return cls.schedule()
        if text.startswith("fixed:"):
            text = text[len("fixed:"):]
        try:
            value = float(text)
        except ValueError:
            raise ValueError(f"cannot parse alpha policy {text!r}") from None
        return cls.fixed(value)

    def __str__(self) -> str:
        return "schedule" if self.kind == "schedule" else f"fixed:{self.fixed_value:g}"


def alpha_for_epoch(policy: AlphaPolicy, e: int) -> float:
    if e < 1:
        raise ValueError(f"epoch must be >= 1, got {e}")
    if policy.kind == "schedule":
        return e / (e + 1.0)
    return policy.fixed_value
