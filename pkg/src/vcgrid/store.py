"""Shared, versioned server-parameter record used by all parameter servers.

``strong`` mode serialises commits: a commit made against a stale snapshot is
re-run on the fresh value through the caller's ``recompute`` callback, so no
update is ever dropped.  ``eventual`` mode compares versions at commit time
and drops the update when another commit landed since the snapshot was read.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .vcasgd import as_params

STRONG = "strong"
EVENTUAL = "eventual"

# Measured per-update times for a relational store (strong) and an in-memory
# key-value store (eventual), in seconds.
DEFAULT_LATENCY_S = {STRONG: 1.29, EVENTUAL: 0.87}


def update_latency(mode: str, overrides: dict[str, float] | None = None) -> float:
    if mode not in DEFAULT_LATENCY_S:
        raise ValueError(f"unknown store mode {mode!r}")
    if overrides and overrides.get(mode) is not None:
        value = float(overrides[mode])
        if value <= 0:
            raise ValueError("update latency must be > 0")
        return value
    return DEFAULT_LATENCY_S[mode]


@dataclass(frozen=True)
class Snapshot:
    value: np.ndarray
    version_read: int


@dataclass(frozen=True)
class CommitResult:
    applied: bool
    version: int
    attempts: int
    applied_at: float | None
    busy_s: float


class ParamStore:
    def __init__(self, value, mode: str = EVENTUAL, update_latency_s: float | None = None):
        if mode not in (STRONG, EVENTUAL):
            raise ValueError(f"unknown store mode {mode!r}")
        self.mode = mode
        self.update_latency_s = update_latency(mode) if update_latency_s is None else float(update_latency_s)
        if self.update_latency_s <= 0:
            raise ValueError("update latency must be > 0")
        self._value = as_params(value)
        self.version = 0
        self.commits_attempted = 0
        self.commits_applied = 0
        self.lost_updates = 0
        self._lock = threading.Lock()

    @property
    def value(self) -> np.ndarray:
        return self._value

    def read_snapshot(self) -> Snapshot:
        with self._lock:
            return Snapshot(self._value, self.version)

    def commit(
        self,
        snap: Snapshot,
        new_value,
        now: float = 0.0,
        recompute: Callable[[np.ndarray], np.ndarray] | None = None,
    ) -> CommitResult:
        """Try to install ``new_value`` computed from ``snap``.

        In strong mode a stale snapshot costs one extra attempt; ``recompute``
        (if given) rebuilds the value from the current record, otherwise
        ``new_value`` is written as-is.  Each attempt charges
        ``update_latency_s`` of busy time.
        """
        new_value = as_params(new_value)
        if new_value.shape != self._value.shape:
            raise ValueError(f"dimension mismatch: store {self._value.shape} vs {new_value.shape}")
        lat = self.update_latency_s
        with self._lock:
            self.commits_attempted += 1
            stale = snap.version_read != self.version
            if stale and self.mode == EVENTUAL:
                self.lost_updates += 1
                return CommitResult(False, self.version, 1, None, lat)
            attempts = 1
            if stale:
                attempts = 2
                if recompute is not None:
                    new_value = as_params(recompute(self._value))
            self._value = new_value
            self.version += 1
            self.commits_applied += 1
            return CommitResult(True, self.version, attempts, now + attempts * lat, attempts * lat)

    def counters(self) -> dict[str, int]:
        return {
            "commits_attempted": self.commits_attempted,
            "commits_applied": self.commits_applied,
            "lost_updates": self.lost_updates,
        }
