"""Client selection, timeouts with rescheduling, and reliability tracking."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .workgen import Subtask

RELIABILITY_DECAY = 0.9
INITIAL_RELIABILITY = 0.5
DEFAULT_ATTEMPT_CAP = 20


class AttemptCapExceeded(RuntimeError):
    """A subtask failed more times than the scheduler allows."""


class Status(enum.Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    TIMED_OUT = "timed_out"


@dataclass(eq=False)
class ClientProfile:
    id: int
    speed_factor: float = 1.0
    max_concurrent: int = 1
    preempt_prob: float = 0.0
    cached_subsets: set[int] = field(default_factory=set)
    reliability: float = INITIAL_RELIABILITY
    alive: bool = True
    running: set[int] = field(default_factory=set)
    incarnation: int = 0

    def __post_init__(self) -> None:
        if self.speed_factor <= 0:
            raise ValueError(f"client {self.id}: speed_factor must be > 0")
        if self.max_concurrent < 1:
            raise ValueError(f"client {self.id}: max_concurrent must be >= 1")
        if not 0.0 <= self.preempt_prob <= 1.0:
            raise ValueError(f"client {self.id}: preempt_prob must lie in [0, 1]")

    @property
    def load(self) -> int:
        return len(self.running)

    @property
    def has_capacity(self) -> bool:
        return self.alive and self.load < self.max_concurrent


@dataclass(eq=False)
class Assignment:
    subtask: Subtask
    client_id: int
    dispatched_at: float
    deadline: float
    incarnation: int
    status: Status = Status.RUNNING


def update_reliability(client: ClientProfile, success: bool, beta: float = RELIABILITY_DECAY) -> float:
    """EWMA of success indicators: ``r <- beta * r + (1 - beta) * [success]``."""
    client.reliability = beta * client.reliability + (1.0 - beta) * (1.0 if success else 0.0)
    return client.reliability


def _rank(client: ClientProfile, subset_index: int) -> tuple:
    return (subset_index not in client.cached_subsets, -client.reliability, client.load, client.id)


def pick_client(
    clients: list[ClientProfile], subtask: Subtask, avoid: int | None = None
) -> ClientProfile | None:
    """Best client with spare capacity, or ``None`` when nobody can take it.

    Ranking: cached subset first, then higher reliability, lower load, lower
    id.  ``avoid`` (the client whose attempt timed out) is skipped as long as
    any other client is alive.
    """
    if avoid is not None and any(c.alive and c.id != avoid for c in clients):
        candidates = [c for c in clients if c.has_capacity and c.id != avoid]
    else:
        candidates = [c for c in clients if c.has_capacity]
    if not candidates:
        return None
    return min(candidates, key=lambda c: _rank(c, subtask.subset_index))


class Scheduler:
    """Bookkeeping for dispatches; the simulation loop drives all transitions."""

    def __init__(self, clients: list[ClientProfile], timeout_s: float,
                 attempt_cap: int = DEFAULT_ATTEMPT_CAP):
        if timeout_s <= 0:
            raise ValueError("timeout must be > 0")
        if not clients:
            raise ValueError("at least one client is required")
        ids = [c.id for c in clients]
        if len(set(ids)) != len(ids):
            raise ValueError("client ids must be unique")
        self.clients = sorted(clients, key=lambda c: c.id)
        self.by_id = {c.id: c for c in self.clients}
        self.timeout_s = timeout_s
        self.attempt_cap = attempt_cap
        self.assignments: dict[int, Assignment] = {}
        self.reschedules = 0

    def pick_client(self, subtask: Subtask, avoid: int | None = None) -> ClientProfile | None:
        return pick_client(self.clients, subtask, avoid)

    def dispatch(self, subtask: Subtask, client: ClientProfile, now: float) -> Assignment:
        if subtask.id in self.assignments:
            raise ValueError(f"subtask {subtask.id} already dispatched")
        if not client.has_capacity:
            raise ValueError(f"client {client.id} has no spare capacity")
        a = Assignment(subtask, client.id, now, now + self.timeout_s, client.incarnation)
        client.running.add(subtask.id)
        self.assignments[subtask.id] = a
        return a

    def release(self, assignment: Assignment) -> None:
        """Free the slot a finished (uploaded) assignment was holding."""
        client = self.by_id[assignment.client_id]
        if client.incarnation == assignment.incarnation:
            client.running.discard(assignment.subtask.id)

    def complete(self, assignment: Assignment) -> None:
        if assignment.status is Status.RUNNING:
            assignment.status = Status.COMPLETED
            update_reliability(self.by_id[assignment.client_id], True)

    def on_timeout(self, assignment: Assignment, now: float) -> tuple[Subtask, int]:
        """Mark a running assignment timed out.

        Returns the subtask to re-enqueue and the client id the retry should
        avoid.  The caller creates the next attempt.
        """
        if now < assignment.deadline:
            raise ValueError(f"timeout at {now} precedes deadline {assignment.deadline}")
        if assignment.status is not Status.RUNNING:
            raise ValueError(f"assignment is {assignment.status.value}, not running")
        assignment.status = Status.TIMED_OUT
        update_reliability(self.by_id[assignment.client_id], False)
        self.reschedules += 1
        if assignment.subtask.attempt >= self.attempt_cap:
            raise AttemptCapExceeded(
                f"epoch {assignment.subtask.epoch} subset {assignment.subtask.subset_index} "
                f"failed {assignment.subtask.attempt} attempts"
            )
        return assignment.subtask, assignment.client_id

    def abandon(self, assignment: Assignment) -> None:
        """Stop tracking a running attempt whose subset was already completed elsewhere."""
        if assignment.status is Status.RUNNING:
            assignment.status = Status.TIMED_OUT

    def kill(self, client: ClientProfile) -> None:
        """Client instance terminated: in-flight work and cache are gone."""
        client.alive = False
        client.running.clear()
        client.cached_subsets.clear()
        client.incarnation += 1

    def revive(self, client: ClientProfile) -> None:
        client.alive = True
