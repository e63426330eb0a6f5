"""Deterministic discrete-event simulation of volunteer-style distributed training.

All times are simulated seconds.  One run is strictly single-threaded; two
runs with the same job, cluster and seed produce identical reports.

Lifecycle of one attempt::

    dispatch -> download -> compute -> upload -> result queue
             -> parameter server: read snapshot, blend, commit -> validate

A preemption trial is drawn at dispatch; a losing client dies part-way
through its compute interval, taking every running attempt with it.  Those
attempts are rescheduled when their timeout fires.
"""

from __future__ import annotations

import bisect
import dataclasses
import enum
import heapq
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .models import evaluate, local_train
from .scheduler import DEFAULT_ATTEMPT_CAP, Assignment, ClientProfile, Scheduler, Status
from .store import EVENTUAL, ParamStore, update_latency
from .vcasgd import alpha_for_epoch, assimilate
from .workgen import JobSpec, Subtask, WorkGenerator

logger = logging.getLogger(__name__)

_MODEL_FILE = -1  # cache key for the model description file


class EventKind(enum.IntEnum):
    # Value doubles as the tie-break rank for simultaneous events.
    DISPATCH = 0
    DOWNLOAD_DONE = 1
    COMPUTE_DONE = 2
    PREEMPTED = 3
    UPLOAD_DONE = 4
    ASSIMILATION_DONE = 5
    VALIDATION_DONE = 6
    TIMEOUT_CHECK = 7
    RESPAWN = 8
    EPOCH_CLOSED = 9


@dataclass(frozen=True)
class LatencyModel:
    base_rtt_s: float = 0.05
    bandwidth_MBps: float = 100.0
    jitter_sigma: float = 0.25
    params_MB: float = 21.2
    subset_MB: float = 3.9
    model_KB: float = 269.0

    def __post_init__(self) -> None:
        if self.base_rtt_s < 0 or self.jitter_sigma < 0:
            raise ValueError("base_rtt_s and jitter_sigma must be non-negative")
        if self.bandwidth_MBps <= 0:
            raise ValueError("bandwidth_MBps must be > 0")
        if min(self.params_MB, self.subset_MB, self.model_KB) <= 0:
            raise ValueError("file sizes must be > 0")

    @classmethod
    def instant(cls) -> "LatencyModel":
        """No network cost at all; compute time then stands for the whole attempt."""
        return cls(base_rtt_s=0.0, bandwidth_MBps=math.inf, jitter_sigma=0.0)

    def transfer_time(self, size_MB: float, rng: random.Random) -> float:
        jitter = rng.lognormvariate(0.0, self.jitter_sigma) if self.jitter_sigma > 0 else 1.0
        return size_MB / self.bandwidth_MBps + self.base_rtt_s * jitter


def make_clients(
    n: int,
    max_concurrent: int = 1,
    speed_factors: tuple[float, ...] | list[float] = (1.0,),
    preempt_prob: float = 0.0,
) -> list[ClientProfile]:
    """``n`` clients; ``speed_factors`` is cycled when shorter than ``n``."""
    if n < 1:
        raise ValueError("need at least one client")
    if not speed_factors:
        raise ValueError("speed_factors must not be empty")
    return [
        ClientProfile(i, speed_factors[i % len(speed_factors)], max_concurrent, preempt_prob)
        for i in range(n)
    ]


@dataclass(frozen=True)
class ClusterConfig:
    clients: tuple[ClientProfile, ...]
    n_param_servers: int = 1
    store_mode: str = EVENTUAL
    seed: int = 0
    timeout_s: float = 300.0
    baseline_compute_s: float = 144.0
    respawn_s: float = 60.0
    eval_fraction: float = 0.1
    latency: LatencyModel = field(default_factory=LatencyModel)
    update_latency_s: float | None = None
    attempt_cap: int = DEFAULT_ATTEMPT_CAP
    rate_standard: float = 1.67
    rate_preemptible: float = 0.50

    def __post_init__(self) -> None:
        object.__setattr__(self, "clients", tuple(self.clients))
        if self.n_param_servers < 1:
            raise ValueError("n_param_servers must be >= 1")
        if not self.clients:
            raise ValueError("at least one client is required")
        if self.timeout_s <= 0 or self.baseline_compute_s <= 0:
            raise ValueError("timeout_s and baseline_compute_s must be > 0")
        if self.respawn_s < 0 or self.eval_fraction < 0:
            raise ValueError("respawn_s and eval_fraction must be non-negative")
        if self.attempt_cap < 1:
            raise ValueError("attempt_cap must be >= 1")

    @property
    def store_latency_s(self) -> float:
        if self.update_latency_s is not None:
            return self.update_latency_s
        return update_latency(self.store_mode)

    def with_preempt_prob(self, p: float) -> "ClusterConfig":
        return dataclasses.replace(
            self, clients=tuple(dataclasses.replace(c, preempt_prob=p) for c in self.clients)
        )

    def with_seed(self, seed: int) -> "ClusterConfig":
        return dataclasses.replace(self, seed=seed)


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    wall_clock_s: float
    avg_metric: float
    min_metric: float
    max_metric: float
    reschedules: int
    lost_updates: int
    assimilations: int


@dataclass
class RunReport:
    rows: list[EpochRow]
    training_time_s: float
    total_subtask_attempts: int
    cost_usd_standard: float
    cost_usd_preemptible: float
    final_params: np.ndarray
    completed_pairs: int
    lost_updates: int
    reschedules: int
    peak_queue: int
    discarded_results: int
    event_counts: dict[str, int]
    stopped_by: str
    trace: list[tuple] | None = None

    @property
    def final_metric(self) -> float:
        return self.rows[-1].avg_metric if self.rows else float("nan")


def preemption_trial(rng: random.Random, p: float) -> float | None:
    """Bernoulli(p) termination; returns the death point as a fraction in (0, 1), or None."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"preemption probability must lie in [0, 1], got {p}")
    if rng.random() < p:
        return rng.random()
    return None


def _training_seed(base: int, epoch: int, subset_index: int) -> int:
    return int(np.random.SeedSequence([base, epoch, subset_index]).generate_state(1)[0])


@dataclass(eq=False)
class _Result:
    assignment: Assignment
    uploaded_at: float


class Simulation:
    def __init__(self, job: JobSpec, cluster: ClusterConfig, train: bool = True, trace: bool = False):
        self.job = job
        self.cluster = cluster
        self.train = train
        self.clients = [
            dataclasses.replace(c, cached_subsets=set(), running=set()) for c in cluster.clients
        ]
        self.sched = Scheduler(self.clients, cluster.timeout_s, cluster.attempt_cap)
        self.gen = WorkGenerator(job)
        self.store = ParamStore(job.model.zeros(), cluster.store_mode, cluster.store_latency_s)
        self.net_rng = random.Random(f"{cluster.seed}:network")
        self.fault_rng = random.Random(f"{cluster.seed}:faults")
        self.now = 0.0
        self._heap: list[tuple] = []
        self._seq = 0
        self.pending: deque[tuple[Subtask, int | None]] = deque()
        self.results: deque[_Result] = deque()
        self.free_servers = list(range(cluster.n_param_servers))
        self.claimed: set[tuple[int, int]] = set()
        self.rows: list[EpochRow] = []
        self.peak_queue = 0
        self.discarded = 0
        self.dispatches = 0
        self.event_counts = {k.name.lower(): 0 for k in EventKind}
        self.trace: list[tuple] | None = [] if trace else None
        self._epoch_resched = 0
        self._epoch_lost = 0
        self._epoch_applied = 0
        self._done = False
        self.stopped_by = ""

    # -- event queue ---------------------------------------------------
    def _push(self, time: float, kind: EventKind, payload=None) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time, int(kind), self._seq, payload))

    def run(self) -> RunReport:
        self._open_epoch(1)
        handlers = {
            EventKind.DISPATCH: self._on_dispatch,
            EventKind.DOWNLOAD_DONE: self._on_download,
            EventKind.COMPUTE_DONE: self._on_compute,
            EventKind.PREEMPTED: self._on_preempted,
            EventKind.UPLOAD_DONE: self._on_upload,
            EventKind.ASSIMILATION_DONE: self._on_assimilated,
            EventKind.VALIDATION_DONE: self._on_validated,
            EventKind.TIMEOUT_CHECK: self._on_timeout,
            EventKind.RESPAWN: self._on_respawn,
            EventKind.EPOCH_CLOSED: self._on_epoch_closed,
        }
        while self._heap and not self._done:
            time, kind, _, payload = heapq.heappop(self._heap)
            if time < self.now:
                raise RuntimeError(f"event time went backwards: {time} < {self.now}")
            self.now = time
            kind = EventKind(kind)
            self.event_counts[kind.name.lower()] += 1
            if self.trace is not None:
                self.trace.append((time, kind.name.lower(), self._describe(payload)))
            handlers[kind](payload)
        if not self._done:
            raise RuntimeError("simulation ran out of events before the job finished")
        return self._report()

    @staticmethod
    def _describe(payload) -> tuple:
        if isinstance(payload, Assignment):
            return (payload.subtask.epoch, payload.subtask.subset_index, payload.subtask.attempt,
                    payload.client_id)
        if isinstance(payload, ClientProfile):
            return (payload.id,)
        if isinstance(payload, tuple) and payload and isinstance(payload[0], int):
            return (payload[0],)
        return ()

    # -- work generation -----------------------------------------------
    def _open_epoch(self, e: int) -> None:
        for task in self.gen.open_epoch(e, self.store.value, self.now):
            self.pending.append((task, None))
        self._epoch_resched = self._epoch_lost = self._epoch_applied = 0
        self._dispatch_pending()

    def _on_epoch_closed(self, _payload) -> None:
        state = self.gen.state
        metrics = state.metrics()
        self.rows.append(EpochRow(
            state.epoch, self.now, float(np.mean(metrics)), min(metrics), max(metrics),
            self._epoch_resched, self._epoch_lost, self._epoch_applied,
        ))
        logger.debug("epoch %d closed at %.1f s, avg metric %.4f", state.epoch, self.now, np.mean(metrics))
        if self.gen.should_stop():
            self._done = True
            self.stopped_by = "max_epochs" if state.mean_metric() < self.job.accuracy_threshold else "threshold"
            return
        self._open_epoch(state.epoch + 1)

    # -- client side -----------------------------------------------------
    def _dispatch_pending(self) -> None:
        if not self.pending:
            return
        if not any(c.has_capacity for c in self.clients):
            return
        waiting: deque[tuple[Subtask, int | None]] = deque()
        epoch = self.gen.state.epoch
        while self.pending:
            task, avoid = self.pending.popleft()
            if task.key in self.claimed or task.epoch != epoch:
                continue  # a late upload already delivered this subset
            client = self.sched.pick_client(task, avoid)
            if client is None:
                waiting.append((task, avoid))
                if not any(c.has_capacity for c in self.clients):
                    break
                continue
            assignment = self.sched.dispatch(task, client, self.now)
            self.dispatches += 1
            self._push(self.now, EventKind.DISPATCH, assignment)
        waiting.extend(self.pending)
        self.pending = waiting

    def _current(self, a: Assignment) -> ClientProfile | None:
        client = self.sched.by_id[a.client_id]
        if client.incarnation != a.incarnation:
            return None
        return client

    def _on_dispatch(self, a: Assignment) -> None:
        client = self._current(a)
        if client is None:
            return
        net, lat = self.net_rng, self.cluster.latency
        download = lat.transfer_time(lat.params_MB, net)
        if a.subtask.subset_index not in client.cached_subsets:
            download += lat.transfer_time(lat.subset_MB, net)
        if _MODEL_FILE not in client.cached_subsets:
            download += lat.transfer_time(lat.model_KB / 1024.0, net)
        self._push(self.now + download, EventKind.DOWNLOAD_DONE, a)
        self._push(a.deadline, EventKind.TIMEOUT_CHECK, a)
        death = preemption_trial(self.fault_rng, client.preempt_prob)
        if death is not None:
            compute = self.cluster.baseline_compute_s * client.speed_factor
            self._push(self.now + download + death * compute, EventKind.PREEMPTED,
                       (client.id, client.incarnation))

    def _on_download(self, a: Assignment) -> None:
        client = self._current(a)
        if client is None:
            return
        client.cached_subsets.add(a.subtask.subset_index)
        client.cached_subsets.add(_MODEL_FILE)
        compute = self.cluster.baseline_compute_s * client.speed_factor
        self._push(self.now + compute, EventKind.COMPUTE_DONE, a)

    def _on_compute(self, a: Assignment) -> None:
        if self._current(a) is None:
            return
        lat = self.cluster.latency
        self._push(self.now + lat.transfer_time(lat.params_MB, self.net_rng), EventKind.UPLOAD_DONE, a)

    def _on_preempted(self, payload: tuple[int, int]) -> None:
        client_id, incarnation = payload
        client = self.sched.by_id[client_id]
        if client.incarnation != incarnation:
            return
        self.sched.kill(client)
        self._push(self.now + self.cluster.respawn_s, EventKind.RESPAWN, client)

    def _on_respawn(self, client: ClientProfile) -> None:
        self.sched.revive(client)
        self._dispatch_pending()

    def _on_upload(self, a: Assignment) -> None:
        if self._current(a) is None:
            return
        self.sched.release(a)
        self.sched.complete(a)
        key = a.subtask.key
        if key in self.claimed or key[0] != self.gen.state.epoch:
            self.discarded += 1
        else:
            self.claimed.add(key)
            self.results.append(_Result(a, self.now))
            self.peak_queue = max(self.peak_queue, len(self.results))
            self._assimilate_pending()
        self._dispatch_pending()

    def _on_timeout(self, a: Assignment) -> None:
        if a.status is not Status.RUNNING:
            return
        if a.subtask.key in self.claimed or a.subtask.epoch != self.gen.state.epoch:
            self.sched.abandon(a)
            return
        task, avoid = self.sched.on_timeout(a, self.now)
        self._epoch_resched += 1
        self.pending.append((self.gen.retry(task, self.now), avoid))
        self._dispatch_pending()

    # -- server side -----------------------------------------------------
    def _client_params(self, task: Subtask) -> np.ndarray:
        if not self.train:
            return task.param_snapshot
        cfg = dataclasses.replace(
            self.job.local_cfg,
            seed=_training_seed(self.job.local_cfg.seed, task.epoch, task.subset_index),
        )
        return local_train(self.job.model, task.param_snapshot, self.gen.subsets[task.subset_index], cfg)

    def _assimilate_pending(self) -> None:
        while self.results and self.free_servers:
            server = self.free_servers.pop(0)
            result = self.results.popleft()
            task = result.assignment.subtask
            client_params = self._client_params(task)
            alpha = alpha_for_epoch(self.job.alpha_policy, task.epoch)
            snap = self.store.read_snapshot()
            new_value = assimilate(snap.value, client_params, alpha)
            self._push(self.now + self.store.update_latency_s, EventKind.ASSIMILATION_DONE,
                       (server, task, snap, new_value, client_params, alpha))

    def _on_assimilated(self, payload) -> None:
        server, task, snap, new_value, client_params, alpha = payload
        started = self.now - self.store.update_latency_s
        res = self.store.commit(snap, new_value, started,
                                recompute=lambda cur: assimilate(cur, client_params, alpha))
        if res.applied:
            self._epoch_applied += 1
        else:
            self._epoch_lost += 1
        metric = evaluate(self.job.model, self.store.value, self.gen.holdout) if self.train else 0.0
        extra = res.busy_s - self.store.update_latency_s
        eval_s = self.cluster.eval_fraction * self.store.update_latency_s
        self._push(self.now + extra + eval_s, EventKind.VALIDATION_DONE, (server, task, metric))

    def _on_validated(self, payload) -> None:
        server, task, metric = payload
        bisect.insort(self.free_servers, server)
        state = self.gen.record_completion(task.subset_index, metric)
        if state.completed:
            self._push(self.now, EventKind.EPOCH_CLOSED)
        self._assimilate_pending()

    # -- report ----------------------------------------------------------
    def _report(self) -> RunReport:
        hours = self.now / 3600.0
        return RunReport(
            rows=self.rows,
            training_time_s=self.now,
            total_subtask_attempts=self.dispatches,
            cost_usd_standard=hours * self.cluster.rate_standard,
            cost_usd_preemptible=hours * self.cluster.rate_preemptible,
            final_params=self.store.value,
            completed_pairs=len(self.claimed),
            lost_updates=self.store.lost_updates,
            reschedules=self.sched.reschedules,
            peak_queue=self.peak_queue,
            discarded_results=self.discarded,
            event_counts=dict(self.event_counts),
            stopped_by=self.stopped_by,
            trace=self.trace,
        )


def run(job: JobSpec, cluster: ClusterConfig, train: bool = True, trace: bool = False) -> RunReport:
    """Simulate ``job`` on ``cluster`` until the stopping rule fires.

    ``train=False`` keeps every event and timing but skips local training and
    validation (client results equal their snapshots, metrics are 0); it is
    meant for timing studies.  Raises
    :class:`~vcgrid.scheduler.AttemptCapExceeded` if a subtask keeps failing.
    """
    return Simulation(job, cluster, train=train, trace=trace).run()


def measure_extra_time(
    job: JobSpec, cluster: ClusterConfig, p: float, trials: int, train: bool = False
) -> float:
    """Mean over ``trials`` seeds of ``time(p) - time(p=0)``, in seconds.

    Trial ``i`` uses seed ``cluster.seed + i`` for both runs.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    diffs = []
    for i in range(trials):
        seeded = cluster.with_seed(cluster.seed + i)
        base = run(job, seeded.with_preempt_prob(0.0), train=train).training_time_s
        faulty = run(job, seeded.with_preempt_prob(p), train=train).training_time_s
        diffs.append(faulty - base)
    return float(np.mean(diffs))
