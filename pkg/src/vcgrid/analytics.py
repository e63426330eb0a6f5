"""Closed-form estimates: timeout overhead, preemptible cost, store-latency overhead.

Times for the timeout model are in minutes; store overhead is in seconds.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

# Reference figures for a P5C5T2 fleet run, kept in one place so
# golden tests and the CLI quote the same numbers.
REFERENCE = {
    "n_s": 2000,                # 40 epochs x 50 subtasks
    "n_c": 5,
    "n_tc": 2,
    "t_e_min": 2.4,
    "t_o_min": 5.0,
    "p_low": 0.05,
    "p_high": 0.20,
    "extra_low_min": 50.0,
    "extra_high_min": 200.0,
    "rate_standard_usd_h": 1.67,
    "rate_preemptible_usd_h": 0.50,
    "run_hours": 8.0,
    "latency_strong_s": 1.29,
    "latency_eventual_s": 0.87,
    "updates_small_job": 2000,
    "updates_large_job": 1_600_000,
}


@dataclass(frozen=True)
class TimeoutModelInput:
    n_s: float
    n_c: int
    n_tc: int
    p: float
    t_e: float
    t_o: float

    def __post_init__(self) -> None:
        if self.n_c <= 0 or self.n_tc <= 0:
            raise ValueError("n_c and n_tc must be positive")
        if self.n_s <= 0 or self.t_e <= 0 or self.t_o <= 0:
            raise ValueError("n_s, t_e and t_o must be positive")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")


@dataclass(frozen=True)
class TimeoutEstimate:
    n: float
    expected_total_min: float
    expected_extra_min: float


def expected_times(inp: TimeoutModelInput) -> TimeoutEstimate:
    """Rounds per slot ``n = n_s / (n_c * n_tc)``; each round times out with prob ``p``."""
    n = inp.n_s / (inp.n_c * inp.n_tc)
    extra = n * inp.p * inp.t_o
    return TimeoutEstimate(n, n * inp.t_e + extra, extra)


@dataclass(frozen=True)
class CostInput:
    hours: float
    rate_standard: float
    rate_preemptible: float

    def __post_init__(self) -> None:
        if self.hours < 0:
            raise ValueError("hours must be non-negative")
        if self.rate_standard <= 0 or self.rate_preemptible <= 0:
            raise ValueError("rates must be positive")
        if self.rate_preemptible > self.rate_standard:
            raise ValueError("preemptible rate exceeds standard rate")


@dataclass(frozen=True)
class CostComparison:
    cost_standard: float
    cost_preemptible: float
    saving_fraction: float


def cost_compare(inp: CostInput) -> CostComparison:
    return CostComparison(
        inp.hours * inp.rate_standard,
        inp.hours * inp.rate_preemptible,
        1.0 - inp.rate_preemptible / inp.rate_standard,
    )


def store_overhead(n_updates: int, lat_strong_s: float, lat_eventual_s: float) -> float:
    """Extra seconds spent when every update pays the strong-store latency."""
    if n_updates < 0:
        raise ValueError("n_updates must be >= 0")
    diff = lat_strong_s - lat_eventual_s
    if diff < 0:
        warnings.warn("strong-store latency is below eventual-store latency", stacklevel=2)
    return n_updates * diff


def theory_vs_sim(theory: float, sim: float) -> float:
    """Relative deviation ``|sim - theory| / theory``; absolute when theory is 0."""
    if theory == 0:
        return abs(sim)
    return abs(sim - theory) / abs(theory)


def minutes(seconds: float) -> float:
    return seconds / 60.0


def hours(seconds: float) -> float:
    return seconds / 3600.0

