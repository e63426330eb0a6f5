from __future__ import annotations

import pytest

from vcgrid import (AlphaPolicy, ClusterConfig, JobSpec, LatencyModel, LocalTrainConfig, ModelSpec,
                    generate_dataset, make_clients)


def small_regression_job(n_subsets=4, max_epochs=2, d=3, m=120, alpha=None, steps=3, seed=0):
    data, w_star = generate_dataset("regression", m, d, seed=seed)
    job = JobSpec(
        ModelSpec("least_squares", d), data, n_subsets=n_subsets, accuracy_threshold=1.0,
        max_epochs=max_epochs, alpha_policy=alpha or AlphaPolicy.fixed(0.9),
        local_cfg=LocalTrainConfig(steps, 4, 0.05, seed), split_seed=seed,
    )
    return job, w_star


def small_cluster(n_clients=2, tn=1, pn=1, p=0.0, **kw):
    kw.setdefault("baseline_compute_s", 30.0)
    return ClusterConfig(make_clients(n_clients, tn, preempt_prob=p), n_param_servers=pn, **kw)


@pytest.fixture
def regression_job():
    return small_regression_job()[0]


@pytest.fixture
def instant():
    return LatencyModel.instant()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
