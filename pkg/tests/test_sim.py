import random

import numpy as np
import pytest

from vcgrid import (STRONG, AlphaPolicy, AttemptCapExceeded, ClusterConfig, JobSpec, LatencyModel,
                    LocalTrainConfig, ModelSpec, generate_dataset, make_clients, measure_extra_time,
                    run)
from vcgrid.models import least_squares_optimum, local_train
from vcgrid.scheduler import Scheduler, Status
from vcgrid.sim import EventKind, Simulation, preemption_trial
from vcgrid.store import EVENTUAL

from conftest import small_cluster, small_regression_job


def test_single_path_accounting():
    job, _ = small_regression_job(n_subsets=1, max_epochs=1)
    lat = LatencyModel(base_rtt_s=0.1, bandwidth_MBps=10.0, jitter_sigma=0.0)
    cluster = ClusterConfig(make_clients(1, 1, speed_factors=[1.5]), baseline_compute_s=40.0,
                            latency=lat, store_mode=STRONG)
    report = run(job, cluster)
    download = (21.2 + 3.9 + 269 / 1024) / 10.0 + 3 * 0.1
    upload = 21.2 / 10.0 + 0.1
    expected = download + 40.0 * 1.5 + upload + 1.29 + 0.129
    assert report.training_time_s == pytest.approx(expected, rel=1e-12)
    counts = report.event_counts
    assert (counts["dispatch"], counts["compute_done"], counts["upload_done"],
            counts["assimilation_done"]) == (1, 1, 1, 1)
    assert report.total_subtask_attempts == 1 and len(report.rows) == 1


def test_determinism():
    job, _ = small_regression_job(n_subsets=6, max_epochs=3)
    cluster = small_cluster(3, tn=2, pn=2, p=0.2, timeout_s=80.0)
    a, b = run(job, cluster), run(job, cluster)
    assert a.rows == b.rows
    assert a.final_params.tobytes() == b.final_params.tobytes()
    assert a.event_counts == b.event_counts
    c = run(job, cluster.with_seed(1))
    assert (c.rows, c.event_counts) != (a.rows, a.event_counts)


def test_convergence_on_zero_noise_least_squares():
    data, w_star = generate_dataset("regression", 600, 5, noise=0.0, seed=3)
    cfg = LocalTrainConfig(20, 8, 0.05, 0)
    job = JobSpec(ModelSpec("least_squares", 5), data, n_subsets=10, accuracy_threshold=1.0,
                  max_epochs=8, alpha_policy=AlphaPolicy.schedule(), local_cfg=cfg)
    report = run(job, ClusterConfig(make_clients(5, 1), store_mode=STRONG))
    w_opt = least_squares_optimum(data)
    np.testing.assert_allclose(w_opt, w_star, atol=1e-10)
    assert np.linalg.norm(report.final_params - w_opt) <= 0.05 * np.linalg.norm(w_opt)

    # serial reference: the same number of SGD steps on the whole training set
    serial = local_train(job.model, np.zeros(5), data,
                         LocalTrainConfig(20 * 10 * 8, 8, 0.05, 0))
    assert np.linalg.norm(serial - w_opt) <= 0.05 * np.linalg.norm(w_opt)


def test_preemption_trial_bounds():
    rng = random.Random(0)
    assert all(preemption_trial(rng, 0.0) is None for _ in range(1000))
    draws = [preemption_trial(rng, 1.0) for _ in range(1000)]
    assert all(d is not None and 0.0 <= d < 1.0 for d in draws)
    deaths = sum(preemption_trial(rng, 0.05) is not None for _ in range(10_000))
    assert abs(deaths / 10_000 - 0.05) <= 0.01
    with pytest.raises(ValueError):
        preemption_trial(rng, -0.1)


def test_no_preemption_no_extra_time():
    job, _ = small_regression_job(n_subsets=4, max_epochs=2)
    assert measure_extra_time(job, small_cluster(2), p=0.0, trials=3) == 0.0


class Audited(Simulation):
    """Checks the scheduling and fault invariants as the run unfolds."""

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.violations = []
        self.accepted_from_dead = 0
        self.max_queue_seen = 0
        original = self.sched.dispatch

        def dispatch(task, client, now):
            for a in self.sched.assignments.values():
                if a.subtask.key == task.key and a.status is Status.RUNNING:
                    self.violations.append(("double-running", task.key))
            result = original(task, client, now)
            for c in self.clients:
                if c.load > c.max_concurrent:
                    self.violations.append(("capacity", c.id))
            return result

        self.sched.dispatch = dispatch

    def _on_upload(self, a):
        if self._current(a) is None:
            before = len(self.results)
            super()._on_upload(a)
            self.accepted_from_dead += len(self.results) > before
        else:
            super()._on_upload(a)


@pytest.mark.parametrize("mode", [STRONG, EVENTUAL])
def test_invariants_under_faults(mode):
    job, _ = small_regression_job(n_subsets=8, max_epochs=4)
    cluster = small_cluster(4, tn=2, pn=3, p=0.3, timeout_s=60.0, store_mode=mode,
                            baseline_compute_s=20.0)
    sim = Audited(job, cluster, trace=True)
    report = sim.run()
    assert sim.violations == []
    assert sim.accepted_from_dead == 0
    times = [t for t, _, _ in report.trace]
    assert times == sorted(times)
    assert report.completed_pairs == 8 * 4
    for row in report.rows:
        assert row.min_metric <= row.avg_metric <= row.max_metric
        if mode == STRONG:
            assert row.assimilations == 8 and row.lost_updates == 0
        else:
            assert row.assimilations + row.lost_updates == 8
    clocks = [r.wall_clock_s for r in report.rows]
    assert all(a < b for a, b in zip(clocks, clocks[1:]))
    assert report.reschedules > 0


def test_dead_client_results_never_arrive():
    job, _ = small_regression_job(n_subsets=4, max_epochs=2)
    cluster = small_cluster(3, tn=2, p=0.5, timeout_s=50.0, baseline_compute_s=20.0)
    report = run(job, cluster, trace=True)
    preempted = [(t, ids) for t, kind, ids in report.trace if kind == "preempted"]
    assert preempted
    assert report.completed_pairs == 8


def test_attempt_cap_aborts():
    job, _ = small_regression_job(n_subsets=2, max_epochs=1)
    cluster = small_cluster(2, p=1.0, attempt_cap=3, timeout_s=40.0)
    with pytest.raises(AttemptCapExceeded):
        run(job, cluster)


def test_late_results_are_discarded():
    # Clients 0 and 1 need 300 s > timeout 100 s; retries move to fast client 2
    # and win, so the slow uploads arriving later are dropped unassimilated.
    job, _ = small_regression_job(n_subsets=2, max_epochs=1)
    cluster = ClusterConfig(make_clients(3, 1, speed_factors=[10.0, 10.0, 1.0]),
                            baseline_compute_s=30.0, timeout_s=100.0, latency=LatencyModel.instant())
    sim = Simulation(job, cluster)
    sim.clients[2].reliability = 0.0  # make the slow clients win the first dispatch
    report = sim.run()
    assert report.completed_pairs == 2
    assert report.reschedules == 2
    assert report.rows[0].assimilations == 2
    assert report.training_time_s < 300.0  # epoch closed before the slow uploads
    assert report.stopped_by == "max_epochs"


def test_late_result_from_timed_out_attempt_can_win():
    # Only slow clients: attempts time out at 100 s and 200 s, but the first
    # attempt keeps computing and its upload at 300 s is the one accepted.
    job, _ = small_regression_job(n_subsets=1, max_epochs=1)
    cluster = ClusterConfig(make_clients(2, 1, speed_factors=[10.0, 10.0]), baseline_compute_s=30.0,
                            timeout_s=100.0, latency=LatencyModel.instant())
    report = run(job, cluster)
    assert report.reschedules == 2
    assert report.training_time_s == pytest.approx(300.0 + 0.87 + 0.087)
    assert report.rows[0].assimilations == 1


def test_result_queue_grows_with_single_server():
    job, _ = small_regression_job(n_subsets=24, max_epochs=1, m=400)
    base = dict(baseline_compute_s=2.0, latency=LatencyModel.instant())
    one = run(job, ClusterConfig(make_clients(3, 8), n_param_servers=1, **base))
    three = run(job, ClusterConfig(make_clients(3, 8), n_param_servers=3, **base))
    assert one.peak_queue > three.peak_queue
    assert one.training_time_s > three.training_time_s


def test_timing_only_mode_matches_event_flow():
    job, _ = small_regression_job(n_subsets=4, max_epochs=2)
    cluster = small_cluster(2, tn=2)
    full, timing = run(job, cluster), run(job, cluster, train=False)
    assert full.training_time_s == timing.training_time_s
    assert full.event_counts == timing.event_counts
    assert np.all(timing.final_params == 0)


def test_event_kind_rank():
    assert EventKind.COMPUTE_DONE < EventKind.PREEMPTED < EventKind.UPLOAD_DONE < EventKind.TIMEOUT_CHECK


def test_cluster_validation():
    with pytest.raises(ValueError):
        ClusterConfig(make_clients(1), n_param_servers=0)
    with pytest.raises(ValueError):
        ClusterConfig(())
    with pytest.raises(ValueError):
        LatencyModel(bandwidth_MBps=0)


def test_costs_follow_training_time():
    job, _ = small_regression_job()
    report = run(job, small_cluster(2))
    hours = report.training_time_s / 3600
    assert report.cost_usd_standard == pytest.approx(hours * 1.67)
    assert report.cost_usd_preemptible == pytest.approx(hours * 0.50)


@pytest.mark.slow
def test_epoch_barrier_amplifies_timeout_cost():
    # With a hard barrier every timeout stalls the whole epoch, so the extra
    # time sits well above the streaming estimate n*p*t_o (50 min here).
    data, _ = generate_dataset("regression", 2 * 50 + 10, 1, seed=0)
    job = JobSpec(ModelSpec("least_squares", 1), data, n_subsets=50, accuracy_threshold=1.0,
                  max_epochs=40, local_cfg=LocalTrainConfig(1, 1, 0.05, 0), validation_fraction=0.05)
    cluster = ClusterConfig(make_clients(5, 2), n_param_servers=5, latency=LatencyModel.instant())
    extra_min = measure_extra_time(job, cluster, 0.05, trials=20) / 60.0
    assert 2 * 50 < extra_min < 6 * 50
