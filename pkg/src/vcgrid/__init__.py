"""Volunteer-computing style asynchronous SGD: update rule, scheduler, store, simulator."""

from .analytics import (CostInput, TimeoutModelInput, cost_compare, expected_times,
                        store_overhead, theory_vs_sim)
from .models import (Dataset, LocalTrainConfig, ModelSpec, evaluate, generate_dataset,
                     local_train, loss_and_gradient)
from .scheduler import AttemptCapExceeded, ClientProfile, Scheduler
from .sim import ClusterConfig, LatencyModel, RunReport, make_clients, measure_extra_time, run
from .store import EVENTUAL, STRONG, ParamStore
from .vcasgd import AlphaPolicy, alpha_for_epoch, assimilate, epoch_closed_form
from .workgen import JobSpec, WorkGenerator, split_dataset

__version__ = "0.1.0"

__all__ = [
    "AlphaPolicy", "AttemptCapExceeded", "ClientProfile", "ClusterConfig", "CostInput", "Dataset",
    "EVENTUAL", "JobSpec", "LatencyModel", "LocalTrainConfig", "ModelSpec", "ParamStore",
    "RunReport", "STRONG", "Scheduler", "TimeoutModelInput", "WorkGenerator", "alpha_for_epoch",
    "assimilate", "cost_compare", "epoch_closed_form", "evaluate", "expected_times",
    "generate_dataset", "local_train", "loss_and_gradient", "make_clients", "measure_extra_time",
    "run", "split_dataset", "store_overhead", "theory_vs_sim",
]
