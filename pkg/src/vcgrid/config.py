"""Run configuration files: ``[section]`` headers with ``key = value`` lines.

Sections ``[job]`` and ``[cluster]`` are required; ``[network]``, ``[store]``
and ``[cost]`` fall back to defaults.  Unknown sections and keys are errors.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .models import (CLASSIFICATION, LEAST_SQUARES, LOGISTIC, REGRESSION, LocalTrainConfig,
                     ModelSpec, generate_dataset)
from .sim import ClusterConfig, LatencyModel, make_clients
from .store import EVENTUAL, STRONG
from .vcasgd import AlphaPolicy
from .workgen import JobSpec


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> list[float]:
    values = [float(v) for v in text.replace(",", " ").split()]
    if not values:
        raise ValueError("empty list")
    return values


def _choice(*options: str):
    def parse(text: str) -> str:
        value = text.strip().lower()
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return value
    return parse


# section -> key -> (parser, default); default None means required.
SCHEMA = {
    "job": {
        "model": (_choice(LEAST_SQUARES, LOGISTIC), None),
        "m": (int, 2000),
        "d": (int, 10),
        "classes": (int, 3),
        "noise": (float, 0.0),
        "separation": (float, 3.0),
        "n_subsets": (int, 50),
        "threshold": (float, 0.73),
        "max_epochs": (int, 40),
        "alpha": (AlphaPolicy.parse, AlphaPolicy.fixed(0.95)),
        "local_steps": (int, 10),
        "batch_size": (int, 16),
        "learning_rate": (float, 0.05),
        "validation_fraction": (float, 0.1),
        "train": (_bool, True),
        "seed": (int, 0),
    },
    "cluster": {
        "n_param_servers": (int, 1),
        "n_clients": (int, None),
        "max_tasks_per_client": (int, 1),
        "speed_factors": (_floats, [1.0]),
        "preempt_prob": (float, 0.0),
        "timeout_s": (float, 300.0),
        "baseline_compute_s": (float, 144.0),
        "respawn_s": (float, 60.0),
        "attempt_cap": (int, 20),
    },
    "network": {
        "base_rtt_s": (float, 0.05),
        "bandwidth_MBps": (float, 100.0),
        "jitter_sigma": (float, 0.25),
        "params_MB": (float, 21.2),
        "subset_MB": (float, 3.9),
        "model_KB": (float, 269.0),
    },
    "store": {
        "mode": (_choice(STRONG, EVENTUAL), EVENTUAL),
        "latency_strong_s": (float, 1.29),
        "latency_eventual_s": (float, 0.87),
        "eval_fraction": (float, 0.1),
    },
    "cost": {
        "rate_standard": (float, 1.67),
        "rate_preemptible": (float, 0.50),
    },
}
REQUIRED_SECTIONS = ("job", "cluster")


@dataclass
class RunConfig:
    values: dict[str, dict[str, object]] = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.values[section][key]

    @property
    def seed(self) -> int:
        return int(self.values["job"]["seed"])

    def with_value(self, section: str, key: str, value) -> "RunConfig":
        values = {s: dict(kv) for s, kv in self.values.items()}
        values[section][key] = value
        return RunConfig(values)

    def build(self, seed: int | None = None) -> tuple[JobSpec, ClusterConfig]:
        """Materialise the job (dataset included) and the cluster."""
        job_cfg, cl, net, st, cost = (self.values[s] for s in ("job", "cluster", "network", "store", "cost"))
        seed = self.seed if seed is None else seed
        try:
            model = ModelSpec(job_cfg["model"], job_cfg["d"], job_cfg["classes"])
            kind = REGRESSION if model.kind == LEAST_SQUARES else CLASSIFICATION
            dataset, _ = generate_dataset(kind, job_cfg["m"], job_cfg["d"], job_cfg["classes"],
                                          job_cfg["noise"], seed, job_cfg["separation"])
            job = JobSpec(
                model=model,
                dataset=dataset,
                n_subsets=job_cfg["n_subsets"],
                accuracy_threshold=job_cfg["threshold"],
                max_epochs=job_cfg["max_epochs"],
                alpha_policy=job_cfg["alpha"],
                local_cfg=LocalTrainConfig(job_cfg["local_steps"], job_cfg["batch_size"],
                                           job_cfg["learning_rate"], seed),
                validation_fraction=job_cfg["validation_fraction"],
                split_seed=seed,
            )
            speeds = cl["speed_factors"]
            if len(speeds) not in (1, cl["n_clients"]):
                raise ConfigError("[cluster] speed_factors: need 1 value or one per client")
            mode = st["mode"]
            cluster = ClusterConfig(
                clients=make_clients(cl["n_clients"], cl["max_tasks_per_client"], speeds, cl["preempt_prob"]),
                n_param_servers=cl["n_param_servers"],
                store_mode=mode,
                seed=seed,
                timeout_s=cl["timeout_s"],
                baseline_compute_s=cl["baseline_compute_s"],
                respawn_s=cl["respawn_s"],
                eval_fraction=st["eval_fraction"],
                latency=LatencyModel(net["base_rtt_s"], net["bandwidth_MBps"], net["jitter_sigma"],
                                     net["params_MB"], net["subset_MB"], net["model_KB"]),
                update_latency_s=st["latency_strong_s"] if mode == STRONG else st["latency_eventual_s"],
                attempt_cap=cl["attempt_cap"],
                rate_standard=cost["rate_standard"],
                rate_preemptible=cost["rate_preemptible"],
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return job, cluster


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__no_defaults__")
    parser.optionxform = str  # keep key case (bandwidth_MBps)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
    for section in REQUIRED_SECTIONS:
        if not parser.has_section(section):
            raise ConfigError(f"{source}: missing required section [{section}]")

    values: dict[str, dict[str, object]] = {}
    for section, keys in SCHEMA.items():
        raw = dict(parser.items(section)) if parser.has_section(section) else {}
        for key in raw:
            if key not in keys:
                raise ConfigError(f"{source}: unknown key [{section}] {key}")
        parsed = {}
        for key, (conv, default) in keys.items():
            if key in raw:
                try:
                    parsed[key] = conv(raw[key])
                except ValueError as exc:
                    raise ConfigError(f"{source}: [{section}] {key} = {raw[key]!r}: {exc}") from None
            elif default is None:
                raise ConfigError(f"{source}: missing required key [{section}] {key}")
            else:
                parsed[key] = default
        values[section] = parsed
    return RunConfig(values)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
