"""Experiment configuration: YAML file -> validated, fully defaulted config."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import yaml

from .env.noise import TAXONOMY
from .optim import PRESETS, ObjectiveConfig

VARIANTS = ("grpo", "gspo", "hybrid-curriculum")
OUTPUT_ROOT_ENV = "NOISERL_OUTPUT_ROOT"

DEFAULTS = {
    "name": "run",
    "seed": 0,
    "variant": "hybrid-curriculum",
    "iterations": 100,
    "domain": {"n_kinds": 4, "n_tools": None, "n_links": None, "n_records": 8, "seed": None},
    "tasks": {"train": 300, "eval": 100, "probe": 8},
    "rollouts": {"n": 16, "batch": 8, "max_turns": None, "temperature": 1.0},
    "optimizer": {"lr": 0.05, "beta1": 0.9, "beta2": 0.95, "eps": 1e-8, "clip_norm": 1.0,
                  "weight_decay": 0.0, "init_scale": 0.01},
    # None entries fall back to the variant's preset
    "objective": {"clip_lo": None, "clip_hi": None, "ratio_mode": None, "aggregation": None,
                  "ratio_cap": None, "ppo_epochs": None, "reuse_epochs": None},
    "scheduler": {"theta": 0.05, "step": 0.0625, "rho_max": 0.5, "window": 5, "probe_rollouts": 4},
    "eval": {"k": 4, "level": 2, "categories": list(TAXONOMY), "temperature": 0.0},
    "output": {"dir": None, "log_trajectories": True},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @property
    def variant(self) -> str:
        return self.data["variant"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def objective(self) -> ObjectiveConfig:
        preset = PRESETS[self.variant]
        overrides = {k: v for k, v in self.data["objective"].items() if v is not None}
        return ObjectiveConfig(**{**preset.__dict__, **overrides})

    @property
    def domain_seed(self) -> int:
        s = self.data["domain"]["seed"]
        return self.seed if s is None else s

    @property
    def curriculum(self) -> bool:
        return self.variant == "hybrid-curriculum"

    def output_dir(self) -> Path:
        d = self.data["output"]["dir"] or f"runs/{self.data['name']}-{self.variant}-s{self.seed}"
        path = Path(d)
        if not path.is_absolute():
            path = Path(os.environ.get(OUTPUT_ROOT_ENV, ".")) / path
        return path

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.data, sort_keys=True).encode()).hexdigest()

    def with_overrides(self, **changes) -> "ExperimentConfig":
        data = copy.deepcopy(self.data)
        for dotted, value in changes.items():
            node = data
            *parents, leaf = dotted.split(".")
            for p in parents:
                node = node[p]
            node[leaf] = value
        return build_config(data)


def _merge(defaults: dict, given: dict, where: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        loc = f"{where}.{key}" if where else key
        if key not in defaults:
            raise ConfigError(f"unknown config key '{loc}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{loc}' must be a mapping")
            out[key] = _merge(defaults[key], value, loc)
        else:
            out[key] = value
    return out


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def build_config(given: dict | None) -> ExperimentConfig:
    """Apply defaults and validate."""
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError("config must be a mapping at the top level")
    data = _merge(DEFAULTS, given, "")
    _require(data["variant"] in VARIANTS, f"variant: must be one of {VARIANTS}, got {data['variant']!r}")
    _require(isinstance(data["seed"], int), "seed: must be an integer")
    _require(isinstance(data["iterations"], int) and data["iterations"] >= 0, "iterations: must be an integer >= 0")
    sched = data["scheduler"]
    _require(0 <= sched["rho_max"] <= 0.5,
             f"scheduler.rho_max: {sched['rho_max']} exceeds the cap of 0.5 (at most half the rollouts may be noisy)")
    _require(0 < sched["step"] <= 0.5, "scheduler.step: must lie in (0, 0.5]")
    _require(sched["window"] >= 1, "scheduler.window: must be >= 1")
    _require(sched["probe_rollouts"] >= 1, "scheduler.probe_rollouts: must be >= 1")
    ro = data["rollouts"]
    _require(ro["n"] >= 2, "rollouts.n: must be >= 2")
    _require(ro["batch"] >= 1, "rollouts.batch: must be >= 1")
    _require(ro["temperature"] >= 0, "rollouts.temperature: must be >= 0")
    tasks = data["tasks"]
    _require(tasks["train"] >= 1 and tasks["eval"] >= 1, "tasks.train and tasks.eval must be >= 1")
    _require(tasks["probe"] >= 4, "tasks.probe: probes need at least 4 tasks")
    _require(data["eval"]["k"] >= 1, "eval.k: must be >= 1")
    for c in data["eval"]["categories"]:
        _require(c in TAXONOMY, f"eval.categories: unknown noise category {c!r}")
    opt = data["optimizer"]
    _require(opt["lr"] > 0, "optimizer.lr: must be > 0")
    _require(0 <= opt["beta1"] < 1 and 0 <= opt["beta2"] < 1, "optimizer.beta1/beta2: must lie in [0, 1)")
    cfg = ExperimentConfig(data)
    try:
        cfg.objective
    except ValueError as exc:
        raise ConfigError(f"objective: {exc}") from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    try:
        given = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    try:
        return build_config(given)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
