"""Adaptive noise curriculum driven by the clean-vs-noisy success gap."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .env.noise import TAXONOMY, NoiseSpec
from .rollout import run_episode

EPS = 1e-12


@dataclass(frozen=True)
class SchedulerState:
    levels: dict
    fractions: dict
    deltas: dict  # category -> list of measured gaps
    theta: float = 0.05
    step: float = 1 / 16
    rho_max: float = 0.5
    window: int = 5
    categories: tuple = TAXONOMY

    @classmethod
    def initial(cls, theta=0.05, step=1 / 16, rho_max=0.5, window=5, categories=TAXONOMY) -> "SchedulerState":
        if not 0 <= rho_max <= 0.5:
            raise ValueError(f"rho_max={rho_max} exceeds the 0.5 cap on the noisy share")
        return cls({c: 0 for c in categories}, {c: 0.0 for c in categories}, {c: [] for c in categories},
                   theta, step, rho_max, window, tuple(categories))

    @property
    def noise_fraction(self) -> float:
        return float(sum(self.fractions.values()))

    def to_dict(self) -> dict:
        return {"levels": dict(self.levels), "fractions": dict(self.fractions),
                "deltas": {c: list(v) for c, v in self.deltas.items()}, "theta": self.theta,
                "step": self.step, "rho_max": self.rho_max, "window": self.window,
                "categories": list(self.categories)}

    @classmethod
    def from_dict(cls, d: dict) -> "SchedulerState":
        return cls(dict(d["levels"]), dict(d["fractions"]), {c: list(v) for c, v in d["deltas"].items()},
                   d["theta"], d["step"], d["rho_max"], d["window"], tuple(d["categories"]))


@dataclass(frozen=True)
class ProbeResult:
    category: str
    clean_rate: float
    noisy_rate: float
    tasks: int

    @property
    def delta(self) -> float:
        return self.clean_rate - self.noisy_rate


def compute_delta(clean, noisy) -> float:
    """mean(clean) - mean(noisy)."""
    if len(clean) == 0 or len(noisy) == 0:
        raise ValueError("both reward lists must be nonempty")
    return float(np.mean(clean)) - float(np.mean(noisy))


def probe(params, tasks, state: SchedulerState, category: str, domain, space, rng: np.random.Generator,
          rollouts: int = 4, temperature: float = 0.0) -> ProbeResult:
    """Paired clean and noisy episodes on each probe task.

    Noise runs at ``max(level, 1)`` so untouched categories are still measured.
    """
    if len(tasks) < 4:
        raise ValueError("probe needs at least 4 tasks")
    spec = NoiseSpec.from_name(category, max(state.levels[category], 1))
    clean, noisy = [], []
    for task in tasks:
        for _ in range(rollouts):
            seed = rng.integers(2**63 - 1, size=2)
            clean.append(run_episode(params, task, domain, space, None, None,
                                     np.random.default_rng(seed[0]), temperature).reward)
            noisy.append(run_episode(params, task, domain, space, spec, None,
                                     np.random.default_rng(seed[1]), temperature).reward)
    return ProbeResult(category, float(np.mean(clean)), float(np.mean(noisy)), len(tasks))


def schedule_step(state: SchedulerState, probes: dict) -> SchedulerState:
    """Escalate every category whose gap fell below the threshold.

    Categories are visited in taxonomy order, so when the cap binds the
    earlier ones win the fraction increment; levels always escalate.
    """
    missing = [c for c in state.categories if c not in probes]
    if missing:
        raise ValueError(f"missing probe results for {missing}")
    levels, fractions = dict(state.levels), dict(state.fractions)
    deltas = {c: list(v) for c, v in state.deltas.items()}
    for c in state.categories:
        res = probes[c]
        delta = res.delta if isinstance(res, ProbeResult) else float(res)
        deltas[c].append(delta)
        if delta < state.theta:
            levels[c] += 1
            if sum(fractions.values()) + state.step <= state.rho_max + EPS:
                fractions[c] += state.step
    new = replace(state, levels=levels, fractions=fractions, deltas=deltas)
    assert new.noise_fraction <= state.rho_max + EPS
    return new


def allocate_noise(state: SchedulerState, n: int) -> dict:
    """Per-category noisy rollout counts for a group of ``n``."""
    if n < 2:
        raise ValueError("N must be >= 2")
    counts = {c: int(math.floor(state.fractions[c] * n + 0.5)) for c in state.categories}
    cap = math.floor(state.rho_max * n + EPS)
    order = list(reversed(state.categories))
    while sum(counts.values()) > cap:
        for c in order:
            if counts[c] > 0:
                counts[c] -= 1
                break
    assert sum(counts.values()) <= n // 2
    return counts
