"""Group-relative clipped policy-gradient objective over clean and noisy subsets."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .policy import AdamState, PolicyParams, adam_update
from .rollout import RolloutGroup, Trajectory, replay_logprobs


class DegenerateGroupError(ValueError):
    """Rewards with zero spread cannot be normalized."""


class NonFiniteRatioError(FloatingPointError):
    pass


@dataclass(frozen=True)
class ObjectiveConfig:
    clip_lo: float = 0.2
    clip_hi: float = 0.28
    ratio_mode: str = "sequence"  # "per-step" | "sequence"
    aggregation: str = "seq-mean-token-mean"  # or "token-mean"
    ratio_cap: float = 3.0
    ppo_epochs: int = 1
    reuse_epochs: int = 2

    def __post_init__(self):
        if not (0 < self.clip_lo < 1 and 0 < self.clip_hi < 1):
            raise ValueError("clip_lo and clip_hi must lie in (0, 1)")
        if self.ratio_cap <= 1:
            raise ValueError("ratio_cap must be > 1")
        if self.ratio_mode not in ("per-step", "sequence"):
            raise ValueError(f"unknown ratio_mode {self.ratio_mode!r}")
        if self.aggregation not in ("token-mean", "seq-mean-token-mean"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.ppo_epochs < 1 or self.reuse_epochs < 1:
            raise ValueError("epoch counts must be >= 1")


PRESETS = {
    "hybrid-curriculum": ObjectiveConfig(),
    "gspo": ObjectiveConfig(),
    "grpo": ObjectiveConfig(clip_lo=0.2, clip_hi=0.2, ratio_mode="per-step", aggregation="token-mean", ratio_cap=10.0),
}


@dataclass(frozen=True)
class AdvantageRecord:
    index: int
    subset: str  # "clean" | "noise"
    value: float


# -- advantages --------------------------------------------------------------

def normalize_advantages(rewards) -> np.ndarray:
    """(r - mean) / population std."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise DegenerateGroupError("need at least two rewards to normalize")
    sigma = r.std()
    if sigma == 0:
        raise DegenerateGroupError("all rewards equal: degenerate group")
    return (r - r.mean()) / sigma


def groupwise_advantages(group: RolloutGroup) -> list[AdvantageRecord]:
    """Normalize the clean subset and the pooled noisy subset separately."""
    records = []
    for label, idx in (("clean", list(group.clean_idx)), ("noise", group.noise_idx)):
        rewards = [group.trajectories[i].reward for i in idx]
        if len(idx) < 2 or len(set(rewards)) < 2:
            continue
        for i, a in zip(idx, normalize_advantages(rewards)):
            records.append(AdvantageRecord(i, label, float(a)))
    return records


@dataclass
class FilterReport:
    all_pass: int = 0
    all_fail: int = 0
    retained: int = 0


def filter_degenerate(groups) -> tuple[list[RolloutGroup], FilterReport]:
    report = FilterReport()
    kept = []
    for g in groups:
        rewards = g.rewards
        if len(set(rewards)) <= 1:
            if rewards and rewards[0] > 0:
                report.all_pass += 1
            else:
                report.all_fail += 1
        else:
            kept.append(g)
            report.retained += 1
    return kept, report


# -- surrogate ---------------------------------------------------------------

def importance_ratio(new_logprobs, stored_logprobs, mode: str, cap: float = 3.0) -> np.ndarray:
    """Per-step ratios, hard-capped at ``cap``; sequence mode uses the geometric mean."""
    new = np.asarray(new_logprobs, dtype=np.float64)
    old = np.asarray(stored_logprobs, dtype=np.float64)
    if new.shape != old.shape:
        raise ValueError("log-prob sequences differ in length")
    diff = new - old
    with np.errstate(over="ignore"):
        if mode == "per-step":
            raw = np.exp(diff)
        elif mode == "sequence":
            raw = np.full(diff.shape, np.exp(diff.mean()) if diff.size else 1.0)
        else:
            raise ValueError(f"unknown ratio mode {mode!r}")
    bad = np.flatnonzero(~np.isfinite(raw))
    if bad.size:
        raise NonFiniteRatioError(f"non-finite importance ratio at step {int(bad[0])}")
    return np.minimum(raw, cap)


def clipped_surrogate(ratio, advantage, clip_lo: float, clip_hi: float):
    r = np.asarray(ratio, dtype=np.float64)
    return np.minimum(r * advantage, np.clip(r, 1 - clip_lo, 1 + clip_hi) * advantage)


def aggregate_loss(values_per_traj, mode: str) -> float:
    if any(len(v) == 0 for v in values_per_traj):
        raise ValueError("every trajectory needs at least one step")
    if not values_per_traj:
        return 0.0
    if mode == "seq-mean-token-mean":
        return float(np.mean([np.mean(v) for v in values_per_traj]))
    if mode == "token-mean":
        return float(np.mean(np.concatenate([np.asarray(v, dtype=np.float64) for v in values_per_traj])))
    raise ValueError(f"unknown aggregation {mode!r}")


@dataclass
class SurrogateStats:
    objective: float = 0.0
    ratio_mean: float = 1.0
    ratio_max: float = 1.0
    clip_fraction: float = 0.0
    steps: int = 0


def surrogate_and_gradient(batch: list[tuple[Trajectory, float]], params: PolicyParams,
                           config: ObjectiveConfig) -> tuple[float, np.ndarray, SurrogateStats]:
    """Objective J and dJ/dweights for (trajectory, advantage) pairs."""
    grad = np.zeros(params.dim)
    values, ratios, clipped = [], [], 0
    total_steps = sum(t.length for t, _ in batch)
    n_traj = len(batch)
    for ti, (traj, adv) in enumerate(batch):
        if traj.length == 0:
            raise ValueError(f"trajectory {ti} has no steps")
        new, glog = replay_logprobs(params, traj, with_grad=True)
        old = traj.stored_logprobs
        try:
            r = importance_ratio(new, old, config.ratio_mode, config.ratio_cap)
        except NonFiniteRatioError as exc:
            raise NonFiniteRatioError(f"trajectory {ti} ({traj.task_id}): {exc}") from exc
        diff = new - old
        if config.ratio_mode == "per-step":
            raw = np.exp(diff)
            dr = np.where((raw < config.ratio_cap)[:, None], raw[:, None] * glog, 0.0)
        else:
            raw = float(np.exp(diff.mean()))
            row = raw * glog.mean(axis=0) if raw < config.ratio_cap else np.zeros(params.dim)
            dr = np.broadcast_to(row, glog.shape)
        s = clipped_surrogate(r, adv, config.clip_lo, config.clip_hi)
        lo, hi = 1 - config.clip_lo, 1 + config.clip_hi
        active = r * adv <= np.clip(r, lo, hi) * adv
        clipped += int(np.count_nonzero(~active))
        weight = 1.0 / (n_traj * traj.length) if config.aggregation == "seq-mean-token-mean" else 1.0 / total_steps
        grad += weight * adv * (active.astype(np.float64) @ dr)
        values.append(s)
        ratios.append(r)
    if not batch:
        return 0.0, grad, SurrogateStats()
    objective = aggregate_loss(values, config.aggregation)
    flat = np.concatenate(ratios)
    stats = SurrogateStats(objective, float(flat.mean()), float(flat.max()), clipped / total_steps, total_steps)
    return objective, grad, stats


# -- updates -----------------------------------------------------------------

def _subset_stats(records: list[AdvantageRecord], label: str) -> dict:
    vals = np.array([r.value for r in records if r.subset == label])
    if vals.size == 0:
        return {"count": 0, "mean": None, "std": None}
    return {"count": int(vals.size), "mean": float(vals.mean()), "std": float(vals.std())}


def _optimize(batch, params, state, config):
    first = None
    for _ in range(config.reuse_epochs * config.ppo_epochs):
        obj, grad, stats = surrogate_and_gradient(batch, params, config)
        if first is None:
            first = stats
        state, params = adam_update(state, params, grad)
    return params, state, first


def update_policy(groups, params: PolicyParams, state: AdamState,
                  config: ObjectiveConfig) -> tuple[PolicyParams, AdamState, dict]:
    """Filter, normalize per subset, and ascend the clipped surrogate."""
    kept, report = filter_degenerate(groups)
    batch, records = [], []
    for g in kept:
        recs = groupwise_advantages(g)
        records += recs
        batch += [(g.trajectories[r.index], r.value) for r in recs]
    diag = {"filter": asdict(report), "records": len(records),
            "advantages": {"clean": _subset_stats(records, "clean"), "noise": _subset_stats(records, "noise")}}
    if not batch:
        diag.update(asdict(SurrogateStats()), updated=False)
        return params, state, diag
    params, state, stats = _optimize(batch, params, state, config)
    diag.update(asdict(stats), updated=True)
    return params, state, diag


def grpo_update(groups, params: PolicyParams, state: AdamState,
                config: ObjectiveConfig) -> tuple[PolicyParams, AdamState, dict]:
    """Plain group-relative update: one z-score over every rollout of a task."""
    batch = []
    n_groups = 0
    for g in groups:
        rewards = np.array([t.reward for t in g.trajectories], dtype=np.float64)
        sigma = rewards.std()
        if rewards.size < 2 or sigma == 0:
            continue
        n_groups += 1
        adv = (rewards - rewards.mean()) / sigma
        batch += [(t, float(a)) for t, a in zip(g.trajectories, adv)]
    diag = {"groups": n_groups, "records": len(batch)}
    if not batch:
        return params, state, diag
    params, state, stats = _optimize(batch, params, state, config)
    diag.update(asdict(stats))
    return params, state, diag
