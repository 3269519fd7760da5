"""Episodes, trajectories and hybrid clean/noisy rollout groups."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .env.core import AskUser, TaskSpec, ToolResult, UserMessage, turn_budget
from .env.domain import DomainGraph
from .env.episode import act, enumerate_actions, reset, verify
from .env.noise import TAXONOMY, NoiseRealization, NoiseSpec, realize, value_pool
from .policy import FeatureSpace, PolicyParams, action_logprobs, featurize_candidates, sample_action

NOISE_CAP = 0.5


class EpisodeError(RuntimeError):
    """Internal invariant violation; carries the step log for inspection."""

    def __init__(self, message: str, steps):
        super().__init__(message)
        self.steps = steps


@dataclass
class StepRecord:
    observation: object  # what the environment returned for the chosen action
    candidates: list  # action keys, in enumeration order
    chosen: int
    logprob: float


@dataclass
class Trajectory:
    task_id: str
    steps: list[StepRecord]
    reward: int
    noise_tag: str  # "clean" or "<side>.<category>@<level>"
    realization: NoiseRealization | None
    feats: np.ndarray  # all candidate feature rows, stacked per step
    offsets: np.ndarray  # step i owns rows offsets[i]:offsets[i+1]

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def chosen(self) -> np.ndarray:
        return np.array([s.chosen for s in self.steps], dtype=np.int64)

    @property
    def stored_logprobs(self) -> np.ndarray:
        return np.array([s.logprob for s in self.steps])

    @property
    def clean(self) -> bool:
        return self.realization is None

    def actions(self) -> list[str]:
        return [s.candidates[s.chosen] for s in self.steps]

    def to_json(self) -> dict:
        real = None
        if self.realization is not None:
            real = {"spec": self.realization.spec.to_dict(), "seed": self.realization.seed,
                    "draw_log": self.realization.draw_log}
        return {"task_id": self.task_id, "noise_tag": self.noise_tag, "realization": real,
                "steps": [{"candidates": s.candidates, "chosen": s.chosen, "logprob": s.logprob,
                           "observation": observation_summary(s.observation)} for s in self.steps],
                "reward": self.reward}


def observation_summary(obs) -> dict:
    if isinstance(obs, ToolResult):
        return {"type": "tool", "tool": obs.tool, "status": obs.status,
                "fields": [[k, v] for k, v in obs.fields]}
    if isinstance(obs, UserMessage):
        return {"type": "user", "segments": [[s.kind, s.slot, s.value] for s in obs.segments]}
    return {"type": "silence"}


def noise_tag(spec: NoiseSpec | None) -> str:
    return "clean" if spec is None else f"{spec.name}@{spec.level}"


def effective_spec(spec: NoiseSpec, task: TaskSpec) -> NoiseSpec:
    """Clamp withhold/decoy counts to the number of goal slots a task has."""
    if spec.side == "user" and spec.category in ("ambiguous", "inconsistent"):
        level = min(spec.level, len(task.goal_slots))
        if level != spec.level:
            return NoiseSpec(spec.side, spec.category, level)
    return spec


class ReferencePolicy:
    """Scripted oracle: ask for unrevealed goal slots, then replay the reference chain."""

    def choose(self, env, candidates, task, rng) -> tuple[int, float]:
        keys = [c.key() for c in candidates]
        for i, c in enumerate(candidates):
            if isinstance(c, AskUser):
                return i, 0.0
        done = env.ok_calls()
        for call in task.reference_chain:
            if call.key() not in done and call.key() in keys:
                return keys.index(call.key()), 0.0
        return keys.index("finish"), 0.0


class UniformPolicy:
    """Uniformly random choice among the candidates."""

    def choose(self, env, candidates, task, rng) -> tuple[int, float]:
        return int(rng.integers(len(candidates))), -math.log(len(candidates))


def run_episode(params, task: TaskSpec, domain: DomainGraph, space: FeatureSpace,
                noise: NoiseSpec | None, max_turns: int | None, rng: np.random.Generator,
                temperature: float = 1.0) -> Trajectory:
    """Roll out one episode; user-side noise rewrites the script up front,
    tool-side noise perturbs ok read results as they happen.

    ``params`` is a ``PolicyParams`` or a scripted policy with ``choose``.
    """
    if max_turns is None:
        max_turns = turn_budget(task.chain_length)
    if max_turns < 1:
        raise ValueError("max_turns must be >= 1")
    noise_seed = int(rng.integers(2**31))
    realization = None
    script = None
    channel = None
    if noise is not None and noise.level > 0:
        spec = effective_spec(noise, task)
        realization = realize(spec, noise_seed, task.interaction_script, value_pool(domain, task.initial_state))
        script = realization.script
        channel = realization.channel()
    env = reset(task, domain, script)
    steps: list[StepRecord] = []
    rows, offsets = [], [0]
    while not env.terminated and env.turn_index < max_turns:
        cands = enumerate_actions(env, domain, task)
        feats = featurize_candidates(space, env, cands, task)
        if isinstance(params, PolicyParams):
            idx, lp = sample_action(action_logprobs(params, feats), temperature, rng)
        else:
            idx, lp = params.choose(env, cands, task, rng)
        if not (0 <= idx < len(cands)) or lp > 0:
            raise EpisodeError(f"bad sample index={idx} logprob={lp}", steps)
        obs = act(env, cands[idx], domain, channel)
        steps.append(StepRecord(obs, [c.key() for c in cands], idx, lp))
        rows.append(feats)
        offsets.append(offsets[-1] + len(cands))
    if len(env.history) != env.turn_index:
        raise EpisodeError("turn_index out of sync with history", steps)
    reward = verify(env, task, budget=max_turns)
    if realization is not None:
        realization.draw_log = realization.draw_log + env.draws
    return Trajectory(task.task_id, steps, reward, noise_tag(realization.spec if realization else None),
                      realization, np.concatenate(rows) if rows else np.zeros((0, space.dim)),
                      np.array(offsets, dtype=np.int64))


@dataclass
class RolloutGroup:
    task_id: str
    trajectories: list[Trajectory]
    clean_idx: list[int]
    noisy_idx: dict[str, list[int]] = field(default_factory=dict)

    @property
    def noise_idx(self) -> list[int]:
        return sorted(i for idx in self.noisy_idx.values() for i in idx)

    @property
    def rewards(self) -> list[int]:
        return [t.reward for t in self.trajectories]

    def check_partition(self) -> None:
        noisy = self.noise_idx
        if set(self.clean_idx) & set(noisy) or sorted(self.clean_idx + noisy) != list(range(len(self.trajectories))):
            raise AssertionError("rollout group partition is not exact and disjoint")


def round_robin(allocation: dict[str, int]) -> list[str]:
    """One category per noisy slot, cycling through categories in taxonomy order."""
    order = [c for c in TAXONOMY if allocation.get(c, 0) > 0]
    order += sorted(c for c in allocation if c not in TAXONOMY and allocation[c] > 0)
    left = {c: allocation[c] for c in order}
    out = []
    while any(left.values()):
        for c in order:
            if left[c]:
                out.append(c)
                left[c] -= 1
    return out


def run_group(params: PolicyParams, task: TaskSpec, domain: DomainGraph, space: FeatureSpace, n: int,
              allocation: dict[str, int], rng: np.random.Generator, levels: dict[str, int] | None = None,
              max_turns: int | None = None, temperature: float = 1.0, cap: float = NOISE_CAP) -> RolloutGroup:
    """N rollouts of one task: N - N_noise clean, the rest noisy per ``allocation``."""
    if any(v < 0 for v in allocation.values()):
        raise ValueError("allocation counts must be non-negative")
    n_noise = sum(allocation.values())
    if n_noise > n:
        raise ValueError(f"allocation of {n_noise} noisy rollouts exceeds N={n}")
    if n_noise > math.floor(cap * n):
        raise ValueError(f"allocation of {n_noise} noisy rollouts exceeds the cap {cap} * N = {cap * n}")
    levels = levels or {}
    seeds = rng.integers(2**63 - 1, size=n)
    cats = [None] * (n - n_noise) + round_robin(allocation)
    trajs, clean_idx, noisy_idx = [], [], {}
    for i, cat in enumerate(cats):
        spec = None if cat is None else NoiseSpec.from_name(cat, max(levels.get(cat, 1), 1))
        traj = run_episode(params, task, domain, space, spec, max_turns, np.random.default_rng(seeds[i]), temperature)
        trajs.append(traj)
        if cat is None:
            clean_idx.append(i)
        else:
            noisy_idx.setdefault(cat, []).append(i)
    group = RolloutGroup(task.task_id, trajs, clean_idx, noisy_idx)
    group.check_partition()
    return group


def replay_logprobs(params: PolicyParams, traj: Trajectory, with_grad: bool = False):
    """Log-probabilities of the recorded actions under ``params`` (and their gradients)."""
    if traj.length == 0:
        empty = np.zeros(0)
        return (empty, np.zeros((0, params.dim))) if with_grad else empty
    logp, grad = kernels.segment_replay(traj.feats, traj.offsets, traj.chosen, params.weights)
    return (logp, grad) if with_grad else logp


def count_actions(traj: Trajectory) -> dict:
    calls = asks = 0
    for key in traj.actions():
        if key.startswith("ask("):
            asks += 1
        elif key != "finish":
            calls += 1
    return {"tool_calls": calls, "ask_user": asks, "length": traj.length}
