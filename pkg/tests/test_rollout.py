import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noiserl.env.episode import copy_db
from noiserl.env.noise import NoiseSpec
from noiserl.metrics import binomial_ci
from noiserl.optim import importance_ratio
from noiserl.policy import FeatureSpace, PolicyParams, action_logprobs, init_params
from noiserl.rollout import (
    ReferencePolicy, Trajectory, UniformPolicy, count_actions, replay_logprobs, round_robin, run_episode, run_group,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_reference_policy_clean_episode(tiny):
    domain, task = tiny
    tr = run_episode(ReferencePolicy(), task, domain, FeatureSpace(domain), None, None, rng())
    assert tr.reward == 1
    c = count_actions(tr)
    assert tr.length == task.chain_length + c["ask_user"] + 1 == 4


def test_reference_policy_asks_when_slot_withheld(tiny):
    domain, task = tiny
    tr = run_episode(ReferencePolicy(), task, domain, FeatureSpace(domain), NoiseSpec("user", "ambiguous", 1),
                     None, rng())
    assert tr.reward == 1 and count_actions(tr)["ask_user"] == 1
    assert tr.length == task.chain_length + 1 + 1


def test_uniform_policy_rarely_succeeds_on_tight_budget(domain, space):
    from noiserl.env.tasks import synthesize_task

    wins = 0
    n = 1000
    for seed in range(n):
        task, _ = synthesize_task(domain, 3, seed)
        tr = run_episode(UniformPolicy(), task, domain, space, None, task.chain_length + 1, rng(seed))
        wins += tr.reward
    lo, hi = binomial_ci(wins, n)
    assert wins / n < 0.05, (wins, lo, hi)


def test_same_seed_same_trajectory(domain, space, tasks):
    p = init_params(space.dim, 0, 1.0)
    for spec in (None, NoiseSpec("tool", "failure", 2), NoiseSpec("user", "inconsistent", 1)):
        a = run_episode(p, tasks[3], domain, space, spec, None, rng(9))
        b = run_episode(p, tasks[3], domain, space, spec, None, rng(9))
        assert json.dumps(a.to_json()) == json.dumps(b.to_json())
        assert np.array_equal(a.feats, b.feats) and np.array_equal(a.offsets, b.offsets)


def test_max_turns_validated(tiny):
    domain, task = tiny
    with pytest.raises(ValueError):
        run_episode(ReferencePolicy(), task, domain, FeatureSpace(domain), None, 0, rng())


# -- run_group ---------------------------------------------------------------------

def test_group_all_clean(domain, space, tasks):
    g = run_group(init_params(space.dim, 0), tasks[0], domain, space, 8, {}, rng())
    assert len(g.clean_idx) == 8 and g.noise_idx == []


def test_group_partition_sizes(domain, space, tasks):
    g = run_group(init_params(space.dim, 0), tasks[0], domain, space, 8,
                  {"tool.failure": 2, "user.ambiguous": 2}, rng())
    assert (len(g.clean_idx), len(g.noisy_idx["tool.failure"]), len(g.noisy_idx["user.ambiguous"])) == (4, 2, 2)
    assert all(g.trajectories[i].noise_tag.startswith("tool.failure") for i in g.noisy_idx["tool.failure"])
    assert all(g.trajectories[i].clean for i in g.clean_idx)


def test_group_cap_rejected(domain, space, tasks):
    with pytest.raises(ValueError, match="cap"):
        run_group(init_params(space.dim, 0), tasks[0], domain, space, 8, {"tool.failure": 5}, rng())
    with pytest.raises(ValueError):
        run_group(init_params(space.dim, 0), tasks[0], domain, space, 8, {"tool.failure": -1}, rng())


def test_round_robin_order():
    assert round_robin({"tool.failure": 2, "user.ambiguous": 1}) == ["user.ambiguous", "tool.failure", "tool.failure"]


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.dictionaries(st.sampled_from(["user.redundant", "tool.misleading", "tool.failure"]),
                                          st.integers(0, 3)), st.integers(0, 1000))
def test_partition_exact_and_capped(n, alloc, seed):
    from noiserl.env.domain import DomainSize, build_domain
    from noiserl.env.tasks import sample_tasks

    domain = build_domain(DomainSize(), 0)
    space = FeatureSpace(domain)
    task = sample_tasks(domain, 1, seed)[0]
    total = sum(alloc.values())
    if total > n // 2:
        with pytest.raises(ValueError):
            run_group(ReferencePolicy(), task, domain, space, n, alloc, rng(seed))
        return
    g = run_group(ReferencePolicy(), task, domain, space, n, alloc, rng(seed))
    idx = sorted(g.clean_idx + g.noise_idx)
    assert idx == list(range(n)) and not set(g.clean_idx) & set(g.noise_idx)
    assert len(g.noise_idx) / n <= 0.5


def test_episodes_do_not_share_state(domain, space, tasks):
    task = tasks[5]
    before = copy_db(task.initial_state)
    p = init_params(space.dim, 1, 1.0)
    g = run_group(p, task, domain, space, 6, {"tool.misleading": 3}, rng(4))
    assert task.initial_state == before
    # each member replays identically on its own, so no episode leaked into another
    seeds = rng(4).integers(2**63 - 1, size=6)
    for i, tr in enumerate(g.trajectories):
        spec = None if tr.clean else NoiseSpec("tool", "misleading", 1)
        alone = run_episode(p, task, domain, space, spec, None, np.random.default_rng(seeds[i]))
        assert alone.to_json() == tr.to_json()


# -- replay_logprobs ----------------------------------------------------------------

def test_replay_under_behavior_params_is_exact(domain, space, tasks):
    p = init_params(space.dim, 2, 1.0)
    for t in tasks[:10]:
        tr = run_episode(p, t, domain, space, NoiseSpec("tool", "failure", 2), None, rng(1))
        lp = replay_logprobs(p, tr)
        assert np.array_equal(lp, tr.stored_logprobs)
        for mode in ("per-step", "sequence"):
            assert (importance_ratio(lp, tr.stored_logprobs, mode) == 1.0).all()


def test_replay_under_perturbed_params_positive(domain, space, tasks):
    p = init_params(space.dim, 2, 1.0)
    q = PolicyParams(p.weights + np.random.default_rng(0).normal(0, 0.5, space.dim))
    tr = run_episode(p, tasks[1], domain, space, None, None, rng(3))
    r = np.exp(replay_logprobs(q, tr) - tr.stored_logprobs)
    assert np.isfinite(r).all() and (r > 0).all()


def test_replay_one_step_fixture():
    feats = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    p = PolicyParams(np.array([0.3, -0.7]))
    tr = Trajectory("t", [], 0, "clean", None, feats, np.array([0, 3]))
    tr.steps.append(type("S", (), {"chosen": 2, "logprob": 0.0})())
    assert replay_logprobs(p, tr)[0] == pytest.approx(action_logprobs(p, feats)[2], abs=1e-15)
