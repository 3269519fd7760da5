"""Synthetic trajectories and groups for optimizer tests."""

import numpy as np

from noiserl.policy import PolicyParams
from noiserl.rollout import RolloutGroup, StepRecord, Trajectory, replay_logprobs


def synthetic_traj(rng, dim, behavior: PolicyParams, reward, tag="clean", steps=None, max_cands=5):
    steps = steps or int(rng.integers(1, 5))
    sizes = rng.integers(2, max_cands + 1, steps)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    feats = rng.random((offsets[-1], dim))
    recs = [StepRecord(None, [f"a{j}" for j in range(s)], int(rng.integers(s)), 0.0) for s in sizes]
    tr = Trajectory("t", recs, int(reward), tag, None if tag == "clean" else object(), feats, offsets)
    for rec, lp in zip(recs, replay_logprobs(behavior, tr)):
        rec.logprob = float(lp)
    return tr


def synthetic_group(rng, dim, behavior, clean_rewards, noisy_rewards=()):
    trajs = [synthetic_traj(rng, dim, behavior, r) for r in clean_rewards]
    trajs += [synthetic_traj(rng, dim, behavior, r, "tool.failure@1") for r in noisy_rewards]
    nc = len(clean_rewards)
    noisy = {"tool.failure": list(range(nc, len(trajs)))} if noisy_rewards else {}
    return RolloutGroup("t", trajs, list(range(nc)), noisy)


def random_rewards(rng, n):
    while True:
        r = rng.integers(0, 2, n)
        if 0 < r.sum() < n:
            return [int(x) for x in r]
