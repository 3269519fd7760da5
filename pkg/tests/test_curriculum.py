import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noiserl.curriculum import (
    ProbeResult, SchedulerState, allocate_noise, compute_delta, probe, schedule_step,
)
from noiserl.env.core import AskUser
from noiserl.env.noise import TAXONOMY
from noiserl.rollout import ReferencePolicy


class NoAskPolicy(ReferencePolicy):
    """Reference chain without clarification requests."""

    def choose(self, env, candidates, task, rng):
        kept = [i for i, c in enumerate(candidates) if not isinstance(c, AskUser)]
        i, lp = super().choose(env, [candidates[i] for i in kept], task, rng)
        return kept[i], lp


def deltas(value, **over):
    d = {c: value for c in TAXONOMY}
    d.update(over)
    return d


# -- compute_delta --------------------------------------------------------------------

def test_delta_examples():
    assert compute_delta([1, 1, 1, 0], [1, 0, 0, 0]) == 0.5
    assert compute_delta([1, 0, 1], [1, 0, 1]) == 0
    assert compute_delta([1, 1], [0, 0, 0]) == 1
    with pytest.raises(ValueError):
        compute_delta([], [1])


# -- probe -----------------------------------------------------------------------------------

def test_probe_oracle_clean_rate_one(domain, space, tasks):
    st0 = SchedulerState.initial()
    res = probe(ReferencePolicy(), tasks[:8], st0, "tool.failure", domain, space, np.random.default_rng(0))
    assert res.clean_rate == 1.0 and res.tasks == 8
    assert (res.noisy_rate * 32) == int(res.noisy_rate * 32)


def test_probe_level_zero_runs_level_one(domain, space, tasks):
    st0 = SchedulerState.initial()
    assert st0.levels["user.ambiguous"] == 0
    res = probe(NoAskPolicy(), tasks[:8], st0, "user.ambiguous", domain, space, np.random.default_rng(0))
    assert res.clean_rate == 1.0 and res.noisy_rate < 1.0


def test_probe_needs_four_tasks(domain, space, tasks):
    with pytest.raises(ValueError):
        probe(ReferencePolicy(), tasks[:3], SchedulerState.initial(), "tool.failure", domain, space,
              np.random.default_rng(0))


# -- schedule_step ---------------------------------------------------------------------------

def test_small_gap_escalates_level_and_fraction():
    st1 = schedule_step(SchedulerState.initial(), deltas(0.2, **{"tool.failure": 0.03}))
    assert st1.levels["tool.failure"] == 1 and st1.fractions["tool.failure"] == 1 / 16
    assert all(st1.levels[c] == 0 and st1.fractions[c] == 0 for c in TAXONOMY if c != "tool.failure")


def test_large_gap_unchanged():
    s0 = SchedulerState.initial()
    s1 = schedule_step(s0, deltas(0.2))
    assert s1.levels == s0.levels and s1.fractions == s0.fractions
    assert s1.deltas["tool.failure"] == [0.2]


def test_cap_binds_levels_still_escalate():
    s = SchedulerState.initial()
    fr = {c: 0.0 for c in TAXONOMY}
    fr["tool.failure"], fr["user.ambiguous"] = 0.25, 0.25
    s = SchedulerState(dict(s.levels), fr, s.deltas)
    s1 = schedule_step(s, deltas(0.0))
    assert all(s1.levels[c] == 1 for c in TAXONOMY)
    assert s1.fractions == fr and s1.noise_fraction == 0.5


def test_probe_results_accepted_as_objects():
    s1 = schedule_step(SchedulerState.initial(), {c: ProbeResult(c, 0.5, 0.5, 8) for c in TAXONOMY})
    assert all(v == 1 for v in s1.levels.values())


def test_missing_category_rejected():
    with pytest.raises(ValueError, match="missing"):
        schedule_step(SchedulerState.initial(), {"tool.failure": 0.0})


def test_rho_max_above_half_rejected():
    with pytest.raises(ValueError, match="0.5"):
        SchedulerState.initial(rho_max=0.7)


def test_state_roundtrip():
    s = schedule_step(SchedulerState.initial(), deltas(0.01))
    assert SchedulerState.from_dict(s.to_dict()) == s


# -- allocate_noise -------------------------------------------------------------------------------

def test_allocation_examples():
    s = SchedulerState.initial()
    assert sum(allocate_noise(s, 16).values()) == 0
    fr = {c: 0.0 for c in TAXONOMY}
    fr["tool.failure"] = 1 / 8
    counts = allocate_noise(SchedulerState(s.levels, fr, s.deltas), 16)
    assert counts["tool.failure"] == 2 and sum(counts.values()) == 2
    fr = {c: 1 / 16 for c in TAXONOMY}
    assert sum(allocate_noise(SchedulerState(s.levels, fr, s.deltas), 16).values()) == 8


def test_allocation_rounding_trims_in_reverse_order():
    s = SchedulerState.initial()
    fr = {c: 1 / 16 for c in TAXONOMY}
    counts = allocate_noise(SchedulerState(s.levels, fr, s.deltas), 10)  # 8 x round(0.625) = 8 > 5
    assert sum(counts.values()) == 5
    assert [counts[c] for c in TAXONOMY] == [1, 1, 1, 1, 1, 0, 0, 0]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.floats(-0.2, 1.0), min_size=8, max_size=8), min_size=1, max_size=25),
       st.integers(2, 64))
def test_scheduler_invariants(seq, n):
    s = SchedulerState.initial()
    for vec in seq:
        d = dict(zip(TAXONOMY, vec))
        s1 = schedule_step(s, d)
        for c in TAXONOMY:
            assert s1.levels[c] >= s.levels[c] and s1.fractions[c] >= s.fractions[c]
            changed = (s1.levels[c], s1.fractions[c]) != (s.levels[c], s.fractions[c])
            assert changed == (d[c] < s.theta)
        assert s1.noise_fraction <= 0.5 + 1e-12
        assert sum(allocate_noise(s1, n).values()) <= n // 2
        s = s1
