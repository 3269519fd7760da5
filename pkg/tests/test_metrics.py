import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noiserl.metrics import (
    EvalRecord, avg_at_k, binomial_ci, interaction_stats, pass_at_k, robustness_report,
)
from noiserl.rollout import StepRecord, Trajectory


def recs(table, setting="ideal"):
    return [EvalRecord(f"t{i}", tuple(row), setting) for i, row in enumerate(table)]


def brute_avg(table):
    total = 0.0
    for row in table:
        s = 0
        for r in row:
            s += r
        total += s / len(row)
    return 100.0 * total / len(table)


def brute_pass(table):
    hits = 0
    for row in table:
        for r in row:
            if r == 1:
                hits += 1
                break
    return 100.0 * hits / len(table)


def test_avg_examples():
    assert avg_at_k(recs([[1, 0, 0, 0]])) == 25.0
    assert avg_at_k(recs([[1, 1, 1, 1], [0, 0, 0, 0]])) == 50.0


def test_pass_examples():
    assert pass_at_k(recs([[1, 0, 0, 0]])) == 100.0
    assert pass_at_k(recs([[1, 0, 0, 0], [0, 0, 0, 0]])) == 50.0


def test_random_tables_match_counting():
    rng = np.random.default_rng(0)
    table = rng.integers(0, 2, (10, 4)).tolist()
    assert avg_at_k(recs(table)) == pytest.approx(brute_avg(table), abs=1e-12)
    assert pass_at_k(recs(table)) == brute_pass(table)


def test_avg_one_is_success_rate():
    table = [[1], [0], [1], [1]]
    assert avg_at_k(recs(table)) == 75.0 == pass_at_k(recs(table))


def test_record_validation():
    with pytest.raises(ValueError):
        EvalRecord("t", ())
    with pytest.raises(ValueError):
        EvalRecord("t", (2,))
    with pytest.raises(ValueError):
        avg_at_k([EvalRecord("a", (1,)), EvalRecord("b", (1, 0))])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.integers(0, 1), min_size=4, max_size=4), min_size=1, max_size=20), st.randoms())
def test_pass_dominates_and_order_invariant(table, rnd):
    a, p = avg_at_k(recs(table)), pass_at_k(recs(table))
    assert p >= a
    shuffled = [rnd.sample(row, len(row)) for row in table]
    rnd.shuffle(shuffled)
    assert avg_at_k(recs(shuffled)) == pytest.approx(a, abs=1e-9) and pass_at_k(recs(shuffled)) == p


# -- robustness_report ---------------------------------------------------------------------------

def test_identical_settings_zero_gap():
    table = [[1, 0, 1, 1], [0, 0, 1, 0]]
    rep = robustness_report(recs(table), {"tool.failure@2": recs(table, "tool.failure@2")})
    assert all(g == {"avg": 0.0, "pass": 0.0} for g in rep.gaps.values())


def test_gap_fifty_vs_thirty():
    ideal = recs([[1, 0]] * 5)
    noisy = recs([[1, 0]] * 3 + [[0, 0]] * 2, "x")
    assert robustness_report(ideal, {"x": noisy}).gaps["x"]["avg"] == pytest.approx(20.0)


def fill(n_tasks, k, successes):
    flat = [1] * successes + [0] * (n_tasks * k - successes)
    return [flat[i * k:(i + 1) * k] for i in range(n_tasks)]


def test_retail_fixture_gap():
    # 2,500 tasks x 4 runs make both published Avg@4 cells exact
    ideal, noisy = fill(2500, 4, 3531), fill(2500, 4, 2412)
    rep = robustness_report(recs(ideal), {"noisy": recs(noisy, "noisy")})
    assert rep.settings["ideal"]["avg"] == pytest.approx(35.31, abs=1e-9)
    assert rep.settings["noisy"]["avg"] == pytest.approx(24.12, abs=1e-9)
    assert rep.gaps["noisy"]["avg"] == pytest.approx(11.19, abs=1e-9)


def test_mismatched_task_sets_rejected():
    with pytest.raises(ValueError, match="different task set"):
        robustness_report(recs([[1], [0]]), {"x": recs([[1]], "x")})


def test_report_text_and_baseline():
    base = robustness_report(recs([[0, 1]] * 2), {"x": recs([[0, 0]] * 2, "x")})
    rep = robustness_report(recs([[1, 1]] * 2), {"x": recs([[1, 0]] * 2, "x")}, baseline=base)
    assert rep.comparison["x"]["avg"] == pytest.approx(50.0)
    assert "noisy(pooled)" in rep.to_text()


# -- interaction_stats ----------------------------------------------------------------------------

def episode(keys):
    steps = [StepRecord(None, [k], 0, 0.0) for k in keys]
    return Trajectory("t", steps, 0, "clean", None, np.zeros((len(keys), 1)), np.arange(len(keys) + 1))


def test_interaction_counts():
    ep = episode(["get_a(a_id=1)", "get_b(b_id=2)", "ask(a.status)", "update_a_status(a_id=1,status=x)", "finish"])
    assert interaction_stats([ep]) == {"tool_calls": 3.0, "ask_user": 1.0, "length": 5.0}
    assert interaction_stats([episode(["finish"])] * 3) == {"tool_calls": 0.0, "ask_user": 0.0, "length": 1.0}


def test_interaction_means_on_mixed_batch():
    eps = [episode(["finish"]), episode(["ask(x)", "get_a(a_id=1)", "finish"]),
           episode(["get_a(a_id=1)", "get_a(a_id=1)", "get_b(b_id=1)", "finish"])]
    assert interaction_stats(eps) == {"tool_calls": 4 / 3, "ask_user": 1 / 3, "length": 8 / 3}


def test_wilson_interval():
    lo, hi = binomial_ci(0, 1000)
    assert lo == 0.0 and 0 < hi < 0.01
    lo, hi = binomial_ci(50, 100)
    assert lo < 0.5 < hi and hi - 0.5 == pytest.approx(0.5 - lo)
