"""Avg@k / Pass@k, robustness gaps and interaction-pattern counters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rollout import count_actions


@dataclass(frozen=True)
class EvalRecord:
    task_id: str
    rewards: tuple
    setting: str = "ideal"  # "ideal" or "<side>.<category>@<level>"

    def __post_init__(self):
        if len(self.rewards) < 1:
            raise ValueError("an eval record needs k >= 1 runs")
        if any(r not in (0, 1) for r in self.rewards):
            raise ValueError("rewards must be binary")


def _check(records):
    if not records:
        raise ValueError("no eval records")
    ks = {len(r.rewards) for r in records}
    if len(ks) != 1:
        raise ValueError(f"records disagree on k: {sorted(ks)}")


def avg_at_k(records) -> float:
    _check(records)
    return 100.0 * float(np.mean([np.mean(r.rewards) for r in records]))


def pass_at_k(records) -> float:
    _check(records)
    return 100.0 * float(np.mean([1.0 if any(r.rewards) else 0.0 for r in records]))


@dataclass
class MetricsReport:
    settings: dict  # setting -> {"avg": .., "pass": .., "tasks": .., "k": ..}
    gaps: dict  # setting -> {"avg": ideal - noisy, "pass": ...}
    interaction: dict = field(default_factory=dict)  # setting -> counters
    comparison: dict = field(default_factory=dict)  # setting -> trained minus baseline

    def to_dict(self) -> dict:
        return {"settings": self.settings, "gaps": self.gaps, "interaction": self.interaction,
                "comparison": self.comparison}

    def to_text(self) -> str:
        rows = [("setting", "Avg@k", "Pass@k", "gap Avg", "gap Pass")]
        for s, m in self.settings.items():
            g = self.gaps.get(s)
            rows.append((s, f"{m['avg']:.2f}", f"{m['pass']:.2f}",
                         "" if g is None else f"{g['avg']:+.2f}", "" if g is None else f"{g['pass']:+.2f}"))
        out = _table(rows)
        if self.comparison:
            rows = [("setting", "dAvg@k (trained - baseline)", "dPass@k")]
            rows += [(s, f"{c['avg']:+.2f}", f"{c['pass']:+.2f}") for s, c in self.comparison.items()]
            out += "\n\n" + _table(rows)
        if self.interaction:
            rows = [("setting", "tool calls", "AskUser", "episode length")]
            rows += [(s, f"{c['tool_calls']:.2f}", f"{c['ask_user']:.2f}", f"{c['length']:.2f}")
                     for s, c in self.interaction.items()]
            out += "\n\n" + _table(rows)
            out += "\n(no token counts: episode length and AskUser counts stand in for output/reasoning tokens)"
        return out + "\n"


def _table(rows) -> str:
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _summary(records) -> dict:
    return {"avg": avg_at_k(records), "pass": pass_at_k(records), "tasks": len(records),
            "k": len(records[0].rewards)}


def robustness_report(ideal, noisy: dict, baseline: "MetricsReport | None" = None) -> MetricsReport:
    """Per-setting metrics with ideal-minus-noisy gaps per category and pooled."""
    ideal_ids = sorted(r.task_id for r in ideal)
    settings = {"ideal": _summary(ideal)}
    gaps = {}
    pooled = []
    for name, recs in noisy.items():
        if sorted(r.task_id for r in recs) != ideal_ids:
            raise ValueError(f"setting {name!r} was evaluated on a different task set")
        settings[name] = _summary(recs)
        gaps[name] = {"avg": settings["ideal"]["avg"] - settings[name]["avg"],
                      "pass": settings["ideal"]["pass"] - settings[name]["pass"]}
        pooled += recs
    if noisy:
        settings["noisy(pooled)"] = _summary(pooled)
        gaps["noisy(pooled)"] = {"avg": settings["ideal"]["avg"] - settings["noisy(pooled)"]["avg"],
                                 "pass": settings["ideal"]["pass"] - settings["noisy(pooled)"]["pass"]}
    report = MetricsReport(settings, gaps)
    if baseline is not None:
        report.comparison = compare(report, baseline)
    return report


def compare(trained: MetricsReport, baseline: MetricsReport) -> dict:
    return {s: {"avg": m["avg"] - baseline.settings[s]["avg"], "pass": m["pass"] - baseline.settings[s]["pass"]}
            for s, m in trained.settings.items() if s in baseline.settings}


def interaction_stats(trajectories) -> dict:
    """Mean tool calls, AskUser actions and steps per episode."""
    if not trajectories:
        raise ValueError("no trajectories")
    counts = [count_actions(t) for t in trajectories]
    return {k: float(np.mean([c[k] for c in counts])) for k in ("tool_calls", "ask_user", "length")}


def binomial_ci(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval."""
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return float(centre - half), float(centre + half)
