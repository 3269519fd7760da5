"""Breadth-first search oracle over action sequences under a fixed noise realization."""

from __future__ import annotations

from dataclasses import dataclass

from .core import Action, Finish, TaskSpec, ToolCall, turn_budget
from .domain import DomainGraph
from .episode import EnvState, act, enumerate_actions, reset, verify


@dataclass
class OracleResult:
    success: bool
    witness: list[Action]
    explored: int
    anomalies: int = 0  # tool perturbations fired along the witness

    @property
    def depth(self) -> int:
        return len(self.witness)


def _useful(action: Action, env: EnvState, domain: DomainGraph, task: TaskSpec, path: set[str]) -> bool:
    """Pruning rules; each only drops actions that cannot shorten a witness."""
    if not isinstance(action, ToolCall):
        return True
    tool = domain.tool(action.tool)
    if tool.read_only:
        # Repeated reads stay: besides retrying they are the only way to wait
        # for a scripted correction once every slot has been revealed.
        return tool.kind in path
    if tool.kind != task.goal_kind:
        return False
    rid = action.arg(tool.effect.key_slot)
    value = action.arg(tool.effect.value_slot)
    current = next((r for r in env.db[tool.kind] if r["id"] == rid), None)
    if current is None or current[tool.effect.field] == value:
        return False
    target = next(r for r in task.target_state[tool.kind] if r["id"] == rid)
    return current[tool.effect.field] != target[tool.effect.field]


def _signature(env: EnvState, initial) -> tuple:
    changed = tuple((k, i, tuple(sorted(r.items())))
                    for k, recs in env.db.items() for i, r in enumerate(recs) if r is not initial[k][i])
    return (changed, frozenset(env.call_counts.items()), frozenset(env.knowledge.asked),
            frozenset(env.pending_noise))


def oracle_solve(task: TaskSpec, domain: DomainGraph, realization=None, max_depth: int | None = None,
                 budget: int | None = None) -> OracleResult:
    """Shortest action sequence reaching reward 1, or failure with the explored count.

    ``realization`` fixes the noise: its script replaces the task's script and
    its tool channel perturbs results exactly as in a rollout.
    """
    if max_depth is None:
        max_depth = turn_budget(task.chain_length)
    budget = max_depth if budget is None else budget
    script = realization.script if realization is not None and realization.script is not None else None
    channel = realization.channel() if realization is not None else None
    path = set(domain.path_from_root(task.goal_kind))

    root = reset(task, domain, script)
    initial = root.db
    root.db = {k: list(v) for k, v in initial.items()}
    level = [(root, [])]
    seen = {_signature(root, initial)}
    explored = 0
    for depth in range(max_depth):
        nxt = []
        for env, actions in level:
            explored += 1
            done = env.clone()
            act(done, Finish(), domain, channel)
            if verify(done, task, budget):
                return OracleResult(True, actions + [Finish()], explored, len(done.draws))
            if depth + 1 >= max_depth:
                continue
            for action in enumerate_actions(env, domain, task):
                if isinstance(action, Finish) or not _useful(action, env, domain, task, path):
                    continue
                child = env.clone()
                act(child, action, domain, channel)
                sig = _signature(child, initial)
                if sig in seen:
                    continue
                seen.add(sig)
                nxt.append((child, actions + [action]))
        level = nxt
        if not level:
            break
    return OracleResult(False, [], explored)


def check_solvable(task: TaskSpec, domain: DomainGraph, realization, budget: int | None = None) -> bool:
    """Whether reward 1 is reachable within ``budget`` steps under ``realization``."""
    return oracle_solve(task, domain, realization, max_depth=budget).success
