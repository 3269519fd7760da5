"""Task synthesis: sample a dependency-respecting tool chain and its user script."""

from __future__ import annotations

import numpy as np

from .core import Database, InteractionScript, Segment, TaskSpec, ToolCall, UserMessage
from .domain import DomainGraph
from .episode import copy_db, execute_tool

MIN_CHAIN, MAX_CHAIN = 2, 5


def _id_prefix(kind: str) -> str:
    return kind[:3].upper()


def generate_database(domain: DomainGraph, rng: np.random.Generator) -> Database:
    db: Database = {}
    ids = {}
    for kind in domain.kinds:
        nums = rng.choice(9000, size=domain.n_records, replace=False) + 1000
        ids[kind] = [f"{_id_prefix(kind)}-{n}" for n in nums]
    for kind in domain.kinds:
        fields = domain.fields_of(kind)
        statuses = domain.statuses(kind)
        records = []
        email_nums = rng.choice(900, size=domain.n_records, replace=False) + 100
        for i, rid in enumerate(ids[kind]):
            rec = {}
            for f in fields:
                if f == "id":
                    rec[f] = rid
                elif f == "email":
                    rec[f] = f"{kind}{email_nums[i]}@example.com"
                elif f == "status":
                    rec[f] = statuses[int(rng.integers(len(statuses)))]
                elif f == "tier":
                    rec[f] = int(rng.integers(1, 6))
                elif f.endswith("_id"):
                    child = f[:-3]
                    rec[f] = ids[child][int(rng.integers(len(ids[child])))]
            records.append(rec)
        db[kind] = records
    return db


def chain_templates(domain: DomainGraph) -> list[tuple[str, str, tuple[str, ...]]]:
    """All (start mode, goal kind, kind path) chain shapes the domain supports."""
    out = []
    for goal in domain.kinds:
        if not domain.has_tool(f"update_{goal}_status"):
            continue
        path = domain.path_from_root(goal)
        root = path[0]
        gets = path[:-1]
        if not all(domain.has_tool(f"get_{k}") for k in gets):
            continue
        if domain.has_tool(f"find_{root}"):
            out.append(("find", goal, path))
        if domain.has_tool(f"get_{root}"):
            out.append(("get", goal, path))
    return out


def template_length(mode: str, path: tuple[str, ...]) -> int:
    g = len(path) - 1
    if mode == "find":
        return g + 2
    return max(g, 1) + 1


def synthesize_task(domain: DomainGraph, chain_length: int, seed: int) -> tuple[TaskSpec, Database]:
    """Sample a verifiable task whose reference chain has ``chain_length`` calls."""
    if not MIN_CHAIN <= chain_length <= MAX_CHAIN:
        raise ValueError(f"chain_length must be in [{MIN_CHAIN}, {MAX_CHAIN}], got {chain_length}")
    options = [t for t in chain_templates(domain) if template_length(t[0], t[2]) == chain_length]
    if not options:
        raise ValueError(f"domain admits no dependency-respecting chain of length {chain_length}")
    rng = np.random.default_rng(seed)
    db = generate_database(domain, rng)
    mode, goal, path = options[int(rng.integers(len(options)))]
    root = path[0]

    rec = db[root][int(rng.integers(len(db[root])))]
    chain: list[ToolCall] = []
    if mode == "find":
        entry_slot, entry_value = f"{root}.email", rec["email"]
        chain.append(ToolCall(f"find_{root}", (("email", rec["email"]),)))
    else:
        entry_slot, entry_value = f"{root}.id", rec["id"]
    # Walk down the path, reading every ancestor of the goal record.
    reads = path[:-1] if len(path) > 1 else (() if mode == "find" else path)
    for kind in reads:
        chain.append(ToolCall(f"get_{kind}", ((f"{kind}_id", rec["id"]),)))
        child = path[path.index(kind) + 1] if kind != path[-1] else None
        if child is not None:
            cid = rec[f"{child}_id"]
            rec = next(r for r in db[child] if r["id"] == cid)
    target = rec
    choices = [s for s in domain.statuses(goal) if s != target["status"]]
    new_status = choices[int(rng.integers(len(choices)))]
    chain.append(ToolCall(f"update_{goal}_status", ((f"{goal}_id", target["id"]), ("status", new_status))))

    final = copy_db(db)
    for call in chain:
        execute_tool(final, domain, call)

    value_slot = f"{goal}.status"
    goal_slots = ((entry_slot, entry_value), (value_slot, new_status))
    opening = UserMessage((
        Segment("text", text=f"I need to change the status of my {goal}."),
        Segment("reveal", entry_slot, entry_value, f"My {entry_slot.split('.')[1]} is {entry_value}."),
        Segment("reveal", value_slot, new_status, f"Please set it to {new_status}."),
    ))
    clar = tuple(
        (slot, UserMessage((Segment("reveal", slot, val, f"It is {val}."),)))
        for slot, val in goal_slots)
    script = InteractionScript(turns=(opening,), clarification_table=clar)
    required = frozenset(c.key() for c in chain if domain.tool(c.tool).read_only)
    task = TaskSpec(
        task_id=f"task-{seed}", goal_slots=goal_slots, reference_chain=tuple(chain),
        interaction_script=script, target_state=final, required_reads=required,
        initial_state=db, goal_kind=goal, entry_slot=entry_slot, value_slot=value_slot)
    return task, db


def feasible_lengths(domain: DomainGraph) -> list[int]:
    return sorted({template_length(m, p) for m, _, p in chain_templates(domain)} & set(range(MIN_CHAIN, MAX_CHAIN + 1)))


def sample_tasks(domain: DomainGraph, count: int, seed: int) -> list[TaskSpec]:
    """``count`` tasks with chain lengths drawn uniformly from the feasible part of [2, 5]."""
    lengths = feasible_lengths(domain)
    if not lengths:
        raise ValueError("domain supports no chain of length 2..5")
    ss = np.random.SeedSequence([seed, 0x7A5C])
    rng = np.random.default_rng(ss)
    tasks = []
    for i in range(count):
        length = lengths[int(rng.integers(len(lengths)))]
        task_seed = int(rng.integers(2**31))
        task, _ = synthesize_task(domain, length, task_seed)
        tasks.append(task)
    return tasks
