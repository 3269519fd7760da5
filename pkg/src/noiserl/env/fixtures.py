"""Versioned JSON fixtures for domains and tasks."""

from __future__ import annotations

import json
from pathlib import Path

from .core import InteractionScript, Segment, TaskSpec, ToolCall, UserMessage
from .domain import DomainGraph, Effect, ToolSpec, validate_domain

SCHEMA_VERSION = 1


def domain_to_dict(domain: DomainGraph) -> dict:
    return {
        "tools": [{
            "name": t.name, "role": t.role, "kind": t.kind,
            "arg_slots": [list(a) for a in t.arg_slots],
            "effect": None if t.effect is None else {
                "kind": t.effect.kind, "field": t.effect.field,
                "key_slot": t.effect.key_slot, "value_slot": t.effect.value_slot},
            "result_schema": list(t.result_schema),
        } for t in domain.tools],
        "entity_schemas": [[k, list(f)] for k, f in domain.entity_schemas],
        "dependency_edges": [list(e) for e in domain.dependency_edges],
        "links": [list(l) for l in domain.links],
        "status_values": [[k, list(v)] for k, v in domain.status_values],
        "n_records": domain.n_records,
    }


def domain_from_dict(d: dict) -> DomainGraph:
    tools = tuple(ToolSpec(
        name=t["name"], role=t["role"], kind=t["kind"],
        arg_slots=tuple(tuple(a) for a in t["arg_slots"]),
        effect=None if t["effect"] is None else Effect(**t["effect"]),
        result_schema=tuple(t["result_schema"])) for t in d["tools"])
    domain = DomainGraph(
        tools=tools,
        entity_schemas=tuple((k, tuple(f)) for k, f in d["entity_schemas"]),
        dependency_edges=tuple(tuple(e) for e in d["dependency_edges"]),
        links=tuple(tuple(l) for l in d["links"]),
        status_values=tuple((k, tuple(v)) for k, v in d["status_values"]),
        n_records=d["n_records"])
    validate_domain(domain)
    return domain


def _msg_to(msg: UserMessage) -> list:
    return [{"kind": s.kind, "slot": s.slot, "value": s.value, "text": s.text, "decoy": s.decoy}
            for s in msg.segments]


def _msg_from(segs: list) -> UserMessage:
    return UserMessage(tuple(Segment(**s) for s in segs))


def script_to_dict(script: InteractionScript) -> dict:
    return {"turns": [_msg_to(m) for m in script.turns],
            "clarification_table": [[s, _msg_to(m)] for s, m in script.clarification_table]}


def script_from_dict(d: dict) -> InteractionScript:
    return InteractionScript(
        turns=tuple(_msg_from(m) for m in d["turns"]),
        clarification_table=tuple((s, _msg_from(m)) for s, m in d["clarification_table"]))


def task_to_dict(task: TaskSpec) -> dict:
    return {
        "task_id": task.task_id,
        "goal_slots": [list(g) for g in task.goal_slots],
        "reference_chain": [[c.tool, [list(g) for g in c.grounding]] for c in task.reference_chain],
        "interaction_script": script_to_dict(task.interaction_script),
        "initial_state": task.initial_state,
        "target_state": task.target_state,
        "required_reads": sorted(task.required_reads),
        "goal_kind": task.goal_kind,
        "entry_slot": task.entry_slot,
        "value_slot": task.value_slot,
    }


def task_from_dict(d: dict) -> TaskSpec:
    return TaskSpec(
        task_id=d["task_id"],
        goal_slots=tuple(tuple(g) for g in d["goal_slots"]),
        reference_chain=tuple(ToolCall(t, tuple(tuple(g) for g in gr)) for t, gr in d["reference_chain"]),
        interaction_script=script_from_dict(d["interaction_script"]),
        target_state=d["target_state"],
        required_reads=frozenset(d["required_reads"]),
        initial_state=d["initial_state"],
        goal_kind=d["goal_kind"], entry_slot=d["entry_slot"], value_slot=d["value_slot"])


def dumps(domain: DomainGraph, tasks) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "domain": domain_to_dict(domain),
           "tasks": [task_to_dict(t) for t in tasks]}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def loads(text: str) -> tuple[DomainGraph, list[TaskSpec]]:
    doc = json.loads(text)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported fixture schema_version {version!r} (expected {SCHEMA_VERSION})")
    return domain_from_dict(doc["domain"]), [task_from_dict(t) for t in doc["tasks"]]


def save(path, domain: DomainGraph, tasks) -> None:
    Path(path).write_text(dumps(domain, tasks))


def load(path) -> tuple[DomainGraph, list[TaskSpec]]:
    return loads(Path(path).read_text())
