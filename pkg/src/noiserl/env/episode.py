"""Episode dynamics: state transitions, the scripted user, and the verifier."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .core import (
    Action, AskUser, Database, Finish, InteractionScript, Observation, Silence,
    TaskSpec, ToolCall, ToolResult,
)
from .domain import DomainGraph
from .knowledge import Knowledge

GROUNDING_CAP = 8


class StepError(RuntimeError):
    pass


def find_record(db: Database, kind: str, rid) -> int | None:
    for i, rec in enumerate(db[kind]):
        if rec["id"] == rid:
            return i
    return None


def copy_db(db: Database) -> Database:
    return {k: [dict(r) for r in recs] for k, recs in db.items()}


@dataclass
class EnvState:
    db: Database
    script: InteractionScript
    knowledge: Knowledge
    turn_index: int = 0
    history: list = field(default_factory=list)
    script_cursor: int = 0
    pending_noise: set = field(default_factory=set)
    call_counts: dict = field(default_factory=dict)
    inbox: list = field(default_factory=list)
    draws: list = field(default_factory=list)  # fired tool-noise records
    terminated: bool = False
    finished: bool = False

    @classmethod
    def initial(cls, task: TaskSpec, domain: DomainGraph, script: InteractionScript | None = None):
        return cls(db=copy_db(task.initial_state),
                   script=script or task.interaction_script,
                   knowledge=Knowledge(domain))

    def clone(self) -> "EnvState":
        # Records are replaced, never mutated, so a shallow copy of each table is enough.
        return EnvState(
            db={k: list(v) for k, v in self.db.items()}, script=self.script,
            knowledge=self.knowledge.clone(), turn_index=self.turn_index,
            history=list(self.history), script_cursor=self.script_cursor,
            pending_noise=set(self.pending_noise), call_counts=dict(self.call_counts),
            inbox=list(self.inbox), draws=list(self.draws), terminated=self.terminated, finished=self.finished)

    def ok_calls(self) -> set[str]:
        return {a.key() for a, o in self.history if isinstance(o, ToolResult) and o.ok}


def execute_tool(db: Database, domain: DomainGraph, call: ToolCall) -> ToolResult:
    """Run a tool against ``db`` (mutating it for write tools)."""
    tool = domain.tool(call.tool)
    expected = [s for s, _ in tool.arg_slots]
    if [k for k, _ in call.grounding] != expected:
        raise StepError(f"{call.key()}: grounding must cover exactly {expected}")
    if tool.role == "find":
        email = call.arg("email")
        for rec in db[tool.kind]:
            if rec.get("email") == email:
                return ToolResult(tool.name, "ok", (("id", rec["id"]),))
        return ToolResult(tool.name, "not_found", message=f"no {tool.kind} with email {email}")
    rid = call.arg(f"{tool.kind}_id")
    idx = find_record(db, tool.kind, rid)
    if idx is None:
        return ToolResult(tool.name, "not_found", message=f"no {tool.kind} {rid}")
    rec = db[tool.kind][idx]
    if tool.effect is not None:
        eff = tool.effect
        rec = dict(rec)
        rec[eff.field] = call.arg(eff.value_slot)
        db[tool.kind][idx] = rec
    return ToolResult(tool.name, "ok", tuple((f, rec[f]) for f in tool.result_schema))


def user_turn(env: EnvState, script: InteractionScript | None = None) -> Observation:
    """Deliver the next scripted user message, or Silence once the script is exhausted."""
    script = script or env.script
    env.knowledge.begin_turn()
    if env.script_cursor >= len(script.turns):
        return Silence()
    msg = script.turns[env.script_cursor].visible()
    env.script_cursor += 1
    env.inbox.append((env.turn_index, msg))
    env.knowledge.observe_user(msg)
    return msg


def step(env: EnvState, action: Action, domain: DomainGraph, noise=None):
    """Apply ``action``; returns (observation, env). ``env`` is updated in place.

    ``noise`` is an optional tool-side channel with an ``apply(result, call, env, domain)``
    method, applied to ok results of read-only tools before the agent sees them.
    """
    if env.terminated:
        raise StepError("episode already terminated")
    if isinstance(action, ToolCall):
        obs = execute_tool(env.db, domain, action)
        key = action.key()
        occ = env.call_counts.get(key, 0)
        if noise is not None and obs.ok and domain.tool(action.tool).read_only:
            obs = noise.apply(obs, action, env, domain)
        env.call_counts[key] = occ + 1
        env.knowledge.observe_tool(action, obs, occ, domain)
    elif isinstance(action, AskUser):
        msg = env.script.clarification(action.slot)
        env.knowledge.asked.add(action.slot)
        if msg is None:
            obs = Silence()
            env.knowledge.observe_silence()
        else:
            obs = msg.visible()
            env.inbox.append((env.turn_index, obs))
            env.knowledge.observe_user(obs)
    elif isinstance(action, Finish):
        obs = Silence()
        env.terminated = True
        env.finished = True
    else:
        raise StepError(f"unknown action {action!r}")
    env.history.append((action, obs))
    env.turn_index += 1
    return obs, env


def verify(env: EnvState, task: TaskSpec, budget: int | None = None) -> int:
    """Binary reward: exact final state, required reads observed ok, Finish within budget."""
    if not env.finished:
        return 0
    if budget is not None and env.turn_index > budget:
        return 0
    if env.db != task.target_state:
        return 0
    if not task.required_reads <= env.ok_calls():
        return 0
    return 1


def enumerate_actions(env: EnvState, domain: DomainGraph, task: TaskSpec) -> list[Action]:
    """Candidate actions: grounded tool calls, clarification requests, Finish."""
    know = env.knowledge
    actions: list[Action] = []
    for tool in domain.tools:
        per_slot = []
        for _, ftype in tool.arg_slots:
            vals = know.of_type(ftype)
            if not vals:
                break
            per_slot.append(vals)
        else:
            slots = [s for s, _ in tool.arg_slots]
            for combo in itertools.islice(itertools.product(*per_slot), GROUNDING_CAP):
                actions.append(ToolCall(tool.name, tuple(zip(slots, combo))))
    for slot in sorted(s for s, _ in task.goal_slots):
        if not know.revealed(slot):
            actions.append(AskUser(slot))
    actions.append(Finish())
    return actions


def reset(task: TaskSpec, domain: DomainGraph, script: InteractionScript | None = None) -> EnvState:
    """Fresh episode with the opening user message already delivered."""
    env = EnvState.initial(task, domain, script)
    user_turn(env)
    return env


def act(env: EnvState, action: Action, domain: DomainGraph, noise=None) -> Observation:
    """One agent step followed by the next scripted user message, if any.

    This is the episode protocol shared by rollouts and the search oracle:
    the user speaks, the agent acts, the user speaks again, and so on.
    """
    obs, _ = step(env, action, domain, noise)
    if not env.terminated:
        user_turn(env)
    return obs
