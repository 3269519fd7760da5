"""Noise injection: user-side script perturbation and tool-side result perturbation."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .core import Database, InteractionScript, Segment, ToolCall, ToolResult, UserMessage
from .domain import DomainGraph

USER_CATEGORIES = ("ambiguous", "inconsistent", "redundant", "out_of_scope")
TOOL_CATEGORIES = ("failure", "incomplete", "misleading", "redundant")
# Fixed processing order for the curriculum; user side first.
TAXONOMY = tuple(f"user.{c}" for c in USER_CATEGORIES) + tuple(f"tool.{c}" for c in TOOL_CATEGORIES)

P_CAP = 0.6
OUT_OF_SCOPE_VERBS = ("refund", "transfer", "merge", "export", "cancel", "escalate")


@dataclass(frozen=True)
class NoiseParams:
    p: float  # per-call perturbation probability (tool side)
    s: float  # severity in [0, 1] (tool side)
    m: int  # anomaly count
    tier: int  # severity tier (user side)


def difficulty_params(category: str, level: int) -> NoiseParams:
    """Derived parameters for ``category`` ("failure" or "tool.failure") at ``level``."""
    if level < 0:
        raise ValueError(f"level must be >= 0, got {level}")
    side, _, name = category.rpartition(".")
    if not side:
        side = "user" if name in USER_CATEGORIES and name != "redundant" else "tool"
    if side == "tool":
        return NoiseParams(p=min(0.15 * level, P_CAP), s=min(0.25 * level, 1.0), m=level, tier=min(level, 3))
    return NoiseParams(p=0.0, s=0.0, m=level, tier=min(level, 3))


@dataclass(frozen=True)
class NoiseSpec:
    side: str
    category: str
    level: int = 1

    def __post_init__(self):
        allowed = USER_CATEGORIES if self.side == "user" else TOOL_CATEGORIES if self.side == "tool" else None
        if allowed is None:
            raise ValueError(f"side must be 'user' or 'tool', got {self.side!r}")
        if self.category not in allowed:
            raise ValueError(f"unknown {self.side} noise category {self.category!r}")
        if self.level < 0:
            raise ValueError("level must be >= 0")

    @classmethod
    def from_name(cls, name: str, level: int) -> "NoiseSpec":
        side, _, category = name.partition(".")
        return cls(side, category, level)

    @property
    def name(self) -> str:
        return f"{self.side}.{self.category}"

    @property
    def params(self) -> NoiseParams:
        return difficulty_params(self.name, self.level)

    def to_dict(self) -> dict:
        return {"side": self.side, "category": self.category, "level": self.level}


@dataclass
class NoiseRealization:
    """Everything needed to replay one noisy episode exactly.

    User-side realizations carry the perturbed ``script``; tool-side ones
    carry the channel seed, and ``draw_log`` collects each fired perturbation.
    ``retry_guard=False`` and ``force=True`` build hostile realizations.
    """

    spec: NoiseSpec
    seed: int
    draw_log: list = field(default_factory=list)
    script: InteractionScript | None = None
    retry_guard: bool = True
    force: bool = False

    def channel(self) -> "ToolNoiseChannel | None":
        if self.spec.side != "tool":
            return None
        return ToolNoiseChannel(self.spec, self.seed, self.retry_guard, self.force)

    @property
    def anomalies(self) -> int:
        return len(self.draw_log)


# -- user side -------------------------------------------------------------

def value_pool(domain: DomainGraph, db: Database) -> dict[str, list]:
    """Every type-valid value per field type, in a fixed order."""
    pool: dict[str, list] = {}
    for kind in domain.kinds:
        for f in domain.fields_of(kind):
            if f == "status":
                vals = list(domain.statuses(kind))
            elif f == "tier":
                vals = [1, 2, 3, 4, 5]
            elif f in ("id", "email"):
                vals = [r[f] for r in db[kind]]
            else:
                continue
            pool[f"{kind}.{f}"] = vals
    return pool


def _pick(rng, values):
    return values[int(rng.integers(len(values)))]


def _goal_reveals(script: InteractionScript) -> list[tuple[str, object]]:
    return [(s.slot, s.value) for s in script.turns[0].segments if s.kind == "reveal" and not s.decoy]


def _distractor_types(pool, goal_types, tier):
    goal_kinds = {t.split(".")[0] for t in goal_types}
    if tier >= 3:
        types = [t for t in pool if t in goal_types]
    elif tier == 2:
        types = [t for t in pool if t.split(".")[0] in goal_kinds and t.endswith(".id")]
    else:
        types = [t for t in pool if t.split(".")[0] not in goal_kinds]
    return types or sorted(pool)


def perturb_interaction(script: InteractionScript, spec: NoiseSpec, seed: int,
                        pool: dict[str, list] | None = None) -> tuple[InteractionScript, NoiseRealization]:
    """Perturb a clean script before the episode starts.

    ``pool`` maps field types to type-valid values (see ``value_pool``); decoys
    and distractors are drawn from it. The tier picks how close distractor
    types sit to the goal: 1 unrelated kinds, 2 ids on the goal kinds,
    3 the goal slot types themselves.
    """
    if spec.side != "user":
        raise ValueError("perturb_interaction needs a user-side NoiseSpec")
    real = NoiseRealization(spec=spec, seed=seed)
    params = spec.params
    if params.m == 0:
        real.script = script
        return script, real
    pool = pool or {}
    rng = np.random.default_rng([seed, zlib.crc32(spec.name.encode())])
    goals = _goal_reveals(script)
    goal_types = [s for s, _ in goals]
    opening = list(script.turns[0].segments)
    later = list(script.turns[1:])
    log = real.draw_log

    if spec.category in ("ambiguous", "inconsistent"):
        if params.m > len(goals):
            raise ValueError(f"{spec.category}: m={params.m} exceeds the {len(goals)} revealed goal slots")
        chosen = [goals[i] for i in rng.permutation(len(goals))[: params.m]]
        corrections = []
        for slot, true_value in chosen:
            idx = next(i for i, s in enumerate(opening) if s.kind == "reveal" and s.slot == slot and not s.decoy)
            name = slot.split(".")[1]
            if spec.category == "ambiguous":
                opening[idx] = Segment("withheld", slot, None, f"I am not sure about the {name} right now.")
                log.append({"op": "withhold", "slot": slot})
            else:
                options = [v for v in pool.get(slot, ()) if v != true_value]
                if not options:
                    raise ValueError(f"no decoy value available for {slot}")
                decoy = _pick(rng, options)
                opening[idx] = Segment("reveal", slot, decoy, f"My {name} is {decoy}.", decoy=True)
                corrections.append(UserMessage((Segment(
                    "correction", slot, true_value, f"Sorry, I got that wrong: the {name} is {true_value}."),)))
                log.append({"op": "decoy", "slot": slot, "value": decoy})
        # Correction k arrives at user turn k.
        later = corrections + later
    elif spec.category in ("redundant", "out_of_scope"):
        types = _distractor_types(pool, goal_types, params.tier)
        truth = dict(goals)
        inserts = []
        for _ in range(params.m):
            ftype = _pick(rng, types)
            options = [v for v in pool.get(ftype, ()) if truth.get(ftype) != v] or [None]
            value = _pick(rng, options)
            kind, fname = ftype.split(".")
            if spec.category == "redundant":
                seg = Segment("aside", ftype, value, f"By the way, I also have a {kind} with {fname} {value}.")
            else:
                verb = _pick(rng, OUT_OF_SCOPE_VERBS)
                seg = Segment("out_of_scope", ftype, value, f"Could you also {verb} the {kind} with {fname} {value}?")
                log.append({"op": "out_of_scope", "slot": ftype, "value": value, "capability": f"{verb}_{kind}"})
            if spec.category == "redundant":
                log.append({"op": "aside", "slot": ftype, "value": value})
            pos = int(rng.integers(len(opening) + 1))
            inserts.append((pos, seg))
        for pos, seg in inserts:
            opening.insert(min(pos, len(opening)), seg)
    new = InteractionScript(turns=(UserMessage(tuple(opening)),) + tuple(later),
                            clarification_table=script.clarification_table)
    real.script = new
    return new, real


# -- tool side -------------------------------------------------------------

def _list_field(fields):
    for i, (_, v) in enumerate(fields):
        if isinstance(v, (list, tuple)):
            return i
    return None


def _replacement(name, value, kind, domain, db, rng):
    """A different type-valid value for field ``name`` of a ``kind`` result."""
    if name == "status" or name == "previous_status":
        options = [s for s in domain.statuses(kind) if s != value]
    elif name == "tier":
        options = [t for t in range(1, 6) if t != value]
    elif name.endswith("_id"):
        other = name[len("related_"):-3] if name.startswith("related_") else name[:-3]
        options = [r["id"] for r in db.get(other, ()) if r["id"] != value]
    else:
        options = []
    return _pick(rng, options) if options else None


def perturb_tool_output(obs: ToolResult, spec: NoiseSpec, env, rng: np.random.Generator,
                        call: ToolCall | None, domain: DomainGraph,
                        force: bool = False) -> tuple[ToolResult, dict | None]:
    """With probability p apply the category transform to an ok result.

    Returns the (possibly) perturbed observation and a draw record, or None
    when nothing fired. ``env.db`` is only read.
    """
    if spec.side != "tool":
        raise ValueError("perturb_tool_output needs a tool-side NoiseSpec")
    if not obs.ok:
        return obs, None
    params = spec.params
    u = float(rng.random())
    if not force and not u < params.p:
        return obs, None
    key = call.key() if call is not None else obs.tool
    cat = spec.category
    fields = list(obs.fields)
    kind = domain.tool(obs.tool).kind

    if cat == "failure":
        return ToolResult(obs.tool, "429", (), "429 rate limited"), {"call": key, "op": "failure"}
    if cat == "incomplete":
        li = _list_field(fields)
        if li is not None:
            name, items = fields[li]
            keep = math.ceil((1 - params.s) * len(items))
            fields[li] = (name, type(items)(items[:keep]))
            rec = {"call": key, "op": "truncate", "field": name, "kept": keep}
        else:
            keep = math.ceil((1 - params.s) * len(fields))
            rec = {"call": key, "op": "truncate", "kept": keep, "dropped": [f for f, _ in fields[keep:]]}
            fields = fields[:keep]
        return ToolResult(obs.tool, "ok", tuple(fields) + (("_truncated", True),), obs.message), rec
    if cat == "misleading":
        candidates = [i for i, (f, _) in enumerate(fields) if f != "id"]
        rng.shuffle(candidates)
        for i in candidates:
            name, value = fields[i]
            new = _replacement(name, value, kind, domain, env.db, rng)
            if new is not None:
                fields[i] = (name, new)
                rec = {"call": key, "op": "mislead", "field": name, "value": new}
                return ToolResult(obs.tool, "ok", tuple(fields), obs.message), rec
        return obs, None
    # redundant: m extra pairs outside the schema
    others = [k for k in domain.kinds if k != kind]
    names = [f"related_{k}_id" for k in others] + ["previous_status"]
    extras = []
    for i in rng.permutation(len(names))[: params.m]:
        name = names[i]
        if name == "previous_status":
            value = _pick(rng, list(domain.statuses(kind)))
        else:
            value = _pick(rng, [r["id"] for r in env.db[name[len("related_"):-3]]])
        extras.append((name, value))
    rec = {"call": key, "op": "extra", "fields": [list(e) for e in extras]}
    return ToolResult(obs.tool, "ok", tuple(fields) + tuple(extras), obs.message), rec


class ToolNoiseChannel:
    """Per-episode tool noise; decisions are keyed by (seed, call, occurrence).

    Keying on the call and its occurrence count (rather than a running
    stream) makes the realization independent of the path taken, so a search
    over action sequences sees one fixed realization. After a perturbation
    the next identical call is exempt (``env.pending_noise``).
    """

    def __init__(self, spec: NoiseSpec, seed: int, retry_guard: bool = True, force: bool = False):
        self.spec = spec
        self.seed = seed
        self.retry_guard = retry_guard
        self.force = force

    def apply(self, obs: ToolResult, call: ToolCall, env, domain: DomainGraph) -> ToolResult:
        key = call.key()
        if self.retry_guard and key in env.pending_noise:
            env.pending_noise.discard(key)
            return obs
        occ = env.call_counts.get(key, 0)
        rng = np.random.default_rng([self.seed, zlib.crc32(key.encode()), occ])
        out, rec = perturb_tool_output(obs, self.spec, env, rng, call, domain, self.force)
        if rec is not None:
            rec["occ"] = occ
            env.draws.append(rec)
            if self.retry_guard:
                env.pending_noise.add(key)
        return out


def realize(spec: NoiseSpec, seed: int, script: InteractionScript, pool: dict | None = None) -> NoiseRealization:
    """Build the realization for ``spec``: perturb the script (user) or seed a channel (tool)."""
    if spec.side == "user":
        return perturb_interaction(script, spec, seed, pool)[1]
    return NoiseRealization(spec=spec, seed=seed, script=script)


def hostile_realization(spec: NoiseSpec, seed: int, script: InteractionScript) -> NoiseRealization:
    """A deliberately unfair realization used to show the solvability guard firing.

    Tool side: every read is perturbed, retries included. User side: every
    goal slot is withheld and the clarification table is emptied.
    """
    if spec.side == "tool":
        return NoiseRealization(spec=spec, seed=seed, script=script, retry_guard=False, force=True)
    segs = tuple(Segment("withheld", s.slot, None, "I can't tell you that.")
                 if s.kind in ("reveal", "correction") else s for s in script.turns[0].segments)
    bad = InteractionScript(turns=(UserMessage(segs),), clarification_table=())
    return NoiseRealization(spec=spec, seed=seed, draw_log=[{"op": "hostile"}], script=bad)
