"""Actions, observations and interaction scripts exchanged with the environment."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

Database = dict  # entity kind -> list of records (field -> str | int)


# -- actions ---------------------------------------------------------------

@dataclass(frozen=True)
class ToolCall:
    tool: str
    grounding: tuple[tuple[str, object], ...]

    def key(self) -> str:
        args = ",".join(f"{k}={v}" for k, v in self.grounding)
        return f"{self.tool}({args})"

    def arg(self, slot: str):
        for k, v in self.grounding:
            if k == slot:
                return v
        raise KeyError(slot)


@dataclass(frozen=True)
class AskUser:
    slot: str

    def key(self) -> str:
        return f"ask({self.slot})"


@dataclass(frozen=True)
class Finish:
    def key(self) -> str:
        return "finish"


Action = Union[ToolCall, AskUser, Finish]


def action_from_key(key: str) -> Action:
    """Inverse of ``Action.key`` (values come back as strings unless all digits)."""
    if key == "finish":
        return Finish()
    if key.startswith("ask(") and key.endswith(")"):
        return AskUser(key[4:-1])
    name, _, rest = key.partition("(")
    pairs = []
    for part in rest[:-1].split(","):
        if part:
            k, _, v = part.partition("=")
            pairs.append((k, int(v) if v.isdigit() else v))
    return ToolCall(name, tuple(pairs))


# -- observations ----------------------------------------------------------

SEGMENT_KINDS = ("reveal", "withheld", "correction", "aside", "out_of_scope", "text")


@dataclass(frozen=True)
class Segment:
    kind: str
    slot: str | None = None  # field type, e.g. "order.status"
    value: object = None
    text: str = ""
    decoy: bool = False  # script-internal; never shown to the agent

    def visible(self) -> "Segment":
        return replace(self, decoy=False) if self.decoy else self


@dataclass(frozen=True)
class UserMessage:
    segments: tuple[Segment, ...]

    @property
    def revealed(self) -> dict:
        return {s.slot: s.value for s in self.segments if s.kind in ("reveal", "correction")}

    def visible(self) -> "UserMessage":
        return UserMessage(tuple(s.visible() for s in self.segments))


@dataclass(frozen=True)
class ToolResult:
    tool: str
    status: str  # "ok" or an error code such as "not_found" / "429"
    fields: tuple[tuple[str, object], ...] = ()
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def truncated(self) -> bool:
        return any(k == "_truncated" for k, _ in self.fields)

    def as_dict(self) -> dict:
        return dict(self.fields)


@dataclass(frozen=True)
class Silence:
    pass


Observation = Union[UserMessage, ToolResult, Silence]


@dataclass(frozen=True)
class InteractionScript:
    turns: tuple[UserMessage, ...]
    clarification_table: tuple[tuple[str, UserMessage], ...] = ()

    def clarification(self, slot: str) -> UserMessage | None:
        for s, msg in self.clarification_table:
            if s == slot:
                return msg
        return None

    def truthful_reveals(self) -> set[str]:
        slots = set()
        for msg in self.turns:
            for seg in msg.segments:
                if seg.kind in ("reveal", "correction") and not seg.decoy:
                    slots.add(seg.slot)
        for _, msg in self.clarification_table:
            slots |= {s.slot for s in msg.segments if s.kind in ("reveal", "correction") and not s.decoy}
        return slots

    def final_stated_values(self) -> dict:
        """Value the user last stated for each slot across the scripted turns."""
        out = {}
        for msg in self.turns:
            for seg in msg.segments:
                if seg.kind in ("reveal", "correction"):
                    out[seg.slot] = seg.value
        return out


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    goal_slots: tuple[tuple[str, object], ...]
    reference_chain: tuple[ToolCall, ...]
    interaction_script: InteractionScript
    target_state: Database = field(compare=False)
    required_reads: frozenset = frozenset()
    initial_state: Database = field(default=None, compare=False)
    goal_kind: str = ""
    entry_slot: str = ""
    value_slot: str = ""

    @property
    def chain_length(self) -> int:
        return len(self.reference_chain)

    @property
    def goals(self) -> dict:
        return dict(self.goal_slots)

    def with_script(self, script: InteractionScript) -> "TaskSpec":
        return replace(self, interaction_script=script)


def turn_budget(chain_length: int) -> int:
    return 3 * chain_length + 6
