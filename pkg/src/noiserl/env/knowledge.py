"""Agent-side bookkeeping of every value observed during an episode.

Values are indexed by field type ("order.id", "order.status", ...) and carry
their origins, so grounding enumeration and featurization can ask where a
value came from and whether it is still trustworthy.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import ToolCall, ToolResult, UserMessage
from .domain import DomainGraph, field_type

# origin tuples
#   ("user", segment kind, slot, seq)
#   ("tool", call key, occurrence, field, extra flag, seq)


@dataclass
class CallObs:
    call: ToolCall
    occ: int
    seq: int
    status: str
    fields: tuple
    truncated: bool


class Knowledge:
    def __init__(self, domain: DomainGraph):
        self.slot_types = {(t.name, s): ft for t in domain.tools for s, ft in t.arg_slots}
        self.values: dict[str, dict[object, list]] = {}
        self.last_seen: dict[tuple, int] = {}
        self.user_stated: dict[str, list[tuple[int, object, str]]] = {}
        self.calls: dict[str, list[CallObs]] = {}
        self.call_log: list[CallObs] = []
        self.seq = 0
        self.last_obs_class = "none"  # none | user | ok | error | silence
        self.latest_ok_key: str | None = None
        self.latest_ok_seq = -1
        self.fresh: set[tuple] = set()
        self.asked: set[str] = set()
        self._trust = None

    def clone(self) -> "Knowledge":
        k = Knowledge.__new__(Knowledge)
        k.slot_types = self.slot_types
        k.values = {t: {v: list(o) for v, o in vals.items()} for t, vals in self.values.items()}
        k.last_seen = dict(self.last_seen)
        k.user_stated = {s: list(v) for s, v in self.user_stated.items()}
        k.calls = {c: list(v) for c, v in self.calls.items()}
        k.call_log = list(self.call_log)
        k.seq = self.seq
        k.last_obs_class = self.last_obs_class
        k.latest_ok_key = self.latest_ok_key
        k.latest_ok_seq = self.latest_ok_seq
        k.fresh = set(self.fresh)
        k.asked = set(self.asked)
        k._trust = self._trust
        return k

    # -- ingestion ---------------------------------------------------------

    def _add(self, ftype, value, origin):
        self.values.setdefault(ftype, {}).setdefault(value, []).append(origin)
        self.last_seen[(ftype, value)] = self.seq
        self.fresh.add((ftype, value))

    def begin_turn(self):
        self.fresh = set()

    def observe_user(self, msg: UserMessage):
        self.seq += 1
        self._trust = None
        for seg in msg.segments:
            if seg.slot is None or seg.value is None or seg.kind in ("withheld", "text"):
                continue
            if seg.kind in ("reveal", "correction"):
                self.user_stated.setdefault(seg.slot, []).append((self.seq, seg.value, seg.kind))
            self._add(seg.slot, seg.value, ("user", seg.kind, seg.slot, self.seq))
        self.last_obs_class = "user"

    def observe_silence(self):
        self.last_obs_class = "silence"

    def observe_tool(self, call: ToolCall, result: ToolResult, occ: int, domain: DomainGraph):
        self.seq += 1
        self._trust = None
        obs = CallObs(call, occ, self.seq, result.status, result.fields, result.truncated)
        self.calls.setdefault(call.key(), []).append(obs)
        self.call_log.append(obs)
        if not result.ok:
            self.last_obs_class = "error"
            return
        self.last_obs_class = "ok"
        tool = domain.tool(call.tool)
        schema = set(tool.result_schema)
        for name, value in result.fields:
            if name == "_truncated":
                continue
            ftype = field_type(tool.kind, name)
            if ftype is None or isinstance(value, (list, tuple)):
                continue
            extra = name not in schema
            self._add(ftype, value, ("tool", call.key(), occ, name, extra, self.seq))
        if tool.read_only:
            self.latest_ok_key = call.key()
            self.latest_ok_seq = self.seq

    # -- queries -----------------------------------------------------------

    def of_type(self, ftype: str) -> list:
        """Known values of ``ftype``, most recently seen first, ties by string order."""
        vals = self.values.get(ftype)
        if not vals:
            return []
        return sorted(vals, key=lambda v: (-self.last_seen[(ftype, v)], str(v)))

    def revealed(self, slot: str) -> bool:
        return slot in self.user_stated

    def stated(self, slot: str):
        entries = self.user_stated.get(slot)
        return entries[-1][1] if entries else None

    def last_attempt(self, key: str) -> CallObs | None:
        obs = self.calls.get(key)
        return obs[-1] if obs else None

    def succeeded(self, key: str) -> bool:
        return any(o.status == "ok" and not o.truncated for o in self.calls.get(key, ()))

    def trust(self) -> dict:
        """Map (ftype, value) -> set of flags for every untrusted value.

        A value is trusted when the user currently states it, or when an ok
        tool result returned it in a declared field, no later identical call
        contradicted it, and every argument of that call is trusted.
        Untrusted values are flagged "stale" (superseded, contradicted, or
        derived from a stale value), "aside" (only mentioned in side remarks)
        or "extra" (only seen in fields outside a tool's schema).
        """
        if self._trust is not None:
            return self._trust
        latest = {slot: entries[-1][1] for slot, entries in self.user_stated.items()}
        newest = {}
        for obs in self.call_log:
            if obs.status == "ok":
                for name, value in obs.fields:
                    newest[(obs.call.key(), name)] = value

        trusted = set()
        tool_origins = []
        for ftype, vals in self.values.items():
            for value, origins in vals.items():
                for o in origins:
                    if o[0] == "user":
                        if o[1] in ("reveal", "correction") and latest.get(o[2]) == value:
                            trusted.add((ftype, value))
                    elif not o[4] and newest.get((o[1], o[3]), value) == value:
                        tool_origins.append(((ftype, value), o[1]))
        changed = True
        while changed:
            changed = False
            for pair, key in tool_origins:
                if pair not in trusted and all(g in trusted for g in self.grounding_of(key)):
                    trusted.add(pair)
                    changed = True

        flags: dict[tuple, set] = {}
        for _ in range(3):
            for ftype, vals in self.values.items():
                for value, origins in vals.items():
                    pair = (ftype, value)
                    if pair in trusted:
                        continue
                    f = set()
                    for o in origins:
                        if o[0] == "user":
                            f.add("aside" if o[1] in ("aside", "out_of_scope") else "stale")
                        elif o[4]:
                            f.add("extra")
                        elif newest.get((o[1], o[3]), value) != value:
                            f.add("stale")
                        else:
                            for g in self.grounding_of(o[1]):
                                if g not in trusted:
                                    f |= flags.get(g, {"stale"})
                    flags[pair] = f or {"stale"}
        self._trust = flags
        return flags

    def grounding_of(self, key: str) -> tuple:
        """(ftype, value) pairs used as arguments by the call with this key."""
        call = self.calls[key][0].call
        return tuple((self.slot_types[(call.tool, slot)], v) for slot, v in call.grounding)
