"""Procedural tool-use domains: entity kinds, tool APIs and their dependency graph."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KIND_POOL = (
    "account", "order", "shipment", "parcel", "carrier", "invoice",
    "ticket", "device", "plan", "booking", "payment", "store",
)
STATUS_POOL = (
    "pending", "active", "paused", "closed", "delivered", "returned",
    "cancelled", "flagged", "approved", "archived", "processing", "refunded",
)
STATUSES_PER_KIND = 5

Value = "str | int"


@dataclass(frozen=True)
class DomainSize:
    n_kinds: int = 4
    n_tools: int | None = None  # None: every tool template
    n_links: int | None = None  # None: n_kinds - 1 (a spanning tree)
    n_records: int = 8


@dataclass(frozen=True)
class Effect:
    """Write spec: set ``kind.field`` on the record keyed by ``key_slot`` to ``value_slot``."""

    kind: str
    field: str
    key_slot: str
    value_slot: str


@dataclass(frozen=True)
class ToolSpec:
    name: str
    role: str  # "find" | "get" | "update"
    kind: str
    arg_slots: tuple[tuple[str, str], ...]  # (slot name, field type "kind.field")
    effect: Effect | None
    result_schema: tuple[str, ...]

    @property
    def read_only(self) -> bool:
        return self.effect is None

    def slot_type(self, slot: str) -> str:
        for name, ftype in self.arg_slots:
            if name == slot:
                return ftype
        raise KeyError(slot)


@dataclass(frozen=True)
class DomainGraph:
    tools: tuple[ToolSpec, ...]
    entity_schemas: tuple[tuple[str, tuple[str, ...]], ...]
    dependency_edges: tuple[tuple[str, str], ...]
    links: tuple[tuple[str, str], ...]  # (parent kind, child kind)
    status_values: tuple[tuple[str, tuple[str, ...]], ...]
    n_records: int
    _tool_index: dict = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_tool_index", {t.name: t for t in self.tools})

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.entity_schemas)

    def tool(self, name: str) -> ToolSpec:
        return self._tool_index[name]

    def has_tool(self, name: str) -> bool:
        return name in self._tool_index

    def fields_of(self, kind: str) -> tuple[str, ...]:
        return dict(self.entity_schemas)[kind]

    def statuses(self, kind: str) -> tuple[str, ...]:
        return dict(self.status_values)[kind]

    def children(self, kind: str) -> tuple[str, ...]:
        return tuple(c for p, c in self.links if p == kind)

    def parent(self, kind: str) -> str | None:
        for p, c in self.links:
            if c == kind:
                return p
        return None

    def roots(self) -> tuple[str, ...]:
        return tuple(k for k in self.kinds if self.parent(k) is None)

    def path_from_root(self, kind: str) -> tuple[str, ...]:
        path = [kind]
        while (p := self.parent(path[-1])) is not None:
            path.append(p)
        return tuple(reversed(path))


def field_type(kind: str, name: str) -> str | None:
    """Type of a result field as seen by the agent, or None for untyped text."""
    if name == "id":
        return f"{kind}.id"
    if name.startswith("related_") and name.endswith("_id"):
        return f"{name[len('related_'):-3]}.id"
    if name.endswith("_id"):
        return f"{name[:-3]}.id"
    if name == "previous_status":
        return f"{kind}.status"
    if name in ("status", "email", "tier"):
        return f"{kind}.{name}"
    return None


def _tool_templates(kinds, links):
    parents = {c: p for p, c in links}
    templates = []
    for kind in kinds:
        children = [c for p, c in links if p == kind]
        # Email is lookup-only; echoing it from get_* would close a find/get cycle.
        schema = ["id", "status", "tier"] + [f"{c}_id" for c in children]
        id_slot = (f"{kind}_id", f"{kind}.id")
        templates.append(ToolSpec(
            name=f"get_{kind}", role="get", kind=kind, arg_slots=(id_slot,),
            effect=None, result_schema=tuple(schema)))
        if kind not in parents:
            templates.append(ToolSpec(
                name=f"find_{kind}", role="find", kind=kind,
                arg_slots=(("email", f"{kind}.email"),),
                effect=None, result_schema=("id",)))
        templates.append(ToolSpec(
            name=f"update_{kind}_status", role="update", kind=kind,
            arg_slots=(id_slot, ("status", f"{kind}.status")),
            effect=Effect(kind, "status", f"{kind}_id", "status"),
            result_schema=("id", "status")))
    return templates


def _result_types(tool: ToolSpec) -> set[str]:
    return {t for f in tool.result_schema if (t := field_type(tool.kind, f)) is not None}


def dependency_edges(tools) -> tuple[tuple[str, str], ...]:
    """Edge (a, b) when a result field of ``a`` grounds an argument of ``b``.

    Fields that merely echo one of ``a``'s own argument types do not count.
    """
    edges = []
    for a in tools:
        produced = _result_types(a) - {t for _, t in a.arg_slots}
        for b in tools:
            if a is not b and produced & {t for _, t in b.arg_slots}:
                edges.append((a.name, b.name))
    return tuple(edges)


def is_acyclic(names, edges) -> bool:
    indeg = {n: 0 for n in names}
    out = {n: [] for n in names}
    for a, b in edges:
        out[a].append(b)
        indeg[b] += 1
    queue = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        n = queue.pop()
        seen += 1
        for m in out[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                queue.append(m)
    return seen == len(indeg)


def build_domain(size: DomainSize, seed: int) -> DomainGraph:
    """Build a deterministic domain graph for ``size`` and ``seed``."""
    if size.n_kinds < 1 or (size.n_tools is not None and size.n_tools < 1):
        raise ValueError("domain needs at least one entity kind and one tool")
    if size.n_kinds > len(KIND_POOL):
        raise ValueError(f"at most {len(KIND_POOL)} entity kinds supported")
    if size.n_records < 1:
        raise ValueError("n_records must be >= 1")
    n_links = size.n_kinds - 1 if size.n_links is None else size.n_links
    if not 0 <= n_links <= size.n_kinds - 1:
        raise ValueError(
            f"n_links={n_links}: an acyclic single-parent link forest over "
            f"{size.n_kinds} kinds has at most {size.n_kinds - 1} links")

    rng = np.random.default_rng(seed)
    kinds = [KIND_POOL[i] for i in rng.permutation(len(KIND_POOL))[: size.n_kinds]]
    # Parents come from the previous two kinds so deep paths are common.
    candidates = [(int(rng.integers(max(0, i - 2), i)), i) for i in range(1, size.n_kinds)]
    keep = sorted(rng.permutation(len(candidates))[:n_links].tolist())
    links = tuple((kinds[candidates[j][0]], kinds[candidates[j][1]]) for j in keep)

    templates = _tool_templates(kinds, links)
    n_tools = len(templates) if size.n_tools is None else size.n_tools
    if n_tools > len(templates):
        raise ValueError(f"n_tools={n_tools} exceeds the {len(templates)} tool templates "
                         f"available for {size.n_kinds} kinds")
    tools = tuple(templates[:n_tools])

    parents = {c for _, c in links}
    schemas = []
    for kind in kinds:
        fields = ["id"] + (["email"] if kind not in parents else []) + ["status", "tier"]
        fields += [f"{c}_id" for p, c in links if p == kind]
        schemas.append((kind, tuple(fields)))
    status_values = tuple(
        (k, tuple(STATUS_POOL[i] for i in sorted(rng.choice(len(STATUS_POOL), STATUSES_PER_KIND, replace=False))))
        for k in kinds)

    edges = dependency_edges(tools)
    domain = DomainGraph(tools=tools, entity_schemas=tuple(schemas), dependency_edges=edges,
                         links=links, status_values=status_values, n_records=size.n_records)
    validate_domain(domain)
    return domain


def validate_domain(domain: DomainGraph) -> None:
    names = [t.name for t in domain.tools]
    if len(set(names)) != len(names):
        raise ValueError("tool names must be unique")
    if not is_acyclic(names, domain.dependency_edges):
        raise ValueError("dependency edges contain a cycle")
    schemas = dict(domain.entity_schemas)
    for tool in domain.tools:
        for _, ftype in tool.arg_slots:
            kind, fname = ftype.split(".")
            if kind not in schemas or fname not in schemas[kind]:
                raise ValueError(f"{tool.name}: slot type {ftype} is not an entity field")
        if tool.effect is not None:
            if tool.effect.field not in schemas.get(tool.effect.kind, ()):
                raise ValueError(f"{tool.name}: effect targets unknown field")
