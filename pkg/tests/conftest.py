import pytest

from noiserl.env.core import InteractionScript, Segment, TaskSpec, ToolCall, UserMessage
from noiserl.env.domain import DomainGraph, DomainSize, Effect, ToolSpec, build_domain, dependency_edges
from noiserl.env.episode import copy_db, execute_tool
from noiserl.env.tasks import sample_tasks
from noiserl.policy import FeatureSpace


def order_domain() -> DomainGraph:
    """One entity kind ("order") with find/get/update tools."""
    tools = (
        ToolSpec("get_order", "get", "order", (("order_id", "order.id"),), None, ("id", "status", "tier")),
        ToolSpec("find_order", "find", "order", (("email", "order.email"),), None, ("id",)),
        ToolSpec("update_order_status", "update", "order", (("order_id", "order.id"), ("status", "order.status")),
                 Effect("order", "status", "order_id", "status"), ("id", "status")),
    )
    return DomainGraph(tools=tools, entity_schemas=(("order", ("id", "email", "status", "tier")),),
                       dependency_edges=dependency_edges(tools), links=(),
                       status_values=(("order", ("pending", "delivered", "returned", "cancelled", "closed")),),
                       n_records=2)


def order_db() -> dict:
    return {"order": [
        {"id": "W1", "email": "ann@example.com", "status": "delivered", "tier": 2},
        {"id": "W2", "email": "bob@example.com", "status": "pending", "tier": 4},
    ]}


def order_task(domain=None, new_status="returned") -> TaskSpec:
    """find_order(ann) -> get_order(W1) -> update_order_status(W1, new_status)."""
    domain = domain or order_domain()
    db = order_db()
    chain = (
        ToolCall("find_order", (("email", "ann@example.com"),)),
        ToolCall("get_order", (("order_id", "W1"),)),
        ToolCall("update_order_status", (("order_id", "W1"), ("status", new_status))),
    )
    final = copy_db(db)
    for c in chain:
        execute_tool(final, domain, c)
    goals = (("order.email", "ann@example.com"), ("order.status", new_status))
    opening = UserMessage((
        Segment("text", text="I need to change the status of my order."),
        Segment("reveal", "order.email", "ann@example.com", "My email is ann@example.com."),
        Segment("reveal", "order.status", new_status, f"Please set it to {new_status}."),
    ))
    clar = tuple((s, UserMessage((Segment("reveal", s, v, f"It is {v}."),))) for s, v in goals)
    return TaskSpec("order-task", goals, chain, InteractionScript((opening,), clar), final,
                    frozenset(c.key() for c in chain[:2]), db, "order", "order.email", "order.status")


@pytest.fixture
def tiny():
    domain = order_domain()
    return domain, order_task(domain)


@pytest.fixture(scope="session")
def domain():
    return build_domain(DomainSize(), 0)


@pytest.fixture(scope="session")
def space(domain):
    return FeatureSpace(domain)


@pytest.fixture(scope="session")
def tasks(domain):
    return sample_tasks(domain, 40, 11)
