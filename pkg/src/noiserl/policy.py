"""Linear softmax policy over enumerated candidate actions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .env.core import AskUser, Finish, TaskSpec, ToolCall, turn_budget
from .env.domain import DomainGraph
from .env.episode import EnvState

OBS_CLASSES = ("none", "user", "ok", "error", "silence")
ACTION_TYPES = ("call", "ask", "finish")

ARG_FEATURES = ("from_user", "frontier", "latest", "fresh", "verified", "all_trusted",
                "stale", "aside", "extra")
HIST_FEATURES = ("never", "repeat_ok", "repeat_verified", "retry_429", "retry_not_found",
                 "retry_truncated", "contradicted")
STRUCT_FEATURES = ("toward_goal", "off_path", "goal_get", "next_on_path", "entry_call")
UPDATE_FEATURES = ("goal_kind", "status_user", "status_other", "repeat_done")
FINISH_FEATURES = ("goal_write_done", "any_write", "no_write")
ASK_FEATURES = ("entry", "value")
CONTEXT_FEATURES = ("turn", "entry_revealed", "value_revealed", "corrected")


class FeatureSpace:
    """Names and layout of the feature vector for one domain."""

    def __init__(self, domain: DomainGraph):
        names = [f"type:{t}" for t in ACTION_TYPES]
        names += ["role:find", "role:get", "role:update"]
        names += [f"tool:{t.name}" for t in domain.tools]
        names += [f"arg:{f}" for f in ARG_FEATURES]
        names += [f"hist:{f}" for f in HIST_FEATURES]
        names += [f"struct:{f}" for f in STRUCT_FEATURES]
        names += [f"upd:{f}" for f in UPDATE_FEATURES]
        names += [f"fin:{f}" for f in FINISH_FEATURES]
        names += [f"ask:{f}" for f in ASK_FEATURES]
        names += [f"{t}&obs:{c}" for t in ACTION_TYPES for c in OBS_CLASSES]
        names += [f"{t}&{c}" for t in ACTION_TYPES for c in CONTEXT_FEATURES]
        self.domain = domain
        self.names = tuple(names)
        self.index = {n: i for i, n in enumerate(names)}
        self.dim = len(names)

    def __len__(self) -> int:
        return self.dim


class _StepContext:
    """Per-step quantities shared by every candidate's features."""

    def __init__(self, env: EnvState, domain: DomainGraph, task: TaskSpec):
        know = env.knowledge
        self.know = know
        self.trust = know.trust()
        self.path = domain.path_from_root(task.goal_kind)
        self.turn = min(env.turn_index / turn_budget(task.chain_length), 1.0)
        self.entry_revealed = know.revealed(task.entry_slot)
        self.value_revealed = know.revealed(task.value_slot)
        self.corrected = any(k == "correction" for entries in know.user_stated.values() for _, _, k in entries)
        latest = {}
        for ftype, vals in know.values.items():
            for v in vals:
                seen = know.last_seen[(ftype, v)]
                if seen > latest.get(ftype, (-1, None))[0]:
                    latest[ftype] = (seen, v)
        self.latest = {t: v for t, (_, v) in latest.items()}
        # deepest path kind with a trusted known id
        self.deepest = -1
        for i, kind in enumerate(self.path):
            if any((f"{kind}.id", v) not in self.trust for v in know.values.get(f"{kind}.id", ())):
                self.deepest = i
        self.writes = []
        for obs in know.call_log:
            if obs.status == "ok" and not domain.tool(obs.call.tool).read_only:
                self.writes.append(obs.call)
        stated_value = know.stated(task.value_slot)
        self.goal_write_done = any(
            domain.tool(c.tool).kind == task.goal_kind and c.arg("status") == stated_value
            and all(p not in self.trust for p in know.grounding_of(c.key()))
            for c in self.writes)


def _arg_features(ctx: _StepContext, ftype: str, value) -> dict:
    know = ctx.know
    origins = know.values.get(ftype, {}).get(value, ())
    flags = ctx.trust.get((ftype, value), ())
    occs = {(o[1], o[2]) for o in origins if o[0] == "tool" and not o[4]}
    return {
        "from_user": know.stated(ftype) == value,
        "frontier": any(o[0] == "tool" and o[1] == know.latest_ok_key and not o[4] for o in origins),
        "latest": ctx.latest.get(ftype) == value,
        "fresh": (ftype, value) in know.fresh,
        "verified": len(occs) >= 2 and not flags,
        "stale": "stale" in flags,
        "aside": "aside" in flags,
        "extra": "extra" in flags,
    }


def featurize(space: FeatureSpace, env: EnvState, candidate, task: TaskSpec,
              ctx: _StepContext | None = None) -> np.ndarray:
    """Feature vector in [0, 1]^dim for ``candidate`` given the episode so far."""
    domain = space.domain
    ctx = ctx or _StepContext(env, domain, task)
    know = ctx.know
    x = np.zeros(space.dim)
    ix = space.index

    def put(name, value=1.0):
        x[ix[name]] = float(value)

    if isinstance(candidate, ToolCall):
        atype = "call"
        tool = domain.tool(candidate.tool)
        put(f"role:{tool.role}")
        put(f"tool:{tool.name}")
        args = [(know.slot_types[(tool.name, s)], v) for s, v in candidate.grounding]
        feats = [_arg_features(ctx, t, v) for t, v in args]
        for name in ("from_user", "frontier", "latest", "fresh", "verified"):
            put(f"arg:{name}", sum(f[name] for f in feats) / len(feats))
        for name in ("stale", "aside", "extra"):
            put(f"arg:{name}", any(f[name] for f in feats))
        put("arg:all_trusted", all(not (f["stale"] or f["aside"] or f["extra"]) for f in feats))

        key = candidate.key()
        attempts = know.calls.get(key, ())
        last = attempts[-1] if attempts else None
        put("hist:never", last is None)
        if last is not None:
            ok = [a for a in attempts if a.status == "ok" and not a.truncated]
            put("hist:repeat_ok", last.status == "ok" and not last.truncated)
            put("hist:repeat_verified", len(ok) >= 2 and len({a.fields for a in ok}) == 1)
            put("hist:retry_429", last.status == "429")
            put("hist:retry_not_found", last.status == "not_found")
            put("hist:retry_truncated", last.truncated)
            put("hist:contradicted", len({a.fields for a in ok}) > 1)

        on_path = tool.kind in ctx.path
        depth = ctx.path.index(tool.kind) if on_path else -1
        if tool.role == "update":
            put("struct:toward_goal", tool.kind == task.goal_kind)
            put("struct:off_path", tool.kind != task.goal_kind)
            put("upd:goal_kind", tool.kind == task.goal_kind)
            status = candidate.arg("status")
            stated = know.stated(task.value_slot) if tool.kind == task.goal_kind else None
            put("upd:status_user", stated is not None and status == stated)
            put("upd:status_other", stated is None or status != stated)
            put("upd:repeat_done", candidate in ctx.writes)
        else:
            put("struct:toward_goal", on_path and tool.kind != task.goal_kind)
            put("struct:off_path", not on_path)
            put("struct:goal_get", tool.kind == task.goal_kind)
            target = ctx.deepest + 1 if tool.role == "find" else ctx.deepest
            put("struct:next_on_path", on_path and depth == max(target, 0)
                and (tool.role == "find") == (ctx.deepest < 0))
            put("struct:entry_call", on_path and depth == 0
                and any(know.stated(t) == v for t, v in args))
    elif isinstance(candidate, AskUser):
        atype = "ask"
        put("ask:entry", candidate.slot == task.entry_slot)
        put("ask:value", candidate.slot == task.value_slot)
    elif isinstance(candidate, Finish):
        atype = "finish"
        put("fin:goal_write_done", ctx.goal_write_done)
        put("fin:any_write", bool(ctx.writes))
        put("fin:no_write", not ctx.writes)
    else:
        raise TypeError(f"not an action: {candidate!r}")

    put(f"type:{atype}")
    put(f"{atype}&obs:{know.last_obs_class}")
    put(f"{atype}&turn", ctx.turn)
    put(f"{atype}&entry_revealed", ctx.entry_revealed)
    put(f"{atype}&value_revealed", ctx.value_revealed)
    put(f"{atype}&corrected", ctx.corrected)
    return x


def featurize_candidates(space: FeatureSpace, env: EnvState, candidates, task: TaskSpec) -> np.ndarray:
    ctx = _StepContext(env, space.domain, task)
    return np.stack([featurize(space, env, c, task, ctx) for c in candidates])


# -- parameters and the softmax --------------------------------------------

@dataclass(frozen=True)
class PolicyParams:
    weights: np.ndarray
    version: int = 0

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


def init_params(dim: int, seed: int, scale: float = 0.01) -> PolicyParams:
    rng = np.random.default_rng(seed)
    return PolicyParams(rng.normal(0.0, scale, dim), 0)


def action_logprobs(params: PolicyParams, feats: np.ndarray) -> np.ndarray:
    """Log-softmax of the linear scores of each candidate row."""
    if feats.shape[0] < 1:
        raise ValueError("need at least one candidate")
    return kernels.log_softmax_scores(feats, params.weights)


def sample_action(logprobs: np.ndarray, temperature: float, rng: np.random.Generator) -> tuple[int, float]:
    """Index of the chosen action and its temperature-1 log-probability."""
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if temperature == 0:
        idx = int(np.argmax(logprobs))  # first maximum on ties
    else:
        z = logprobs / temperature
        p = np.exp(z - z.max())
        p /= p.sum()
        idx = int(rng.choice(len(p), p=p))
    return idx, float(logprobs[idx])


def logprob_gradient(params: PolicyParams, feats: np.ndarray, chosen: int) -> np.ndarray:
    """d log pi(chosen) / d weights = phi_chosen - E_pi[phi]."""
    _, grad = kernels.segment_replay(feats, np.array([0, feats.shape[0]]), np.array([chosen]), params.weights)
    return grad[0]


# -- optimizer ---------------------------------------------------------------

class NonFiniteError(FloatingPointError):
    pass


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 5e-2
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    clip_norm: float = 1.0
    weight_decay: float = 0.0

    @classmethod
    def zeros(cls, dim: int, **hyper) -> "AdamState":
        return cls(np.zeros(dim), np.zeros(dim), **hyper)


def clip_gradient(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if max_norm > 0 and norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def adam_update(state: AdamState, params: PolicyParams, grad: np.ndarray) -> tuple[AdamState, PolicyParams]:
    """One bias-corrected Adam ascent step on the objective whose gradient is ``grad``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.weights.shape or state.m.shape != grad.shape:
        raise ValueError(f"shape mismatch: grad {grad.shape}, weights {params.weights.shape}, moments {state.m.shape}")
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise NonFiniteError(f"non-finite gradient entries at indices {bad[:10].tolist()}; update skipped")
    g = clip_gradient(grad, state.clip_norm)
    t = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * g
    v = state.beta2 * state.v + (1 - state.beta2) * g * g
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    w = params.weights + state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if state.weight_decay:
        w = w - state.lr * state.weight_decay * params.weights
    new_state = AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps, state.clip_norm, state.weight_decay)
    return new_state, PolicyParams(w, params.version + 1)


# -- checkpoints -------------------------------------------------------------

CHECKPOINT_VERSION = 1


def checkpoint_dict(params: PolicyParams, feature_names=None, extra: dict | None = None) -> dict:
    doc = {"format": "noiserl-policy", "format_version": CHECKPOINT_VERSION, "dim": params.dim,
           "version": params.version, "weights": [float(w) for w in params.weights]}
    if feature_names is not None:
        doc["feature_names"] = list(feature_names)
    if extra:
        doc.update(extra)
    return doc


def save_checkpoint(path, params: PolicyParams, feature_names=None, extra: dict | None = None) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(params, feature_names, extra), sort_keys=True) + "\n")


def load_checkpoint(path, expected_dim: int | None = None) -> tuple[PolicyParams, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "noiserl-policy":
        raise ValueError(f"{path}: not a policy checkpoint")
    w = np.array(doc["weights"], dtype=np.float64)
    if w.shape[0] != doc["dim"]:
        raise ValueError(f"{path}: header dim {doc['dim']} but {w.shape[0]} weights")
    if expected_dim is not None and doc["dim"] != expected_dim:
        raise ValueError(f"{path}: checkpoint dim {doc['dim']} does not match feature dim {expected_dim}")
    return PolicyParams(w, int(doc["version"])), doc
