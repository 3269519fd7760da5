"""Training, evaluation and noise-preview runs with on-disk artifacts."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .curriculum import SchedulerState, allocate_noise, probe, schedule_step
from .env.domain import DomainSize, build_domain
from .env.noise import NoiseSpec
from .env.tasks import sample_tasks
from .metrics import EvalRecord, MetricsReport, interaction_stats, robustness_report
from .optim import grpo_update, update_policy
from .policy import AdamState, FeatureSpace, PolicyParams, checkpoint_dict, init_params, load_checkpoint
from .rollout import run_episode, run_group

# SeedSequence spawn keys for the independent random streams of a run
STREAMS = ("init", "batches", "rollouts", "probes", "eval")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """One generator per purpose, derived from the run seed by ``SeedSequence.spawn``."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


@dataclass
class Setup:
    domain: object
    space: FeatureSpace
    train_tasks: list
    eval_tasks: list
    probe_tasks: list


def make_setup(config: ExperimentConfig) -> Setup:
    d = config["domain"]
    domain = build_domain(DomainSize(d["n_kinds"], d["n_tools"], d["n_links"], d["n_records"]), config.domain_seed)
    t = config["tasks"]
    base = config.domain_seed * 1000
    return Setup(domain, FeatureSpace(domain), sample_tasks(domain, t["train"], base + 1),
                 sample_tasks(domain, t["eval"], base + 2), sample_tasks(domain, t["probe"], base + 3))


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class RunAborted(RuntimeError):
    pass


def run_train(config: ExperimentConfig, out_dir: Path | None = None, setup: Setup | None = None,
              progress=None) -> dict:
    """Train one variant; returns the run manifest (also written to ``manifest.json``)."""
    out = Path(out_dir) if out_dir is not None else config.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    setup = setup or make_setup(config)
    domain, space = setup.domain, setup.space
    streams = seed_streams(config.seed)
    opt = config["optimizer"]
    params = init_params(space.dim, int(streams["init"].integers(2**63 - 1)), opt["init_scale"])
    state = AdamState.zeros(space.dim, lr=opt["lr"], beta1=opt["beta1"], beta2=opt["beta2"], eps=opt["eps"],
                            clip_norm=opt["clip_norm"], weight_decay=opt["weight_decay"])
    sc = config["scheduler"]
    sched = SchedulerState.initial(sc["theta"], sc["step"], sc["rho_max"], sc["window"])
    objective = config.objective
    ro = config["rollouts"]
    log_traj = config["output"]["log_trajectories"]

    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n")
    manifest = {
        "config_hash": config.hash(), "code_version": __version__, "variant": config.variant,
        "seed": config.seed, "status": "running", "last_completed_iteration": -1,
        "iterations": [], "checkpoints": [], "artifacts": {}, "report": None,
    }
    files = {
        "diagnostics": out / "diagnostics.jsonl",
        "scheduler": out / "scheduler.jsonl",
        "probes": out / "probes.jsonl",
    }
    if log_traj:
        files["trajectories"] = out / "trajectories.jsonl"
    handles = {k: open(p, "w") for k, p in files.items()}
    handles["scheduler"].write(_dumps({"iteration": 0, "window": 0, **sched.to_dict()}) + "\n")
    try:
        for it in range(config["iterations"]):
            allocation = allocate_noise(sched, ro["n"]) if config.curriculum else {}
            if not config.curriculum:
                assert sum(allocation.values()) == 0
            picks = streams["batches"].choice(len(setup.train_tasks), size=ro["batch"], replace=False)
            groups = []
            for ti in picks:
                g = run_group(params, setup.train_tasks[int(ti)], domain, space, ro["n"], allocation,
                              streams["rollouts"], sched.levels, ro["max_turns"], ro["temperature"], sc["rho_max"])
                groups.append(g)
            if log_traj:
                for g in groups:
                    for tr in g.trajectories:
                        handles["trajectories"].write(_dumps({"iteration": it, **tr.to_json()}) + "\n")
            if config.variant == "grpo":
                params, state, diag = grpo_update(groups, params, state, objective)
            else:
                params, state, diag = update_policy(groups, params, state, objective)
            clean = [g.trajectories[i].reward for g in groups for i in g.clean_idx]
            noisy = [g.trajectories[i].reward for g in groups for i in g.noise_idx]
            diag = {"iteration": it, "train_clean_success": float(np.mean(clean)) if clean else None,
                    "train_noisy_success": float(np.mean(noisy)) if noisy else None,
                    "noisy_rollouts": len(noisy), "allocation": allocation, **diag}
            handles["diagnostics"].write(_dumps(diag) + "\n")
            manifest["iterations"].append({"iteration": it, "diagnostics_line": it})

            if config.curriculum and (it + 1) % sc["window"] == 0:
                probes = {c: probe(params, setup.probe_tasks, sched, c, domain, space, streams["probes"],
                                   sc["probe_rollouts"]) for c in sched.categories}
                handles["probes"].write(_dumps({"iteration": it + 1, "probes": {
                    c: {"clean": p.clean_rate, "noisy": p.noisy_rate, "delta": p.delta, "level": sched.levels[c]}
                    for c, p in probes.items()}}) + "\n")
                sched = schedule_step(sched, probes)
                handles["scheduler"].write(_dumps({"iteration": it + 1, "window": (it + 1) // sc["window"],
                                                   **sched.to_dict()}) + "\n")
            manifest["last_completed_iteration"] = it
            if progress is not None:
                progress(it, diag)
    except Exception as exc:
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["failed_iteration"] = manifest["last_completed_iteration"] + 1
        raise RunAborted(manifest["error"]) from exc
    else:
        manifest["status"] = "complete"
    finally:
        for h in handles.values():
            h.close()
        ckpt = out / "checkpoint.json"
        ckpt.write_text(_dumps(checkpoint_dict(params, space.names, {
            "scheduler": sched.to_dict(), "optimizer_step": state.step, "variant": config.variant})) + "\n")
        manifest["checkpoints"].append({"path": ckpt.name, "sha256": sha256_file(ckpt)})
        for k, p in files.items():
            manifest["artifacts"][k] = {"path": p.name, "sha256": sha256_file(p)}
        manifest["artifacts"]["config"] = {"path": "config.json", "sha256": sha256_file(out / "config.json")}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


# -- evaluation ----------------------------------------------------------------

def eval_settings(config: ExperimentConfig, include_noisy: bool = True) -> list[NoiseSpec | None]:
    settings = [None]
    if include_noisy:
        settings += [NoiseSpec.from_name(c, config["eval"]["level"]) for c in config["eval"]["categories"]]
    return settings


def evaluate(params: PolicyParams, config: ExperimentConfig, setup: Setup, settings=None,
             k: int | None = None) -> MetricsReport:
    """k seeded runs per task per setting at the eval temperature."""
    k = k or config["eval"]["k"]
    settings = eval_settings(config) if settings is None else settings
    temperature = config["eval"]["temperature"]
    records: dict[str, list] = {}
    trajs: dict[str, list] = {}
    for si, spec in enumerate(settings):
        name = "ideal" if spec is None else f"{spec.name}@{spec.level}"
        recs, ts = [], []
        for ti, task in enumerate(setup.eval_tasks):
            rewards = []
            for run in range(k):
                # run-indexed seeds: only the noise realization varies across runs at temperature 0
                rng = np.random.default_rng([config.seed, si, ti, run])
                tr = run_episode(params, task, setup.domain, setup.space, spec, None, rng, temperature)
                rewards.append(tr.reward)
                ts.append(tr)
            recs.append(EvalRecord(task.task_id, tuple(rewards), name))
        records[name] = recs
        trajs[name] = ts
    ideal = records.pop("ideal")
    report = robustness_report(ideal, records)
    report.interaction = {"ideal": interaction_stats(trajs["ideal"])}
    for name in records:
        report.interaction[name] = interaction_stats(trajs[name])
    return report


def run_eval(checkpoint, config: ExperimentConfig, setup: Setup | None = None, settings=None,
             k: int | None = None) -> MetricsReport:
    setup = setup or make_setup(config)
    if isinstance(checkpoint, PolicyParams):
        params = checkpoint
        if params.dim != setup.space.dim:
            raise ValueError(f"checkpoint dim {params.dim} does not match feature dim {setup.space.dim}")
    else:
        params, _ = load_checkpoint(checkpoint, expected_dim=setup.space.dim)
    return evaluate(params, config, setup, settings, k)


# -- noise preview ---------------------------------------------------------------

def _reference_observations(task, domain, channel=None) -> list[dict]:
    from .env.episode import EnvState, step
    from .rollout import observation_summary

    env = EnvState.initial(task, domain)
    return [observation_summary(step(env, call, domain, channel)[0]) for call in task.reference_chain]


def run_inject(domain, tasks, spec: NoiseSpec, seed: int, hostile: bool = False) -> list[dict]:
    """Perturb each task, diff it against the clean version and ask the oracle for a verdict."""
    import difflib

    from .env.fixtures import script_to_dict
    from .env.noise import hostile_realization, realize, value_pool
    from .env.oracle import oracle_solve
    from .rollout import effective_spec

    results = []
    for i, task in enumerate(tasks):
        s = effective_spec(spec, task)
        task_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        if hostile:
            real = hostile_realization(s, task_seed, task.interaction_script)
        else:
            real = realize(s, task_seed, task.interaction_script, value_pool(domain, task.initial_state))
        if s.side == "user":
            before = json.dumps(script_to_dict(task.interaction_script), indent=1, sort_keys=True)
            after = json.dumps(script_to_dict(real.script), indent=1, sort_keys=True)
        else:
            before = json.dumps(_reference_observations(task, domain), indent=1, sort_keys=True)
            after = json.dumps(_reference_observations(task, domain, real.channel()), indent=1, sort_keys=True)
        diff = list(difflib.unified_diff(before.splitlines(), after.splitlines(), "clean", "perturbed", lineterm=""))
        res = oracle_solve(task, domain, real)
        results.append({
            "task_id": task.task_id, "spec": s.to_dict(), "seed": task_seed, "hostile": hostile,
            "diff": diff, "solvable": res.success, "explored": res.explored,
            "witness": [a.key() for a in res.witness], "draw_log": real.draw_log,
            "script": script_to_dict(real.script) if real.script is not None else None,
        })
    return results


# -- reports -----------------------------------------------------------------------

def _read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def load_run(run_dir) -> dict:
    run_dir = Path(run_dir)
    mpath = run_dir / "manifest.json" if run_dir.is_dir() else run_dir
    run_dir = mpath.parent
    missing = [str(mpath)] if not mpath.exists() else []
    if missing:
        raise FileNotFoundError(f"missing artifact: {mpath}")
    manifest = json.loads(mpath.read_text())
    for entry in list(manifest["artifacts"].values()) + manifest["checkpoints"]:
        if not (run_dir / entry["path"]).exists():
            missing.append(str(run_dir / entry["path"]))
    if manifest.get("report") and not (run_dir / manifest["report"]["path"]).exists():
        missing.append(str(run_dir / manifest["report"]["path"]))
    if missing:
        raise FileNotFoundError("missing artifacts: " + ", ".join(missing))
    run = {"dir": run_dir, "manifest": manifest,
           "diagnostics": _read_jsonl(run_dir / "diagnostics.jsonl"),
           "scheduler": _read_jsonl(run_dir / "scheduler.jsonl"),
           "probes": _read_jsonl(run_dir / "probes.jsonl"), "eval": None}
    if manifest.get("report"):
        run["eval"] = json.loads((run_dir / manifest["report"]["path"]).read_text())
    return run


def verify_hashes(run: dict) -> list[str]:
    bad = []
    m = run["manifest"]
    entries = list(m["artifacts"].values()) + m["checkpoints"] + ([m["report"]] if m.get("report") else [])
    for e in entries:
        if sha256_file(run["dir"] / e["path"]) != e["sha256"]:
            bad.append(e["path"])
    return bad


def run_label(run: dict) -> str:
    return f"{run['manifest']['variant']}/s{run['manifest']['seed']}"


def dynamics_series(run: dict) -> dict:
    diags = run["diagnostics"]
    return {"clean success": [(d["iteration"], d["train_clean_success"]) for d in diags],
            "noisy success": [(d["iteration"], d["train_noisy_success"]) for d in diags]}


def scheduler_series(run: dict) -> dict:
    sched = run["scheduler"]
    out = {"noise fraction": [(s["iteration"], sum(s["fractions"].values())) for s in sched]}
    for c in sched[0]["categories"] if sched else ():
        out[f"level {c}"] = [(s["iteration"], s["levels"][c]) for s in sched]
    return out


def curriculum_shape(run: dict) -> tuple[bool, str]:
    """rho starts at 0 and every escalation follows a window whose gap was below theta."""
    sched, probes = run["scheduler"], run["probes"]
    if not sched or sum(sched[0]["fractions"].values()) != 0 or any(sched[0]["levels"].values()):
        return False, "scheduler does not start at rho = 0 / level 0"
    first = None
    for prev, cur in zip(sched, sched[1:]):
        for c in cur["categories"]:
            if cur["levels"][c] > prev["levels"][c] or cur["fractions"][c] > prev["fractions"][c]:
                pr = next((p for p in probes if p["iteration"] == cur["iteration"]), None)
                if pr is None or not pr["probes"][c]["delta"] < cur["theta"]:
                    return False, f"{c} escalated at iteration {cur['iteration']} without delta < theta"
                first = first if first is not None else cur["iteration"]
    if first is None:
        return True, "no escalation happened"
    return True, f"rho = 0 until the first window with delta < theta (iteration {first})"


def run_checks(runs: list[dict]) -> list[tuple[str, bool, str]]:
    checks = []
    for run in runs:
        label = run_label(run)
        bad = verify_hashes(run)
        checks.append((f"{label}: artifact hashes", not bad, "ok" if not bad else f"mismatch: {bad}"))
        checks.append((f"{label}: run complete", run["manifest"]["status"] == "complete", run["manifest"]["status"]))
        if run["manifest"]["variant"] == "hybrid-curriculum":
            ok, why = curriculum_shape(run)
            checks.append((f"{label}: curriculum shape", ok, why))
        else:
            noisy = sum(d["noisy_rollouts"] for d in run["diagnostics"])
            checks.append((f"{label}: clean-only baseline", noisy == 0, f"{noisy} noisy rollouts"))
    by_seed = {}
    for run in runs:
        if run["eval"] is not None:
            by_seed.setdefault(run["manifest"]["seed"], {})[run["manifest"]["variant"]] = run["eval"]
    for seed, ev in sorted(by_seed.items()):
        if "hybrid-curriculum" in ev and "gspo" in ev:
            h, b = ev["hybrid-curriculum"]["settings"], ev["gspo"]["settings"]
            if "noisy(pooled)" in h and "noisy(pooled)" in b:
                d = h["noisy(pooled)"]["avg"] - b["noisy(pooled)"]["avg"]
                checks.append((f"s{seed}: noisy Avg@k hybrid - gspo >= 5", d >= 5, f"{d:+.2f}"))
            d = h["ideal"]["avg"] - b["ideal"]["avg"]
            checks.append((f"s{seed}: clean Avg@k hybrid - gspo >= -2", d >= -2, f"{d:+.2f}"))
    return checks


def run_report(run_dirs, out_dir) -> tuple[dict, list]:
    from .plots import line_plot

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = [load_run(d) for d in run_dirs]
    report = {"runs": [], "comparison": []}
    lines = []
    for run in runs:
        label = run_label(run)
        safe = label.replace("/", "_")
        dyn = dynamics_series(run)
        (out / f"dynamics_{safe}.svg").write_text(
            line_plot(dyn, f"training dynamics {label}", "iteration", "success rate", (0.0, 1.0)))
        sch = scheduler_series(run)
        (out / f"scheduler_{safe}.svg").write_text(
            line_plot(sch, f"curriculum {label}", "iteration", "level / fraction"))
        report["runs"].append({"label": label, "dynamics": {k: [list(p) for p in v] for k, v in dyn.items()},
                               "scheduler": {k: [list(p) for p in v] for k, v in sch.items()},
                               "eval": run["eval"]})
    evaluated = [r for r in runs if r["eval"] is not None]
    if evaluated:
        settings = list(evaluated[0]["eval"]["settings"])
        header = ["run"] + settings
        rows = [header]
        base = next((r for r in evaluated if r["manifest"]["variant"] in ("gspo", "grpo")), None)
        for r in evaluated:
            row = [run_label(r)]
            for s in settings:
                v = r["eval"]["settings"].get(s, {}).get("avg")
                cell = "" if v is None else f"{v:.2f}"
                if base is not None and r is not base and v is not None and s in base["eval"]["settings"]:
                    delta = v - base["eval"]["settings"][s]["avg"]
                    cell += f" ({delta:+.2f})"
                    report["comparison"].append({"run": run_label(r), "baseline": run_label(base),
                                                 "setting": s, "avg_gap": delta})
                row.append(cell)
            rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines.append("Avg@k by run and setting (in brackets: minus the clean-only baseline)")
        for j, r in enumerate(rows):
            lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
            if j == 0:
                lines.append("  ".join("-" * w for w in widths))
    else:
        lines.append("no evaluation reports attached; dynamics plots only")
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    return report, runs


def attach_eval(run_dir, report: MetricsReport) -> None:
    """Write eval.json / eval.txt next to a run and point its manifest at them."""
    run_dir = Path(run_dir)
    (run_dir / "eval.json").write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    (run_dir / "eval.txt").write_text(report.to_text())
    mpath = run_dir / "manifest.json"
    if mpath.exists():
        manifest = json.loads(mpath.read_text())
        manifest["report"] = {"path": "eval.json", "sha256": sha256_file(run_dir / "eval.json")}
        mpath.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
