"""Command line entry point: gen-domain, train, eval, inject, report.

Exit codes: 0 success, 1 config error, 2 runtime abort, 3 check failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .env import fixtures
from .env.domain import DomainSize, build_domain
from .env.noise import TAXONOMY, NoiseSpec
from .env.tasks import sample_tasks

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("noiserl")


def _gen_domain(args) -> int:
    domain = build_domain(DomainSize(args.n_kinds, args.n_tools, args.n_links, args.n_records), args.seed)
    tasks = sample_tasks(domain, args.tasks, args.task_seed if args.task_seed is not None else args.seed)
    fixtures.save(args.out, domain, tasks)
    print(f"wrote {args.out}: {len(domain.tools)} tools, {len(domain.kinds)} kinds, {len(tasks)} tasks")
    return EXIT_OK


def _load(args):
    cfg = load_config(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "variant", None) is not None:
        overrides["variant"] = args.variant
    if getattr(args, "iterations", None) is not None:
        overrides["iterations"] = args.iterations
    return cfg.with_overrides(**overrides) if overrides else cfg


def _train(args) -> int:
    from .experiment import run_train

    cfg = _load(args)
    out = Path(args.out) if args.out else cfg.output_dir()

    def progress(it, diag):
        log.info("iter %d clean=%s noisy=%s records=%s", it, diag["train_clean_success"],
                 diag["train_noisy_success"], diag.get("records"))

    manifest = run_train(cfg, out, progress=progress)
    print(f"{out}: {manifest['status']}, {manifest['last_completed_iteration'] + 1} iterations")
    return EXIT_OK


def _eval(args) -> int:
    from .experiment import attach_eval, eval_settings, run_eval

    cfg = _load(args)
    settings = eval_settings(cfg, include_noisy=not args.ideal_only)
    report = run_eval(args.checkpoint, cfg, settings=settings, k=args.k)
    print(report.to_text())
    if args.attach:
        attach_eval(Path(args.checkpoint).parent, report)
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def _inject(args) -> int:
    from .experiment import run_inject

    domain, tasks = fixtures.load(args.fixture)
    if args.task:
        tasks = [t for t in tasks if t.task_id == args.task]
        if not tasks:
            raise ConfigError(f"no task {args.task!r} in {args.fixture}")
    spec = NoiseSpec.from_name(args.category, args.level)
    results = run_inject(domain, tasks, spec, args.seed, hostile=args.hostile)
    unsolvable = 0
    for r in results:
        print(f"== {r['task_id']} {spec.name}@{r['spec']['level']} seed={r['seed']}")
        print("\n".join(r["diff"]) if r["diff"] else "(no change)")
        verdict = "solvable" if r["solvable"] else f"UNSOLVABLE (oracle explored {r['explored']} nodes)"
        print(f"verdict: {verdict}")
        unsolvable += not r["solvable"]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        perturbed = json.loads(fixtures.dumps(domain, tasks))
        for t, r in zip(perturbed["tasks"], results):
            if r["script"] is not None:
                t["interaction_script"] = r["script"]
        (out / "perturbed_fixture.json").write_text(json.dumps(perturbed, indent=1, sort_keys=True) + "\n")
        dump = [{k: r[k] for k in ("task_id", "spec", "seed", "hostile", "draw_log", "solvable", "explored", "witness")}
                for r in results]
        (out / "realizations.json").write_text(json.dumps(dump, indent=1, sort_keys=True) + "\n")
    if unsolvable and not args.hostile:
        return EXIT_CHECK
    return EXIT_OK


def _report(args) -> int:
    from .experiment import run_checks, run_report

    report, runs = run_report(args.runs, args.out)
    print(Path(args.out, "report.txt").read_text())
    if args.check:
        checks = run_checks(runs)
        for name, ok, detail in checks:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        if not all(ok for _, ok, _ in checks):
            return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="noiserl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-domain", help="build a domain and write a task fixture")
    g.add_argument("--n-kinds", type=int, default=4)
    g.add_argument("--n-tools", type=int, default=None)
    g.add_argument("--n-links", type=int, default=None)
    g.add_argument("--n-records", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tasks", type=int, default=10)
    g.add_argument("--task-seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_gen_domain)

    t = sub.add_parser("train", help="train one variant from a YAML config")
    t.add_argument("config")
    t.add_argument("--seed", type=int)
    t.add_argument("--variant", choices=("grpo", "gspo", "hybrid-curriculum"))
    t.add_argument("--iterations", type=int)
    t.add_argument("--out")
    t.set_defaults(func=_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint (Avg@k / Pass@k, ideal and noisy)")
    e.add_argument("config")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--seed", type=int)
    e.add_argument("--k", type=int)
    e.add_argument("--ideal-only", action="store_true")
    e.add_argument("--attach", action="store_true", help="store eval.json next to the checkpoint's run")
    e.add_argument("--out")
    e.set_defaults(func=_eval)

    i = sub.add_parser("inject", help="preview a noise realization on a fixture and check solvability")
    i.add_argument("fixture")
    i.add_argument("--category", required=True, choices=TAXONOMY)
    i.add_argument("--level", type=int, default=1)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--task")
    i.add_argument("--hostile", action="store_true", help="build an unfair realization (guard demo)")
    i.add_argument("--out")
    i.set_defaults(func=_inject)

    r = sub.add_parser("report", help="tables and SVG dynamics from one or more runs")
    r.add_argument("runs", nargs="+")
    r.add_argument("--out", default="report")
    r.add_argument("--check", action="store_true", help="exit 3 unless the run checks pass")
    r.set_defaults(func=_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        if args.command == "gen-domain":  # invalid size parameters
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # runtime abort; artifacts written so far stay on disk
        print(f"aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
