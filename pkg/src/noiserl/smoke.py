"""Multi-seed smoke experiment: random init vs clean-only baselines vs the noise curriculum."""

from __future__ import annotations

import json
import time
from pathlib import Path

from .config import ExperimentConfig, build_config
from .experiment import attach_eval, evaluate, make_setup, run_train
from .policy import init_params, load_checkpoint

SMOKE_CONFIG = {
    "iterations": 60,
    "tasks": {"train": 300, "eval": 100, "probe": 8},
    "rollouts": {"n": 16, "batch": 8},
    "output": {"log_trajectories": False},
}
VARIANTS = ("grpo", "gspo", "hybrid-curriculum")


def smoke_config(seed: int, variant: str, **overrides) -> ExperimentConfig:
    data = json.loads(json.dumps(SMOKE_CONFIG))
    data.update(seed=seed, variant=variant, name="smoke")
    for k, v in overrides.items():
        if isinstance(v, dict):
            data.setdefault(k, {}).update(v)
        else:
            data[k] = v
    return build_config(data)


def run_smoke(seeds, out_root, variants=VARIANTS, log=print, **overrides) -> dict:
    """Train and evaluate every variant per seed; returns Avg@k summaries per seed."""
    results = {}
    for seed in seeds:
        row = {}
        base_cfg = smoke_config(seed, "gspo", **overrides)
        setup = make_setup(base_cfg)
        rnd = init_params(setup.space.dim, seed, base_cfg["optimizer"]["init_scale"])
        rep = evaluate(rnd, base_cfg, setup, settings=[None])
        row["random-init"] = {"ideal": rep.settings["ideal"]["avg"]}
        for variant in variants:
            t0 = time.time()
            cfg = smoke_config(seed, variant, **overrides)
            out = Path(out_root) / f"{variant}-s{seed}"
            run_train(cfg, out, setup=setup)
            params, _ = load_checkpoint(out / "checkpoint.json", setup.space.dim)
            rep = evaluate(params, cfg, setup)
            attach_eval(out, rep)
            row[variant] = {"ideal": rep.settings["ideal"]["avg"], "noisy": rep.settings["noisy(pooled)"]["avg"],
                            "dir": str(out)}
            log(f"seed {seed} {variant}: clean {row[variant]['ideal']:.2f} noisy {row[variant]['noisy']:.2f} "
                f"({time.time() - t0:.0f}s)")
        results[seed] = row
    return results
