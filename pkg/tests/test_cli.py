import json
import re

import pytest
import yaml

from noiserl import experiment
from noiserl.cli import main
from noiserl.config import DEFAULTS, ConfigError, build_config, load_config
from noiserl.env import fixtures
from noiserl.env.domain import DomainSize, build_domain
from noiserl.env.noise import NoiseSpec
from noiserl.env.tasks import sample_tasks
from noiserl.experiment import (
    RunAborted, dynamics_series, evaluate, load_run, make_setup, run_eval, run_inject, run_report, run_train,
)
from noiserl.policy import init_params, load_checkpoint, save_checkpoint
from noiserl.rollout import ReferencePolicy

TINY = {
    "seed": 3, "iterations": 2,
    "tasks": {"train": 12, "eval": 6, "probe": 4},
    "rollouts": {"n": 4, "batch": 2},
    "scheduler": {"window": 1, "probe_rollouts": 1},
    "eval": {"k": 2, "categories": ["tool.failure", "user.ambiguous"]},
}


def tiny_config(**over):
    data = json.loads(json.dumps(TINY))
    data.update(over)
    return build_config(data)


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


# -- load_config --------------------------------------------------------------------

def test_minimal_config_defaulted(tmp_path):
    cfg = load_config(write_yaml(tmp_path / "c.yaml", {"seed": 4, "domain": {"n_kinds": 3}}))
    assert cfg.seed == 4 and cfg["domain"]["n_kinds"] == 3
    assert cfg["rollouts"] == DEFAULTS["rollouts"] and cfg["scheduler"]["theta"] == 0.05
    assert cfg.objective.clip_hi == 0.28


def test_rho_max_cap_rejected(tmp_path):
    with pytest.raises(ConfigError, match="0.5"):
        load_config(write_yaml(tmp_path / "c.yaml", {"scheduler": {"rho_max": 0.7}}))


def test_misspelled_key_named(tmp_path):
    with pytest.raises(ConfigError, match="rollouts.nn"):
        load_config(write_yaml(tmp_path / "c.yaml", {"rollouts": {"nn": 3}}))


def test_yaml_error_located(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("seed: [1,\n")
    with pytest.raises(ConfigError, match="bad.yaml"):
        load_config(p)


def test_grpo_preset_and_override():
    assert build_config({"variant": "grpo"}).objective.ratio_mode == "per-step"
    assert build_config({"variant": "grpo", "objective": {"clip_hi": 0.3}}).objective.clip_hi == 0.3


def test_output_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv("NOISERL_OUTPUT_ROOT", str(tmp_path))
    assert build_config({"name": "x"}).output_dir() == tmp_path / "runs/x-hybrid-curriculum-s0"


# -- run_train ----------------------------------------------------------------------------

def test_grpo_iteration_has_no_noisy_trajectories(tmp_path):
    m = run_train(tiny_config(variant="grpo", iterations=1), tmp_path / "g")
    assert m["status"] == "complete" and m["last_completed_iteration"] == 0
    lines = (tmp_path / "g" / "trajectories.jsonl").read_text().splitlines()
    assert len(lines) == 8 and all(json.loads(l)["noise_tag"] == "clean" for l in lines)


def test_train_is_deterministic(tmp_path):
    cfg = tiny_config()
    run_train(cfg, tmp_path / "a")
    run_train(cfg, tmp_path / "b")
    for name in ("trajectories.jsonl", "checkpoint.json", "scheduler.jsonl", "diagnostics.jsonl", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_abort_leaves_inspectable_manifest(tmp_path, monkeypatch):
    calls = []
    real = experiment.update_policy

    def flaky(*a, **k):
        calls.append(1)
        if len(calls) == 2:
            raise FloatingPointError("boom")
        return real(*a, **k)

    monkeypatch.setattr(experiment, "update_policy", flaky)
    with pytest.raises(RunAborted):
        run_train(tiny_config(iterations=3), tmp_path / "r")
    m = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert m["status"] == "failed" and m["last_completed_iteration"] == 0 and m["failed_iteration"] == 1
    assert (tmp_path / "r" / "checkpoint.json").exists()


# -- evaluation ---------------------------------------------------------------------------------

def test_oracle_policy_scores_full_marks():
    cfg = tiny_config()
    rep = evaluate(ReferencePolicy(), cfg, make_setup(cfg), settings=[None])
    assert rep.settings["ideal"]["avg"] == 100.0


def test_random_init_below_oracle_under_noise():
    cfg = tiny_config()
    setup = make_setup(cfg)
    spec = [NoiseSpec("tool", "failure", 3)]
    rnd = evaluate(init_params(setup.space.dim, 0), cfg, setup, settings=[None] + spec)
    orc = evaluate(ReferencePolicy(), cfg, setup, settings=[None] + spec)
    assert rnd.settings["tool.failure@3"]["avg"] < orc.settings["tool.failure@3"]["avg"]


def test_k_one_avg_equals_pass():
    cfg = tiny_config()
    setup = make_setup(cfg)
    rep = evaluate(init_params(setup.space.dim, 1, 1.0), cfg, setup, settings=[None], k=1)
    assert rep.settings["ideal"]["avg"] == rep.settings["ideal"]["pass"]


def test_checkpoint_dim_mismatch(tmp_path):
    save_checkpoint(tmp_path / "c.json", init_params(5, 0))
    with pytest.raises(ValueError, match="does not match"):
        run_eval(tmp_path / "c.json", tiny_config())


# -- inject ---------------------------------------------------------------------------------------

@pytest.fixture
def fixture_tasks():
    d = build_domain(DomainSize(), 0)
    return d, sample_tasks(d, 3, 5)


def test_inject_level_zero_empty_diff(fixture_tasks):
    d, ts = fixture_tasks
    for cat in ("user.redundant", "tool.misleading"):
        res = run_inject(d, ts, NoiseSpec.from_name(cat, 0), 0)
        assert all(r["diff"] == [] and r["solvable"] for r in res)


def test_inject_ambiguous_one_withheld_solvable(fixture_tasks):
    d, ts = fixture_tasks
    for r in run_inject(d, ts, NoiseSpec("user", "ambiguous", 1), 0):
        added = [l for l in r["diff"] if l.startswith("+") and '"withheld"' in l]
        assert len(added) == 1 and r["solvable"]


def test_inject_hostile_unsolvable(fixture_tasks):
    d, ts = fixture_tasks
    for r in run_inject(d, ts, NoiseSpec("tool", "failure", 1), 0, hostile=True):
        assert not r["solvable"] and r["explored"] > 0


# -- report ---------------------------------------------------------------------------------------

def test_report_single_and_paired(tmp_path):
    base, cur = tmp_path / "base", tmp_path / "cur"
    run_train(tiny_config(variant="gspo"), base)
    run_train(tiny_config(), cur)
    report, runs = run_report([base], tmp_path / "rep1")
    assert len(report["runs"]) == 1 and set(dynamics_series(runs[0])) == {"clean success", "noisy success"}
    for d in (base, cur):
        cfg = tiny_config()
        setup = make_setup(cfg)
        params, _ = load_checkpoint(d / "checkpoint.json", setup.space.dim)
        experiment.attach_eval(d, evaluate(params, cfg, setup))
    report, _ = run_report([base, cur], tmp_path / "rep2")
    assert {c["setting"] for c in report["comparison"]} >= {"ideal", "noisy(pooled)"}
    assert re.search(r"\([+-]\d+\.\d\d\)", (tmp_path / "rep2" / "report.txt").read_text())
    run_report([base, cur], tmp_path / "rep3")
    for svg in (tmp_path / "rep2").glob("*.svg"):
        assert svg.read_bytes() == (tmp_path / "rep3" / svg.name).read_bytes()


def test_report_names_missing_artifacts(tmp_path):
    run_train(tiny_config(variant="gspo", iterations=1), tmp_path / "r")
    (tmp_path / "r" / "probes.jsonl").unlink()
    with pytest.raises(FileNotFoundError, match="probes.jsonl"):
        load_run(tmp_path / "r")


# -- CLI exit codes ---------------------------------------------------------------------------------

def test_cli_gen_domain_and_inject(tmp_path, capsys):
    fx = tmp_path / "fx.json"
    assert main(["gen-domain", "--tasks", "2", "--out", str(fx)]) == 0
    d, ts = fixtures.load(fx)
    assert len(ts) == 2
    assert main(["inject", str(fx), "--category", "user.ambiguous", "--level", "1", "--out", str(tmp_path / "inj")]) == 0
    assert (tmp_path / "inj" / "perturbed_fixture.json").exists()
    assert main(["inject", str(fx), "--category", "tool.failure", "--hostile"]) == 0
    assert "UNSOLVABLE (oracle explored" in capsys.readouterr().out


def test_cli_config_error_exit_one(tmp_path):
    assert main(["gen-domain", "--n-kinds", "0", "--out", str(tmp_path / "x.json")]) == 1
    bad = write_yaml(tmp_path / "c.yaml", {"sed": 1})
    assert main(["train", str(bad), "--out", str(tmp_path / "r")]) == 1


def test_cli_train_eval_report(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "c.yaml", TINY)
    run = tmp_path / "run"
    assert main(["train", str(cfg), "--variant", "gspo", "--out", str(run)]) == 0
    assert main(["eval", str(cfg), "--checkpoint", str(run / "checkpoint.json"), "--attach"]) == 0
    assert (run / "eval.json").exists()
    assert main(["report", str(run), "--out", str(tmp_path / "rep"), "--check"]) == 0
    wrong = write_yaml(tmp_path / "w.yaml", {**TINY, "domain": {"n_kinds": 3}})
    assert main(["eval", str(wrong), "--checkpoint", str(run / "checkpoint.json")]) == 2


def test_cli_check_failure_exit_three(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", TINY)
    run = tmp_path / "run"
    assert main(["train", str(cfg), "--variant", "gspo", "--out", str(run)]) == 0
    (run / "diagnostics.jsonl").write_text((run / "diagnostics.jsonl").read_text() + "\n")
    assert main(["report", str(run), "--out", str(tmp_path / "rep"), "--check"]) == 3
