import csv
import shutil
import subprocess

import numpy as np
import pytest
import yaml

from xdistill.cli import EXIT_NUMERIC, EXIT_OK, EXIT_THRESHOLD, EXIT_USAGE, main
from xdistill.config import ConfigError, default_config_path, load_config
from xdistill.policy import init_params, load_checkpoint, save_checkpoint

SMOKE = str(default_config_path("smoke.yaml"))


def write(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return path


# ------------------------------------------------------------------- config
def test_packaged_configs_load():
    for name in ("base.yaml", "desk.yaml", "no_eo.yaml", "smoke.yaml"):
        load_config(default_config_path(name), env={})
    desk = load_config(default_config_path("desk.yaml"), env={})
    assert desk.ppo.n_envs == 250 and desk.ppo.gamma == 0.99  # include merged
    assert desk.policy.dtype == "float32"
    assert not load_config(default_config_path("no_eo.yaml"), env={}).ablation.embodiment_observation


def test_unknown_top_level_key(tmp_path):
    p = write(tmp_path / "c.yaml", {"seed": 1, "sede": 2})
    with pytest.raises(ConfigError, match=r"c\.yaml.*sede"):
        load_config(p, env={})


def test_unknown_section_key(tmp_path):
    p = write(tmp_path / "c.yaml", {"ppo": {"learning_rate": 0.1}})
    with pytest.raises(ConfigError, match="learning_rate"):
        load_config(p, env={})


def test_include_missing_and_cycle(tmp_path):
    p = write(tmp_path / "a.yaml", {"include": "nope.yaml"})
    with pytest.raises(ConfigError, match="nope.yaml"):
        load_config(p, env={})
    write(tmp_path / "x.yaml", {"include": "y.yaml"})
    write(tmp_path / "y.yaml", {"include": "x.yaml"})
    with pytest.raises(ConfigError, match="cycle"):
        load_config(tmp_path / "x.yaml", env={})


def test_include_overrides_are_deep(tmp_path):
    write(tmp_path / "base.yaml", {"ppo": {"lr": 0.1, "epochs": 3}, "seed": 4})
    p = write(tmp_path / "top.yaml", {"include": "base.yaml", "ppo": {"lr": 0.2}})
    cfg = load_config(p, env={})
    assert (cfg.ppo.lr, cfg.ppo.epochs, cfg.seed) == (0.2, 3, 4)


def test_env_overrides(tmp_path):
    cfg = load_config(SMOKE, env={"XDISTILL_SEED": "17", "XDISTILL_OUTPUT_DIR": str(tmp_path)})
    assert cfg.seed == 17 and cfg.output_dir == tmp_path
    with pytest.raises(ConfigError, match="XDISTILL_SEED"):
        load_config(SMOKE, env={"XDISTILL_SEED": "many"})


def test_missing_registry_path(tmp_path):
    p = write(tmp_path / "c.yaml", {"registry": "no_such_dir"})
    with pytest.raises(ConfigError, match="registry"):
        load_config(p, env={})


def test_unknown_single_robot(tmp_path):
    p = write(tmp_path / "c.yaml", {"ablation": {"single_robot": "Optimus"}})
    with pytest.raises(ConfigError, match="Optimus"):
        load_config(p, env={})


# ---------------------------------------------------------------------- CLI
@pytest.fixture
def run(monkeypatch):
    monkeypatch.delenv("XDISTILL_SEED", raising=False)
    monkeypatch.delenv("XDISTILL_OUTPUT_DIR", raising=False)
    return lambda *args: main([str(a) for a in args])


def test_train_resume_distill_eval_compare(run, tmp_path, registry):
    t, d, e = tmp_path / "t", tmp_path / "d", tmp_path / "e"
    assert run("train", "--config", SMOKE, "--output", t) == EXIT_OK
    assert (t / "config.resolved.yaml").exists()
    snap = yaml.safe_load((t / "config.resolved.yaml").read_text())
    assert snap["provenance"]["registry_hash"] == registry.hash
    assert run("train", "--config", SMOKE, "--output", t, "--resume", t / "generalist.ckpt",
               "--updates", 3) == EXIT_OK
    rows = list(csv.DictReader(open(t / "train_log.csv")))
    assert [int(r["update"]) for r in rows] == [0, 1, 2, 3, 4]
    _, header = load_checkpoint(t / "generalist.ckpt")
    assert header["meta"]["updates"] == 5

    assert run("distill", "--config", SMOKE, "--ckpt", t / "generalist.ckpt", "--output", d,
               "--max-rounds", 1) == EXIT_OK
    assert (d / "round_1" / "generalist.ckpt").exists()

    assert run("eval", "--config", SMOKE, "--ckpt", d / "round_1" / "generalist.ckpt",
               "--output", e, "--latents") == EXIT_OK
    assert (e / "report.csv").read_text().startswith(
        "embodiment,E_vx,E_vy,E_w,E_h,E_p,fall_rate,n_envs,n_steps,seed,ckpt\n")
    assert (e / "latents.csv").exists()

    assert run("eval", "--config", SMOKE, "--scripted-oracle", "--output", tmp_path / "o") == EXIT_OK
    for row in csv.DictReader(open(tmp_path / "o" / "report.csv")):
        assert all(float(row[m]) == 0.0 for m in ("E_vx", "E_vy", "E_w", "E_h", "E_p"))
    assert run("compare", e / "report.csv", tmp_path / "o" / "report.csv") == EXIT_OK


def test_single_robot_training(run, tmp_path):
    assert run("train", "--config", SMOKE, "--output", tmp_path, "--single-robot",
               "T1surrogate", "--updates", 1) == EXIT_OK
    header = next(csv.reader(open(tmp_path / "train_log.csv")))
    assert [h for h in header if h.startswith("return_")] == ["return_T1surrogate"]


def test_threads_one_is_bitwise_reproducible(run, tmp_path):
    for name in ("a", "b"):
        assert run("train", "--config", SMOKE, "--output", tmp_path / name, "--threads", 1) == 0
    pa, _ = load_checkpoint(tmp_path / "a" / "generalist.ckpt")
    pb, _ = load_checkpoint(tmp_path / "b" / "generalist.ckpt")
    assert pa.digest() == pb.digest()


def test_usage_errors_exit_one(run, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("train", "--bogus")
    assert exc.value.code == EXIT_USAGE
    assert run("eval", "--config", SMOKE, "--ckpt", tmp_path / "none.ckpt") == EXIT_USAGE
    assert run("eval", "--config", SMOKE, "--output", tmp_path) == EXIT_USAGE
    bad = write(tmp_path / "bad.yaml", {"wat": 1})
    assert run("train", "--config", bad) == EXIT_USAGE
    assert "wat" in capsys.readouterr().err


def test_registry_hash_mismatch_exit_one(run, tmp_path):
    cfg = load_config(SMOKE, env={})
    save_checkpoint(tmp_path / "x.ckpt", init_params(cfg.policy), "0000")
    assert run("eval", "--config", SMOKE, "--ckpt", tmp_path / "x.ckpt") == EXIT_USAGE


def test_nan_weights_exit_two(run, tmp_path, registry):
    cfg = load_config(SMOKE, env={})
    p = init_params(cfg.policy)
    p.arrays["head.1.b"][:] = np.nan
    save_checkpoint(tmp_path / "nan.ckpt", p, registry.hash)
    assert run("eval", "--config", SMOKE, "--ckpt", tmp_path / "nan.ckpt",
               "--output", tmp_path) == EXIT_NUMERIC


def test_fall_rate_threshold_exit_three(run, tmp_path, registry):
    cfg = load_config(SMOKE, env={})
    p = init_params(cfg.policy)
    p.arrays["head.1.b"][:] = 10.0  # saturating joint targets topple every robot
    save_checkpoint(tmp_path / "fall.ckpt", p, registry.hash)
    strict = write(tmp_path / "strict.yaml", {"include": SMOKE,
                                              "evaluation": {"max_fall_rate": 0.5}})
    assert run("eval", "--config", strict, "--ckpt", tmp_path / "fall.ckpt",
               "--output", tmp_path) == EXIT_THRESHOLD
    lax = write(tmp_path / "lax.yaml", {"include": SMOKE, "evaluation": {"max_fall_rate": 1.0}})
    assert run("eval", "--config", lax, "--ckpt", tmp_path / "fall.ckpt",
               "--output", tmp_path) == EXIT_OK


@pytest.mark.skipif(shutil.which("xdistill") is None, reason="console script not installed")
def test_console_script():
    out = subprocess.run(["xdistill", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("train", "distill", "eval", "latents", "compare"):
        assert cmd in out.stdout
