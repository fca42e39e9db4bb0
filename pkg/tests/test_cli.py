import csv
import json
from pathlib import Path

import pytest

from caulklab.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_VERIFY, main, validate_manifest

FAST_FIT = ["--set", "fit.max_epochs=40", "--set", "fit.patience=20", "--set", "fit.restarts=1"]


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_gen_target_and_manifest(configs_dir, tmp_path):
    out = tmp_path / "t"
    assert run("gen-target", configs_dir / "target.yaml", "--out", out) == EXIT_OK
    assert (out / "target.txt").read_text().startswith("caulk-target v1")
    assert validate_manifest(out) == []
    (out / "target.txt").write_text("tampered")
    assert validate_manifest(out) == ["target.txt"]


def test_default_output_dir_uses_hash(configs_dir, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run("gen-target", configs_dir / "target.yaml") == EXIT_OK
    (made,) = list((tmp_path / "runs").iterdir())
    manifest = json.loads((made / "manifest.json").read_text())
    assert made.name == f"gen-target-{manifest['config_hash'][:12]}"


def test_config_errors_exit_2(configs_dir, tmp_path, capsys):
    assert run("gen-target", configs_dir / "target.yaml", "--set", "composition.layers=[]", "--out", tmp_path) == EXIT_CONFIG
    assert "composition.layers" in capsys.readouterr().err
    assert run("gen-target", tmp_path / "nope.yaml") == EXIT_CONFIG
    assert run("caulk", configs_dir / "caulk.yaml", "--set", "adapter.colour=red", "--out", tmp_path) == EXIT_CONFIG
    assert run("verify", configs_dir / "verify.yaml", "--set", "verify.instances=0", "--set", "verify.outside_instances=0",
               "--set", "verify.lemma_ns=[]", "--set", "verify.quadratic_triples=0", "--out", tmp_path) == EXIT_CONFIG


def test_runtime_errors_exit_3(configs_dir, tmp_path, monkeypatch):
    from caulklab import cli
    from caulklab.errors import FitError

    def diverge(*_):
        raise FitError("loss diverged")

    monkeypatch.setitem(cli.COMMANDS, "caulk", diverge)
    assert run("caulk", configs_dir / "caulk.yaml", "--out", tmp_path) == EXIT_RUNTIME
    monkeypatch.setitem(cli.COMMANDS, "caulk", lambda *_: 1 / 0)
    assert run("caulk", configs_dir / "caulk.yaml", "--out", tmp_path) == EXIT_RUNTIME


def test_caulk_outputs_and_determinism(configs_dir, tmp_path):
    args = ["caulk", configs_dir / "caulk.yaml", *FAST_FIT, "--set", "trials=2", "--set", "n_mc=500"]
    assert run(*args, "--out", tmp_path / "a") == EXIT_OK
    assert run(*args, "--out", tmp_path / "b") == EXIT_OK
    rows = read_csv(tmp_path / "a" / "results.csv")
    assert rows[0] == ["model_id", "n", "seed", "l2_estimate", "l2_stderr", "excess_estimate", "train_loss"]
    assert len(rows) == 3
    for name in ("results.csv", "model.json", "config.yaml"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "models").is_dir()


def test_pretrain_oracle(configs_dir, tmp_path):
    config = tmp_path / "pre.yaml"
    config.write_text((configs_dir / "target.yaml").read_text() + "pretrain: {mode: oracle, split: [2, 3]}\n")
    assert run("pretrain", config, "--out", tmp_path / "o") == EXIT_OK
    model = json.loads((tmp_path / "o" / "model.json").read_text())
    assert model["split"] == [2, 3] and model["provenance"] == "oracle"
    assert run("pretrain", config, "--set", "pretrain.split=[3,2]", "--out", tmp_path / "x") == EXIT_CONFIG


def test_rate_sweep_and_plot(configs_dir, tmp_path):
    out = tmp_path / "r"
    assert run("rate-sweep", configs_dir / "rate_sweep.yaml", *FAST_FIT, "--set", "trials=2", "--set", "n_mc=500",
               "--set", "n_grid=[32,64,128]", "--out", out) == EXIT_OK
    exponent = json.loads((out / "exponent.json").read_text())
    assert set(exponent) >= {"exponent", "theoretical", "spearman", "r_squared", "config_hash"}
    assert (out / "rate.svg").read_text().startswith("<?xml")
    assert len(read_csv(out / "trials.csv")) == 1 + 3 * 2
    assert run("plot", out / "rates.csv") == EXIT_OK
    assert (out / "plots" / "rates.svg").read_bytes() == (out / "rate.svg").read_bytes()
    assert run("plot", out / "rates.csv", "--kind", "depth", "--out", tmp_path / "p") == EXIT_RUNTIME


def test_plot_format_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert run("plot", bad) == EXIT_RUNTIME
    assert "unknown CSV schema" in capsys.readouterr().err
    empty = tmp_path / "empty.csv"
    empty.write_text("n,trials,mean_error,std_error\n")
    assert run("plot", empty) == EXIT_RUNTIME
    assert run("plot", tmp_path / "missing.csv") == EXIT_RUNTIME


def test_verify_pass_and_fail(configs_dir, tmp_path):
    small = ["--set", "verify.instances=2", "--set", "verify.outside_instances=2", "--set", "verify.lemma_ns=[1,10]",
             "--set", "verify.lemma_trials=2000", "--set", "verify.quadratic_triples=50", "--set", "verify.smoke_class_size=30"]
    assert run("verify", configs_dir / "verify.yaml", *small, "--out", tmp_path / "ok") == EXIT_OK
    summary = json.loads((tmp_path / "ok" / "summary.json").read_text())
    assert summary["passed"] is True
    halved = ["--set", "verify.outside_instances=0", "--set", "verify.lemma_ns=[]", "--set", "verify.quadratic_triples=0",
              "--set", "verify.smoke_class_size=30", "--set", "verify.c_alpha_scale=0.5"]
    assert run("verify", configs_dir / "verify.yaml", *halved, "--out", tmp_path / "bad") == EXIT_VERIFY
    assert list((tmp_path / "bad" / "failures").glob("failure_*.json"))


def test_gen_target_round_trip(configs_dir, tmp_path):
    import numpy as np

    from caulklab.config import load_config
    from caulklab.experiments import build_target
    from caulklab.function_spaces import deserialize_target

    assert run("gen-target", configs_dir / "target.yaml", "--out", tmp_path) == EXIT_OK
    loaded = deserialize_target((tmp_path / "target.txt").read_text())
    original = build_target(load_config(configs_dir / "target.yaml"))
    x = np.random.default_rng(0).random((100, 2))
    assert np.array_equal(loaded(x), original(x))


def test_single_cell_depth_sweep_and_plot(configs_dir, tmp_path):
    out = tmp_path / "d"
    args = ["depth-sweep", configs_dir / "depth_sweep.yaml", *FAST_FIT, "--set", "depths=[0]", "--set", "trials=1",
            "--set", "variants=[{name: wide, split: [2, 2]}]", "--set", "n_mc=200", "--set", "n=64", "--out", out]
    assert run(*args) == EXIT_OK
    rows = read_csv(out / "depth.csv")
    assert rows[0] == ["variant", "depth", "mean_error", "std_error", "is_min"] and len(rows) == 2
    assert 'class="minimum"' in (out / "depth.svg").read_text()
    assert run("plot", out / "depth.csv", "--out", tmp_path / "p1") == EXIT_OK
    assert run("plot", out / "depth.csv", "--out", tmp_path / "p2") == EXIT_OK
    assert (tmp_path / "p1" / "depth.svg").read_bytes() == (tmp_path / "p2" / "depth.svg").read_bytes()
