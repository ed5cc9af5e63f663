import json
import subprocess
import sys

import pytest

from checknet import analysis as an
from checknet.cli import main

SMALL = """
seed = 2
[dataset.synthetic]
n_classes = 4
dim = 8
n_train = 1200
n_test = 300
separation = 3.0
[base]
hidden = [32, 16]
epochs = 4
batch_size = 64
[checknet]
n_outputs = 24
n_sets = 6
bits = 16
n_pairs = 2
[checknet.head]
epochs = 5
batch_size = 64
[checknet.hash]
hidden = 32
epochs = 5
batch_size = 64
[campaign]
n_samples = 60
"""


@pytest.fixture()
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


def test_bounds_command_matches_oracle(tmp_path, capsys):
    assert main(["bounds", "--l", "64", "--th", "16", "--out", str(tmp_path)]) == 0
    line = capsys.readouterr().out.strip()
    assert f"printed={an.hashcheck_bound(64, 16)!r}" in line
    assert f"inclusive={an.hashcheck_bound_inclusive(64, 16)!r}" in line
    doc = json.loads((tmp_path / "bounds.json").read_text())
    assert doc["rows"][0]["printed"] == an.hashcheck_bound(64, 16) and doc["footnote"]
    manifest = json.loads((tmp_path / "bounds.manifest.json").read_text())
    assert {"config", "seed", "versions"} <= set(manifest)


def _err(capsys):
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["bounds", "--l", "8", "--th", "9", "--out", str(tmp_path)]) == 2
    assert _err(capsys)["kind"] == "config"
    assert main(["nonsense"]) == 2
    assert _err(capsys)["kind"] == "config"
    assert main(["protect", "--config", str(tmp_path / "nope.toml")]) == 2
    _err(capsys)
    assert main(["overhead", "--bundle", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    _err(capsys)


def test_runtime_error_exit_3(tmp_path, capsys):
    cfg = tmp_path / "diverge.toml"
    cfg.write_text("[dataset.synthetic]\nn_train = 200\nn_test = 50\n[base]\nlr = 1e300\nepochs = 2\n")
    assert main(["train-base", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    assert _err(capsys) == {"error": "TrainingError", "kind": "runtime", "message": "non-finite gradient"}
    bad = tmp_path / "records.jsonl"
    bad.write_text('{"sample_id": 0}\n')
    assert main(["roc", "--records", str(bad), "--bits", "16", "--n-sets", "6", "--out", str(tmp_path)]) == 2
    _err(capsys)
    assert main(["lemma-sim", "--n-outputs", "4", "--n-classes", "3", "--n-sets", "2", "--g-nodes", "9",
                 "--trials", "10", "--out", str(tmp_path)]) == 2
    _err(capsys)


def test_stagewise_commands(tmp_path, small_config, capsys):
    out = tmp_path / "run"
    common = ["--config", str(small_config), "--out", str(out)]
    for cmd in (["train-base"], ["protect"], ["campaign"], ["roc"], ["overhead"]):
        assert main(cmd + common) == 0, capsys.readouterr().err
    for name in ("base.json", "bundle.checknet.json", "bundle.checknet.pub.json", "records.jsonl",
                 "roc_random.csv", "roc_replay.csv", "roc_targeted.csv", "effective_accuracy_targeted.csv",
                 "roc_summary.json", "overhead.json"):
        assert (out / name).is_file(), name
    for stage in ("train-base", "protect", "campaign", "roc", "overhead"):
        manifest = json.loads((out / f"{stage}.manifest.json").read_text())
        assert manifest["seed"] == 2 and manifest["versions"]["numpy"]
    header, *rows = (out / "roc_random.csv").read_text().splitlines()
    assert header == "T_h,T_c,TPR,FPR" and len(rows) == 49
    assert main(["lemma-sim", "--trials", "2000"] + common) == 0
    assert (out / "lemma_sim.csv").is_file()


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("CHECKNET_OUT_DIR", str(tmp_path / "envdir"))
    assert main(["bounds", "--n-sets", "4", "--n-classes", "3", "--tc", "2"]) == 0
    assert (tmp_path / "envdir" / "bounds.json").is_file()


def test_pipeline_wire_mode_and_rerun(tmp_path, small_config):
    runs = []
    for i, mode in enumerate(("inprocess", "wire")):
        out = tmp_path / f"r{i}"
        proc = subprocess.run([sys.executable, "-m", "checknet.cli", "pipeline", "--config", str(small_config),
                               "--out", str(out), "--mode", mode], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        runs.append(out)
    for name in ("records.jsonl", "roc_summary.json", "roc_targeted.csv", "summary.json"):
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes(), name
