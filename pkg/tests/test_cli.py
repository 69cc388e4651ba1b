import json

import numpy as np
import pytest

from bcpnn.cli import main
from bcpnn.io import load_checkpoint, read_csv, write_idx

from conftest import blob_images


@pytest.fixture
def workspace(tmp_path):
    imgs, labels = blob_images(120, size=8, seed=0)
    timgs, tlabels = blob_images(40, size=8, seed=1)
    write_idx(tmp_path / "tr-img", tmp_path / "tr-lab", np.rint(imgs * 255), labels)
    write_idx(tmp_path / "te-img", tmp_path / "te-lab", np.rint(timgs * 255), tlabels)
    (tmp_path / "run.ini").write_text(
        """
[network]
h_hid = 3
m_hid = 4
fanin = 12

[learning]
alpha = 0.01
noise = 0.01
epochs = 2

[structural]
n_swap = 3
t_swap = 40

[data]
train_images = tr-img
train_labels = tr-lab
test_images = te-img
test_labels = te-lab

[probe]
epochs = 3

[output]
dir = out
run_id = t

[sweep]
n_hid = 8 12
m_hid = 4 5
fanin = 10
"""
    )
    return tmp_path


def _metrics_without_time(path):
    rows = read_csv(path)
    for r in rows:
        r.pop("timestamp")
    return rows


def test_train_writes_artifacts(workspace, capsys):
    assert main(["train", "--config", str(workspace / "run.ini")]) == 0
    out = workspace / "out"
    for name in ("checkpoint.bcpn", "swaps.csv", "epoch_swaps.csv", "metrics.csv", "similarity_hid.pgm"):
        assert (out / name).exists()
    st_ = load_checkpoint(out / "checkpoint.bcpn")
    assert st_.connectivity.sum(axis=0).tolist() == [12, 12, 12]
    assert len(read_csv(out / "epoch_swaps.csv")) == 2
    assert "accuracy=" in capsys.readouterr().out


def test_encode_then_train_from_cache_is_bitwise_equal(workspace):
    cfg = str(workspace / "run.ini")
    assert main(["train", "--config", cfg, "--out", str(workspace / "a")]) == 0
    assert main(["encode", "--config", cfg, "--out", str(workspace / "cache")]) == 0
    assert main(["train", "--config", cfg, "--from-cache", str(workspace / "cache"), "--out", str(workspace / "b")]) == 0
    a = (workspace / "a" / "checkpoint.bcpn").read_bytes()
    assert a == (workspace / "b" / "checkpoint.bcpn").read_bytes()
    assert _metrics_without_time(workspace / "a" / "metrics.csv") == _metrics_without_time(workspace / "b" / "metrics.csv")


def test_metrics_deterministic_and_eval_matches(workspace):
    cfg = str(workspace / "run.ini")
    main(["train", "--config", cfg, "--out", str(workspace / "a")])
    main(["train", "--config", cfg, "--out", str(workspace / "b")])
    ma = _metrics_without_time(workspace / "a" / "metrics.csv")
    assert ma == _metrics_without_time(workspace / "b" / "metrics.csv")
    ckpt = str(workspace / "a" / "checkpoint.bcpn")
    assert main(["eval", "--config", cfg, "--checkpoint", ckpt, "--out", str(workspace / "e")]) == 0
    assert _metrics_without_time(workspace / "e" / "metrics.csv") == ma


def test_output_env_override(workspace, monkeypatch):
    monkeypatch.setenv("BCPNN_OUTPUT_DIR", str(workspace / "env"))
    assert main(["train", "--config", str(workspace / "run.ini"), "--no-eval"]) == 0
    assert (workspace / "env" / "checkpoint.bcpn").exists()
    assert not (workspace / "env" / "metrics.csv").exists()


def test_curve_writes_convergence(workspace):
    assert main(["train", "--config", str(workspace / "run.ini"), "--curve", "--no-eval"]) == 0
    rows = read_csv(workspace / "out" / "convergence.csv")
    assert [int(r["iteration"]) for r in rows][:4] == [1, 2, 5, 10]
    assert all(0.0 <= float(r["validation_accuracy"]) <= 1.0 for r in rows)


def test_export_rf(workspace):
    main(["train", "--config", str(workspace / "run.ini"), "--no-eval"])
    ckpt = str(workspace / "out" / "checkpoint.bcpn")
    assert main(["export-rf", "--checkpoint", ckpt, "--out", str(workspace / "rf")]) == 0
    assert len(list((workspace / "rf").glob("mask_*.pgm"))) == 3
    assert main(["export-rf", "--checkpoint", ckpt, "--grid", "4,16,1", "--out", str(workspace / "rf2")]) == 0
    assert main(["export-rf", "--checkpoint", ckpt, "--grid", "5,5,1", "--out", str(workspace / "rf3")]) == 1
    assert main(["export-rf", "--checkpoint", ckpt, "--grid", "a,b"]) == 2


def test_sweep_writes_rows_and_skips(workspace):
    assert main(["sweep", "--config", str(workspace / "run.ini")]) == 0
    rows = read_csv(workspace / "out" / "sweep.csv")
    cells = {(int(r["n_hid"]), int(r["m_hid"])) for r in rows}
    assert cells == {(8, 4), (12, 4)}
    skipped = read_csv(workspace / "out" / "sweep_skipped.csv")
    assert {(int(r["n_hid"]), int(r["m_hid"])) for r in skipped} == {(8, 5), (12, 5)}


def test_oracle_subcommand(tmp_path, capsys):
    out = tmp_path / "oracle.json"
    assert main(["oracle", "--samples", "60", "--epochs", "5", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["samples"] == 60
    assert report["posterior_max_abs_diff"] < 1e-10


def test_usage_errors_exit_2_with_json(tmp_path, capsys):
    assert main(["bogus"]) == 2
    line = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(line)["exit"] == 2
    assert main(["train", "--config", str(tmp_path / "none.ini")]) == 2
    (tmp_path / "bad.ini").write_text("[network]\nnope = 1\n")
    assert main(["train", "--config", str(tmp_path / "bad.ini")]) == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "ConfigurationError"


def test_runtime_error_exit_1(workspace, capsys):
    (workspace / "tr-img").write_bytes(b"\x00\x00\x08\x03")
    assert main(["train", "--config", str(workspace / "run.ini")]) == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "TruncatedFileError"
