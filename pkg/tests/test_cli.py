import csv
import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from wrpn.analyzer import memory_footprint
from wrpn.cli import main
from wrpn.data import SPLIT_FILES, write_idx
from wrpn.engine import Mode, forward
from wrpn.model import load_checkpoint, load_descriptor, load_integer_model


@pytest.fixture(scope="module")
def idx_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("idx")
    rng = np.random.default_rng(0)
    for split, n in (("train", 24), ("test", 8)):
        images = rng.integers(0, 256, size=(n, 28, 28)).astype(np.uint8)
        labels = rng.integers(0, 10, size=n).astype(np.uint8)
        write_idx(d / SPLIT_FILES[split][0], images)
        write_idx(d / SPLIT_FILES[split][1], labels)
    return d


@pytest.fixture(scope="module")
def trained(idx_dir, tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    config = {
        "seed": 3,
        "descriptor": "tiny_cnn",
        "train_images": str(idx_dir / SPLIT_FILES["train"][0]),
        "train_labels": str(idx_dir / SPLIT_FILES["train"][1]),
        "test_images": str(idx_dir / SPLIT_FILES["test"][0]),
        "test_labels": str(idx_dir / SPLIT_FILES["test"][1]),
        "epochs": 2,
        "batch_size": 8,
        "k_w": 4,
        "k_a": 4,
        "metrics_path": "metrics.csv",
        "checkpoint_path": "model.ckpt",
    }
    (d / "train.json").write_text(json.dumps(config))
    assert main(["train", "--config", str(d / "train.json"), "--out", str(d / "stdout.csv")]) == 0
    return d


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_train_writes_metrics_and_checkpoint(trained):
    text = (trained / "metrics.csv").read_text()
    assert text.splitlines()[0] == "epoch,loss,train_acc,test_acc"
    assert len(text.splitlines()) == 3
    assert (trained / "stdout.csv").read_text() == text
    ckpt = load_checkpoint(trained / "model.ckpt")
    assert ckpt.seed == 3 and ckpt.epoch == 2


def test_train_is_deterministic(trained, tmp_path, capsys):
    code, out, _ = run(["train", "--config", str(trained / "train.json"), "--metrics", str(tmp_path / "m.csv"),
                        "--checkpoint", str(tmp_path / "c.ckpt")], capsys)
    assert code == 0
    assert out == (trained / "metrics.csv").read_text()
    assert (tmp_path / "c.ckpt").read_bytes() == (trained / "model.ckpt").read_bytes()


def test_eval_json(trained, idx_dir, capsys):
    code, out, _ = run(["eval", "--checkpoint", str(trained / "model.ckpt"), "--data", str(idx_dir)], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["samples"] == 8 and 0.0 <= report["accuracy"] <= 1.0
    code2, out2, _ = run(["eval", "--checkpoint", str(trained / "model.ckpt"), "--data", str(idx_dir)], capsys)
    assert out2 == out


def test_quantize_then_integer_eval(trained, idx_dir, tmp_path, capsys):
    out_path = tmp_path / "int.npz"
    code, _, _ = run(["quantize", "--checkpoint", str(trained / "model.ckpt"), "--kw", "4", "--ka", "4",
                      "--out", str(out_path)], capsys)
    assert code == 0
    net, params = load_integer_model(out_path)
    ckpt = load_checkpoint(trained / "model.ckpt")
    x = np.random.default_rng(1).random((3,) + net.input_shape)
    np.testing.assert_allclose(
        forward(net, params, x, Mode.INTEGER), forward(ckpt.descriptor, ckpt.params, x, Mode.FAKE_QUANT),
        rtol=1e-9, atol=1e-12,
    )
    fq = json.loads(run(["eval", "--checkpoint", str(trained / "model.ckpt"), "--data", str(idx_dir)], capsys)[1])
    it = json.loads(run(["eval", "--checkpoint", str(out_path), "--data", str(idx_dir), "--mode", "integer"],
                        capsys)[1])
    assert fq["accuracy"] == it["accuracy"]


def test_quantize_full_precision_fails(trained, tmp_path, capsys):
    code, _, err = run(["quantize", "--checkpoint", str(trained / "model.ckpt"), "--kw", "32", "--ka", "4",
                        "--out", str(tmp_path / "x.npz")], capsys)
    assert code == 1 and "integer path" in err


def test_analyze_cost_csv(capsys):
    code, out, _ = run(["analyze", "cost", "--net", "alexnet", "--widen", "2"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows[0].keys() == {"layer", "kind", "role", "fmas", "k_w", "k_a", "bit_cost"}
    assert rows[-1]["layer"] == "total"
    assert sum(int(r["fmas"]) for r in rows[:-1]) == int(rows[-1]["fmas"])


def test_analyze_footprint_training(capsys):
    code, out, _ = run(["analyze", "footprint", "--net", "resnet34", "--batch", "32", "--phase", "training"], capsys)
    assert code == 0
    total = list(csv.DictReader(io.StringIO(out)))[-1]
    assert int(total["activation_bytes"]) > int(total["weight_bytes"])
    rep = memory_footprint(load_descriptor("resnet34"), 32, "training")
    assert int(total["activation_bytes"]) == rep.activation_bytes


def test_analyze_json_and_out(tmp_path, capsys):
    out_path = tmp_path / "f.json"
    code, out, _ = run(["analyze", "footprint", "--net", "resnet34", "--phase", "inference", "--format", "json",
                        "--out", str(out_path)], capsys)
    assert code == 0 and out == ""
    report = json.loads(out_path.read_text())
    assert report["activation_bytes"] < report["weight_bytes"]


def test_analyze_sensitivity(capsys):
    code, out, _ = run(["analyze", "sensitivity", "--net", "alexnet", "--kw", "4", "--ka", "4"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["convention"] for r in rows][0] == "uniform"


def test_widen_identity(tmp_path, capsys):
    src = tmp_path / "x.json"
    src.write_text(json.dumps(load_descriptor("small_cnn").to_dict()))
    code, _, _ = run(["widen", "--net", str(src), "--m", "1", "--out", str(tmp_path / "y.json")], capsys)
    assert code == 0
    assert json.loads((tmp_path / "y.json").read_text()) == json.loads(src.read_text())


def test_widen_rational(capsys):
    code, out, _ = run(["widen", "--net", "small_cnn", "--m", "3/2"], capsys)
    assert code == 0
    assert json.loads(out)["widening"] == "3/2"


def test_grid(trained, tmp_path, capsys):
    base = json.loads((trained / "train.json").read_text())
    for k in ("seed", "k_w", "k_a", "metrics_path", "checkpoint_path"):
        base.pop(k)
    base["epochs"] = 1
    (tmp_path / "grid.json").write_text(json.dumps({"base": base, "cells": [[4, 4, 1], [32, 32, 1]], "seeds": [0]}))
    code, out, _ = run(["grid", "--config", str(tmp_path / "grid.json"), "--table", str(tmp_path / "t.csv")], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [(r["k_w"], r["k_a"], r["status"]) for r in rows] == [("4", "4", "ok"), ("32", "32", "ok")]
    assert (tmp_path / "t.csv").read_text().startswith("weights,")


@pytest.mark.parametrize(
    "argv",
    [
        ["analyze", "cost", "--net", "alexnet", "--bogus"],
        ["analyze", "nonsense", "--net", "alexnet"],
        ["widen", "--net", "alexnet", "--m", "0"],
        ["widen", "--net", "alexnet", "--m", "abc"],
        ["quantize", "--checkpoint", "x", "--kw", "40", "--ka", "4", "--out", "y"],
        [],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    code, out, err = run(argv, capsys)
    assert code == 2 and out == "" and "usage" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["widen", "--net", "missing.json", "--m", "2"],
        ["analyze", "cost", "--net", "alexnet", "--widen", "1/1000"],
        ["train", "--config", "missing.json"],
        ["eval", "--checkpoint", "missing.ckpt", "--data", "."],
    ],
)
def test_domain_errors_exit_1(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, out, err = run(argv, capsys)
    assert code == 1 and out == "" and err.startswith("wrpn ")


def test_bad_thread_env(capsys, monkeypatch):
    monkeypatch.setenv("WRPN_THREADS", "many")
    code, _, err = run(["widen", "--net", "alexnet", "--m", "1"], capsys)
    assert code == 2 and "WRPN_THREADS" in err


@pytest.mark.parametrize("sub", [[], ["train"], ["eval"], ["quantize"], ["analyze"], ["widen"], ["grid"], ["desk"]])
def test_help_touches_no_files(sub, tmp_path):
    env = dict(os.environ, WRPN_THREADS="1")
    proc = subprocess.run(
        [sys.executable, "-m", "wrpn.cli", *sub, "--help", "--config", "nope.json", "--out", "created"],
        cwd=tmp_path, env=env, capture_output=True, text=True,
    )
    assert proc.returncode == 0 and "usage" in proc.stdout
    assert list(tmp_path.iterdir()) == []
