import json

import numpy as np
import pytest

from wrpn.data import Dataset
from wrpn.engine import Mode, backward, forward
from wrpn.errors import ConfigurationError, TrainingDivergedError
from wrpn.model import init_parameters, load_checkpoint
from wrpn.tensor import softmax_cross_entropy, softmax_cross_entropy_backward
from wrpn.trainer import (
    TrainConfig,
    evaluate,
    grid_csv,
    grid_table_csv,
    metrics_csv,
    run_grid,
    train,
)


@pytest.fixture(scope="module")
def toy():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 256, size=(40, 1, 28, 28)).astype(np.float64) / 255.0
    y = rng.integers(0, 10, 40)
    return Dataset(x[:32], y[:32]), Dataset(x[32:], y[32:], "test")


def cfg(**kw):
    base = dict(seed=0, descriptor="tiny_cnn", epochs=2, batch_size=8, lr=0.05)
    base.update(kw)
    return TrainConfig(**base)


def test_deterministic_metrics(toy, tmp_path):
    a = train(cfg(k_w=4, k_a=4, metrics_path=str(tmp_path / "a.csv")), *toy)
    b = train(cfg(k_w=4, k_a=4, metrics_path=str(tmp_path / "b.csv")), *toy)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert metrics_csv(a.metrics) == (tmp_path / "a.csv").read_text()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "epoch,loss,train_acc,test_acc"
    for i in a.checkpoint.params:
        assert a.checkpoint.params[i].tobytes() == b.checkpoint.params[i].tobytes()


def test_seed_changes_run(toy):
    a = train(cfg(seed=0), *toy)
    b = train(cfg(seed=1), *toy)
    assert a.metrics != b.metrics


def test_identity_quantizer_equivalence(toy):
    """A 32b/32b trainer run equals a hand-rolled float-mode loop, bitwise."""
    c = cfg(k_w=32, k_a=32, epochs=2, momentum=0.9, weight_decay=5e-4)
    res = train(c, *toy)
    train_set = toy[0]
    net = c.network()
    params = init_parameters(net, c.seed)
    vel = {i: np.zeros_like(w) for i, w in params.items()}
    rng = np.random.default_rng([c.seed, 1])
    for epoch in range(1, c.epochs + 1):
        order = rng.permutation(len(train_set))
        for s in range(0, len(order), c.batch_size):
            idx = order[s : s + c.batch_size]
            logits, rec = forward(net, params, train_set.images[idx], Mode.FLOAT, record=True)
            grads = backward(net, params, rec, softmax_cross_entropy_backward(logits, train_set.labels[idx]))
            for i, g in grads.items():
                vel[i] = vel[i] * c.momentum + (g + c.weight_decay * params[i])
                params[i] = params[i] - c.learning_rate(epoch) * vel[i]
    for i in params:
        assert params[i].tobytes() == res.checkpoint.params[i].tobytes()


def test_checkpoint_and_evaluate(toy, tmp_path):
    res = train(cfg(k_w=2, k_a=4, checkpoint_path=str(tmp_path / "m.ckpt")), *toy)
    ck = load_checkpoint(tmp_path / "m.ckpt", res.checkpoint.descriptor)
    assert ck.epoch == 2
    assert evaluate(ck, toy[1]) == res.final["test_acc"]
    assert all(np.isfinite(w).all() for w in ck.params.values())


def test_divergence_aborts(toy):
    with pytest.raises(TrainingDivergedError):
        train(cfg(lr=1e300, epochs=3), *toy)


def test_learning_rate_schedule():
    c = cfg(lr=0.1, lr_decay_epochs=[2, 4], lr_decay_factor=0.5)
    assert [c.learning_rate(e) for e in range(1, 6)] == [0.1, 0.1, 0.05, 0.05, 0.025]


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="unknown"):
            TrainConfig.from_dict({"seed": 1, "learning_rate": 0.1})

    def test_seed_required(self):
        with pytest.raises(ConfigurationError, match="seed"):
            TrainConfig.from_dict({"epochs": 1})

    @pytest.mark.parametrize("bad", [{"epochs": 0}, {"batch_size": -1}, {"lr": 0}, {"momentum": 1.0}, {"seed": -3}])
    def test_invalid_values(self, bad):
        with pytest.raises(ConfigurationError):
            TrainConfig.from_dict({"seed": 1, **bad})

    def test_relative_paths(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"seed": 2, "train_images": "x.idx", "descriptor": "net.json"}))
        c = TrainConfig.load(tmp_path / "c.json")
        assert c.train_images == str(tmp_path / "x.idx")
        assert c.descriptor == str(tmp_path / "net.json")

    def test_builtin_descriptor_name_untouched(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"seed": 2, "descriptor": "small_cnn"}))
        assert TrainConfig.load(tmp_path / "c.json").descriptor == "small_cnn"


class TestGrid:
    def test_single_cell_equals_train(self, toy):
        base = {"descriptor": "tiny_cnn", "epochs": 2, "batch_size": 8, "lr": 0.05}
        rows = run_grid({"base": base, "cells": [[4, 2, 1]], "seeds": [3]}, train_set=toy[0], test_set=toy[1])
        ref = train(TrainConfig(seed=3, k_w=4, k_a=2, widening=1, **base), *toy)
        assert len(rows) == 1
        assert rows[0]["test_acc"] == ref.final["test_acc"]
        assert rows[0]["train_acc"] == ref.final["train_acc"]

    def test_axes_cover_request(self, toy):
        base = {"descriptor": "tiny_cnn", "epochs": 1, "batch_size": 16}
        rows = run_grid({"base": base, "k_w": [32, 2], "k_a": [4, 1], "widening": [1], "seeds": [0]},
                        train_set=toy[0], test_set=toy[1])
        assert {(r["k_w"], r["k_a"]) for r in rows} == {(32, 4), (32, 1), (2, 4), (2, 1)}
        table = grid_table_csv(rows).splitlines()
        assert table[0] == "weights,4b A 1x,1b A 1x"
        assert [line.split(",")[0] for line in table[1:]] == ["32b W", "2b W"]
        assert grid_csv(rows).splitlines()[0] == "k_w,k_a,widening,seed,train_acc,test_acc,status"

    def test_failed_cell_recorded(self, toy):
        base = {"descriptor": "tiny_cnn", "epochs": 1, "batch_size": 16}
        rows = run_grid({"base": base, "cells": [[0, 4, 1], [4, 4, 1]], "seeds": [0]}, train_set=toy[0], test_set=toy[1])
        assert rows[0]["status"].startswith("error")
        assert rows[1]["status"] == "ok"

    def test_unknown_grid_key(self):
        with pytest.raises(ConfigurationError):
            run_grid({"base": {}, "colour": 1})
