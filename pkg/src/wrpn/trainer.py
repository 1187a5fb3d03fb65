"""From-scratch SGD training through fake-quantized forward/backward passes.

Train config JSON (unknown keys rejected; relative paths resolve against the
config file's directory)::

    {
      "seed": 0,                        # required
      "descriptor": "small_cnn",        # shipped name or path
      "train_images": "...", "train_labels": "...",
      "test_images": "...",  "test_labels": "...",   # optional pair
      "epochs": 10, "batch_size": 32,
      "lr": 0.05, "lr_decay_epochs": [6, 8], "lr_decay_factor": 0.1,
      "momentum": 0.9, "weight_decay": 0.0005,
      "k_w": 4, "k_a": 4,               # null keeps the descriptor's widths
      "widening": 1,
      "full_precision_first": false, "full_precision_last": false,
      "clamp_master": true,             # clamp quantized layers' weights to [-1, 1]
      "metrics_path": "metrics.csv",    # optional
      "checkpoint_path": "model.ckpt"   # optional
    }

The metrics log is CSV with header ``epoch,loss,train_acc,test_acc``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, ingest_idx
from .engine import Mode, backward, forward, predict
from .errors import ConfigurationError, TrainingDivergedError
from .model import (
    Checkpoint,
    NetworkDescriptor,
    init_parameters,
    layer_gain,
    load_descriptor,
    requantize,
    resolve,
    save_checkpoint,
    widen,
)
from .quant import FULL_PRECISION
from .tensor import softmax_cross_entropy, softmax_cross_entropy_backward

log = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "loss", "train_acc", "test_acc")


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    descriptor: str = "small_cnn"
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    epochs: int = 10
    batch_size: int = 32
    lr: float = 0.05
    lr_decay_epochs: tuple = ()
    lr_decay_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    k_w: int | None = None
    k_a: int | None = None
    widening: float | int | str = 1
    full_precision_first: bool = False
    full_precision_last: bool = False
    clamp_master: bool = True
    metrics_path: str | None = None
    checkpoint_path: str | None = None

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigurationError(f"seed must be a non-negative integer, got {self.seed!r}")
        for name in ("epochs", "batch_size"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if not self.lr > 0 or not self.lr_decay_factor > 0:
            raise ConfigurationError("lr and lr_decay_factor must be positive")
        if not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise ConfigurationError("momentum must lie in [0, 1) and weight_decay must be >= 0")
        object.__setattr__(self, "lr_decay_epochs", tuple(int(e) for e in self.lr_decay_epochs))

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "seed" not in d:
            raise ConfigurationError("config must set 'seed'")
        d = dict(d)
        if base_dir is not None:
            for key in ("train_images", "train_labels", "test_images", "test_labels", "metrics_path", "checkpoint_path", "descriptor"):
                v = d.get(key)
                if v and not Path(v).is_absolute() and (key != "descriptor" or v.endswith(".json")):
                    d[key] = str(Path(base_dir) / v)
        return cls(**d)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lr_decay_epochs"] = list(self.lr_decay_epochs)
        return d

    def network(self) -> NetworkDescriptor:
        net = load_descriptor(self.descriptor)
        if self.widening != 1:
            net = widen(net, self.widening)
        if self.k_w is not None or self.k_a is not None or self.full_precision_first or self.full_precision_last:
            k_w = self.k_w if self.k_w is not None else 32
            k_a = self.k_a if self.k_a is not None else 32
            net = requantize(
                net, k_w, k_a,
                full_precision_first=self.full_precision_first,
                full_precision_last=self.full_precision_last,
            )
        return net

    def learning_rate(self, epoch: int) -> float:
        """Step-decayed rate for a 1-based epoch."""
        drops = sum(1 for e in self.lr_decay_epochs if epoch > e)
        return self.lr * self.lr_decay_factor**drops


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    metrics: list = field(default_factory=list)

    @property
    def final(self) -> dict:
        return self.metrics[-1]


def metrics_csv(metrics: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for m in metrics:
        test = "" if m["test_acc"] is None else f"{m['test_acc']:.6f}"
        writer.writerow([m["epoch"], f"{m['loss']:.6f}", f"{m['train_acc']:.6f}", test])
    return buf.getvalue()


def accuracy(net, params, dataset: Dataset, mode=Mode.FAKE_QUANT) -> float:
    if len(dataset) == 0:
        return float("nan")
    return float(np.mean(predict(net, params, dataset.images, mode) == dataset.labels))


def load_datasets(config: TrainConfig) -> tuple[Dataset, Dataset | None]:
    if not (config.train_images and config.train_labels):
        raise ConfigurationError("config needs train_images and train_labels")
    train = ingest_idx(config.train_images, config.train_labels, "train")
    test = None
    if config.test_images and config.test_labels:
        test = ingest_idx(config.test_images, config.test_labels, "test")
    return train, test


def train(config: TrainConfig, train_set: Dataset | None = None, test_set: Dataset | None = None) -> TrainResult:
    """SGD with momentum on the master weights.

    Weight decay is an L2 penalty on the weights a layer computes with, i.e.
    ``gain * master``; without a descriptor gain that is plain decay on the
    master weights. After each step the master weights of quantized layers
    are clamped to [-1, 1] (``clamp_master``), since outside that interval
    the clipping quantizer passes them no gradient.

    Datasets default to the IDX files named in ``config``. The run is a pure
    function of ``config`` and the data: parameters are seeded from
    ``config.seed`` and the per-epoch shuffle from an independent child stream.
    """
    if train_set is None:
        train_set, loaded_test = load_datasets(config)
        test_set = test_set if test_set is not None else loaded_test
    net = config.network()
    train_set.check(net.input_shape, net.class_count)
    if test_set is not None:
        test_set.check(net.input_shape, net.class_count)

    params = init_parameters(net, config.seed)
    # a master weight outside [-1, 1] gets no gradient through the clipping
    # quantizer and would stay frozen; full-precision layers are left free
    clamped = {s.index for s in resolve(net) if s.weight_shape is not None and s.layer.weight_bits < FULL_PRECISION}
    if not config.clamp_master:
        clamped = set()
    # L2 penalty on the weights each layer computes with (gain * master)
    decay = {s.index: config.weight_decay * layer_gain(net, s) ** 2 for s in resolve(net) if s.weight_shape is not None}
    velocity = {i: np.zeros_like(w) for i, w in params.items()}
    rng = np.random.default_rng([config.seed, 1])
    n = len(train_set)
    metrics = []
    out = Path(config.metrics_path) if config.metrics_path else None
    if out is not None:
        out.write_text(",".join(METRICS_HEADER) + "\n")

    for epoch in range(1, config.epochs + 1):
        lr = config.learning_rate(epoch)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x, y = train_set.images[idx], train_set.labels[idx]
            logits, rec = forward(net, params, x, Mode.FAKE_QUANT, record=True)
            loss = softmax_cross_entropy(logits, y)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss} at epoch {epoch}, batch starting {start}; lower lr")
            total += loss * len(idx)
            grads = backward(net, params, rec, softmax_cross_entropy_backward(logits, y))
            for i, g in grads.items():
                v = velocity[i]
                v *= config.momentum
                v += g + decay[i] * params[i]
                with np.errstate(over="ignore", invalid="ignore"):
                    params[i] = params[i] - lr * v
                if not np.isfinite(params[i]).all():
                    raise TrainingDivergedError(f"layer {i} weights became non-finite at epoch {epoch}; lower lr")
                if i in clamped:
                    np.clip(params[i], -1.0, 1.0, out=params[i])
        row = {
            "epoch": epoch,
            "loss": total / n,
            "train_acc": accuracy(net, params, train_set),
            "test_acc": accuracy(net, params, test_set) if test_set is not None else None,
        }
        metrics.append(row)
        log.info("epoch %d loss %.4f train %.4f test %s", epoch, row["loss"], row["train_acc"], row["test_acc"])
        if out is not None:
            with out.open("a") as fh:
                fh.write(metrics_csv([row]).split("\n", 1)[1])

    ckpt = Checkpoint(net, params, velocity, config.epochs, config.seed, rng.bit_generator.state)
    if config.checkpoint_path:
        save_checkpoint(ckpt, config.checkpoint_path)
    return TrainResult(ckpt, metrics)


def evaluate(checkpoint: Checkpoint, dataset: Dataset, mode=Mode.FAKE_QUANT) -> float:
    """Top-1 accuracy of the checkpoint's network on ``dataset``."""
    dataset.check(checkpoint.descriptor.input_shape, checkpoint.descriptor.class_count)
    return accuracy(checkpoint.descriptor, checkpoint.params, dataset, mode)


# -- experiment grids --------------------------------------------------

GRID_KEYS = {"base", "k_w", "k_a", "widening", "seeds", "cells"}
GRID_HEADER = ("k_w", "k_a", "widening", "seed", "train_acc", "test_acc", "status")


def _grid_cells(grid: dict) -> list[tuple]:
    if grid.get("cells"):
        cells = [tuple(c) for c in grid["cells"]]
    else:
        cells = [
            (kw, ka, m)
            for kw in grid.get("k_w", [32])
            for ka in grid.get("k_a", [32])
            for m in grid.get("widening", [1])
        ]
    for c in cells:
        if len(c) != 3:
            raise ConfigurationError(f"grid cell must be [k_w, k_a, widening], got {list(c)}")
    return cells


def _run_cell(args):
    base, kw, ka, m, seed, train_set, test_set = args
    cfg = TrainConfig.from_dict({**base, "k_w": kw, "k_a": ka, "widening": m, "seed": seed,
                                 "metrics_path": None, "checkpoint_path": None})
    try:
        res = train(cfg, train_set, test_set)
        last = res.final
        return {"k_w": kw, "k_a": ka, "widening": m, "seed": seed,
                "train_acc": last["train_acc"], "test_acc": last["test_acc"], "status": "ok"}
    except Exception as exc:  # a failed cell must not stop the grid
        log.warning("grid cell k_w=%s k_a=%s m=%s seed=%s failed: %s", kw, ka, m, seed, exc)
        return {"k_w": kw, "k_a": ka, "widening": m, "seed": seed,
                "train_acc": None, "test_acc": None, "status": f"error: {exc}"}


def run_grid(grid: dict, base_dir=None, train_set=None, test_set=None, workers: int | None = None) -> list[dict]:
    """Train every (k_w, k_a, widening) cell for every seed with identical hyperparameters.

    ``grid`` holds ``base`` (a train config without a seed), either ``cells``
    (a list of ``[k_w, k_a, widening]``) or the axes ``k_w``/``k_a``/``widening``
    whose product is taken, and ``seeds``. Cells run in up to ``workers``
    processes (default: ``WRPN_THREADS`` or 1).
    """
    unknown = set(grid) - GRID_KEYS
    if unknown:
        raise ConfigurationError(f"unknown grid keys: {sorted(unknown)}")
    base = dict(grid.get("base", {}))
    base.pop("seed", None)
    if base_dir is not None:
        base = TrainConfig.from_dict({**base, "seed": 0}, base_dir=base_dir).to_dict()
        base.pop("seed")
    if train_set is None:
        train_set, loaded = load_datasets(TrainConfig.from_dict({**base, "seed": 0}))
        test_set = test_set if test_set is not None else loaded
    seeds = grid.get("seeds", [0])
    jobs = [(base, kw, ka, m, seed, train_set, test_set) for kw, ka, m in _grid_cells(grid) for seed in seeds]
    if workers is None:
        workers = int(os.environ.get("WRPN_THREADS", "1") or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(j) for j in jobs]


def grid_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GRID_HEADER)
    for r in rows:
        writer.writerow([
            r["k_w"], r["k_a"], r["widening"], r["seed"],
            "" if r["train_acc"] is None else f"{r['train_acc']:.6f}",
            "" if r["test_acc"] is None else f"{r['test_acc']:.6f}",
            r["status"],
        ])
    return buf.getvalue()


def cell_means(rows: list[dict]) -> dict[tuple, float]:
    """Seed-averaged test accuracy per (k_w, k_a, widening); failed runs skipped."""
    acc: dict[tuple, list] = {}
    for r in rows:
        if r["status"] == "ok" and r["test_acc"] is not None:
            acc.setdefault((r["k_w"], r["k_a"], r["widening"]), []).append(r["test_acc"])
    return {k: float(np.mean(v)) for k, v in acc.items()}


def grid_table_csv(rows: list[dict]) -> str:
    """Pivot of seed-mean test accuracy: one row per weight width, one column per
    (activation width, widening); empty where a cell was not run or failed."""
    means = cell_means(rows)
    kws = sorted({r["k_w"] for r in rows}, reverse=True)
    cols = sorted({(r["k_a"], r["widening"]) for r in rows}, key=lambda c: (-c[0], float(c[1])))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["weights"] + [f"{ka}b A {m}x" for ka, m in cols])
    for kw in kws:
        line = [f"{kw}b W"]
        for ka, m in cols:
            v = means.get((kw, ka, m))
            line.append("" if v is None else f"{100 * v:.2f}")
        writer.writerow(line)
    return buf.getvalue()
