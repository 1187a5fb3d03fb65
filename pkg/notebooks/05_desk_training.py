"""
From-scratch training at reduced precision
==========================================

Trains the small CNN on the bundled 28x28 digits at a few precisions. The
full three-seed comparison lives in ``configs/desk_grid.json``; this is a
one-seed, few-epoch taste of it.
"""

import tempfile
from pathlib import Path

from wrpn.data import load_split, make_desk_digits
from wrpn.trainer import TrainConfig, train

tmp = Path(tempfile.mkdtemp())
make_desk_digits(tmp, seed=0)
train_set, test_set = load_split(tmp, "train"), load_split(tmp, "test")
print(f"{len(train_set)} training and {len(test_set)} test images")

for k_w, k_a, m in [(32, 32, 1), (4, 4, 1), (4, 4, 2), (2, 32, 1), (32, 2, 1)]:
    cfg = TrainConfig(seed=0, descriptor="small_cnn", epochs=3, batch_size=32, lr=0.5,
                      k_w=k_w, k_a=k_a, widening=m)
    res = train(cfg, train_set, test_set)
    print(f"{k_w:>2}b W / {k_a:>2}b A, {m}x wide: test accuracy {res.final['test_acc']:.3f}")
