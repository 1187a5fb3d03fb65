"""
Integer-code inference
======================

Convolutions and matmuls run on integer codes in int64 and are rescaled once
per output; the result matches the fake-quantized float path.
"""

import numpy as np

from wrpn.engine import Mode, check_accumulator, forward
from wrpn.model import init_parameters, load_descriptor, requantize

rng = np.random.default_rng(0)
x = rng.random((8, 1, 28, 28))

for k in (2, 4, 8):
    net = requantize(load_descriptor("small_cnn"), k, k)
    params = init_parameters(net, 0)
    fq = forward(net, params, x, Mode.FAKE_QUANT)
    it = forward(net, params, x, Mode.INTEGER)
    rel = np.abs(fq - it).max() / np.abs(fq).max()
    worst = max(check_accumulator(net).values())
    print(f"k={k}: max relative difference {rel:.2e}, worst accumulator {worst:,} ({worst.bit_length()} bits)")

# full-precision layers cannot take the integer path
try:
    forward(load_descriptor("small_cnn"), init_parameters(load_descriptor("small_cnn"), 0), x, Mode.INTEGER)
except ValueError as exc:
    print("refused:", exc)

# a narrow accumulator would overflow on a big layer
net = requantize(load_descriptor("alexnet"), 8, 8)
try:
    check_accumulator(net, bits=24)
except AssertionError as exc:
    print("24-bit accumulator:", exc)
