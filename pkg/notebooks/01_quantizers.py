"""
k-bit weight and activation quantizers
======================================

Weights are clamped to [-1, 1] and snapped to 2^(k-1) - 1 steps per sign;
activations are clamped to [0, 1] and snapped to 2^k - 1 steps.
"""

import numpy as np

from wrpn.quant import (
    Kind,
    QuantSpec,
    activation_steps,
    quantize_activations,
    quantize_weights,
    quantizer_backward,
    to_codes,
    weight_steps,
)

# the grids themselves
for k in (2, 4, 8):
    w_levels = np.unique(quantize_weights(np.linspace(-1, 1, 10001), k))
    a_levels = np.unique(quantize_activations(np.linspace(0, 1, 10001), k))
    print(f"k={k}: {len(w_levels)} weight levels (step 1/{weight_steps(k)}), "
          f"{len(a_levels)} activation levels (step 1/{activation_steps(k)})")

# 2-bit weights are ternary
print("2-bit weight grid:", np.unique(quantize_weights(np.linspace(-1.5, 1.5, 101), 2)))

# values outside the interval saturate; 32 bits is the identity
w = np.array([-3.0, -0.6, -0.2, 0.0, 0.26, 0.74, 1.8])
print("input     ", w)
print("4-bit W   ", quantize_weights(w, 4))
print("32-bit W  ", quantize_weights(w, 32))
print("4-bit A   ", quantize_activations(w, 4))

# the literal activation formula divides by 2^(k-1) and overshoots 1
print("literal 4-bit A of 1.0:", quantize_activations(np.array([1.0]), 4, literal=True))

# quantization error never exceeds half a step
rng = np.random.default_rng(0)
x = rng.uniform(-1, 1, 100000)
for k in (2, 4, 8):
    err = np.abs(quantize_weights(x, k) - x).max()
    print(f"k={k}: max |error| = {err:.5f}, half step = {0.5 / weight_steps(k):.5f}")

# straight-through gradient: pass inside the interval, block outside
pre = np.array([-1.5, -1.0, 0.3, 1.0, 1.2])
print("STE mask for weights:", quantizer_backward(np.ones(5), pre, (-1.0, 1.0)))

# integer codes plus one float scale
q = to_codes(np.array([0.1, -0.5, 0.9]), QuantSpec(4, Kind.WEIGHT))
print("codes", q.codes, "scale", q.scale, "values", q.codes * q.scale)
