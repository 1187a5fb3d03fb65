"""
Widening and the bit-width compute-cost model
=============================================

Widening multiplies interior channel counts; compute cost is FMAs times the
weight and activation operand widths.
"""

from fractions import Fraction

from wrpn.analyzer import compute_cost, cost_ratio, count_fmas, fma_ratio, sensitivity_table
from wrpn.model import load_descriptor, requantize, widen

alexnet = load_descriptor("alexnet")
print(alexnet.note)

# doubling every interior layer roughly quadruples interior FMAs
wide = widen(alexnet, 2)
print(f"AlexNet FMAs 1x: {sum(count_fmas(alexnet).values()):,}")
print(f"AlexNet FMAs 2x: {sum(count_fmas(wide).values()):,}")
print(f"ratio: {float(fma_ratio(wide, alexnet)):.3f}")

# channel counts round half away from zero under fractional widening
net = load_descriptor("small_cnn")
for m in ("1", "3/2", "5/4", "2"):
    w = widen(net, Fraction(m))
    print(f"small_cnn x{m}: channels", [w.channels(i) for i in w.param_layers])

# per-layer report
rep = compute_cost(requantize(wide, 4, 4))
for layer in rep.layers[:3]:
    print(layer)

# 4b/4b ops cost 1/64 of 32b/32b ops
base = requantize(alexnet, 32, 32, input_bits=32)
print("per-op ratio 4b/4b:", cost_ratio(requantize(alexnet, 4, 4, input_bits=4), base))

# whole-network ratios depend on how the first and last layers are treated
for row in sensitivity_table(alexnet, 4, 4):
    print(f"{row['convention']:>14}: {100 * row['ratio']:.2f}% of the 1x full-precision cost")
for row in sensitivity_table(load_descriptor("resnet34"), 4, 8):
    print(f"ResNet-34 4bW/8bA {row['convention']:>14}: {100 * row['ratio']:.2f}%")
