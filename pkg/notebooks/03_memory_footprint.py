"""
Activation versus weight memory
===============================

Training keeps every activation for the backward pass, so activation memory
grows with the batch; inference only needs one layer's working set.
"""

from wrpn.analyzer import memory_footprint
from wrpn.model import load_descriptor

MB = 2**20

for name in ("resnet34", "alexnet"):
    net = load_descriptor(name)
    for phase in ("training", "inference"):
        for batch in (1, 32):
            rep = memory_footprint(net, batch, phase)
            print(f"{name:>9} {phase:>9} batch {batch:>2}: "
                  f"activations {rep.activation_bytes / MB:9.2f} MB, weights {rep.weight_bytes / MB:7.2f} MB")

# lowering activation precision shrinks the dominant term during training
net = load_descriptor("resnet34")
for k_a in (32, 8, 4, 2):
    rep = memory_footprint(net, 32, "training", k_w=4, k_a=k_a)
    print(f"ResNet-34 batch 32, 4-bit W, {k_a:>2}-bit A: {(rep.activation_bytes + rep.weight_bytes) / MB:8.2f} MB")

# activation bytes are exactly linear in the batch
one = memory_footprint(net, 1, "training").activation_bytes
print("linear in batch:", all(memory_footprint(net, b, "training").activation_bytes == b * one for b in (2, 7, 32)))
