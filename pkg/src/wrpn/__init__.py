"""Reduced-precision, widened neural networks in numpy.

Submodules: ``tensor`` (numeric kernels), ``quant`` (k-bit quantizers),
``model`` (descriptors, widening, checkpoints), ``engine`` (float,
fake-quantized and integer execution), ``analyzer`` (compute cost and memory
footprint), ``data`` (IDX files), ``trainer`` (SGD and experiment grids) and
``cli``.
"""

__version__ = "0.1.0"
