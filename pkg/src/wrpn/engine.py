"""Network execution in float, fake-quantized and integer-code modes.

``FAKE_QUANT`` snaps each layer's master weights to its weight grid and each
activation-function output to its activation grid, all in binary64. The
``INTEGER`` path runs the same network on the integer codes: every
convolution or matmul accumulates code products in int64 and is rescaled by
``scale_w * scale_a`` (times the layer gain, if any) exactly once per
output. Both paths compute the same rationals up to float rounding, and both
round activations through :func:`~wrpn.quant.activation_codes`, whose tie
margin keeps a pre-activation that sits exactly on a rounding tie from being
split differently by the two paths' rounding noise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError, InvariantViolation, UsageError
from .model import NetworkDescriptor, Params, layer_gain, resolve
from .quant import (
    FULL_PRECISION,
    Kind,
    QuantSpec,
    activation_codes,
    activation_steps,
    quantize_activations,
    quantize_weights,
    spec_backward,
    to_codes,
    weight_steps,
)

ACCUMULATOR_BITS = 64
MAX_INTEGER_BITS = 16


class Mode(str, enum.Enum):
    FLOAT = "float"
    FAKE_QUANT = "fakequant"
    INTEGER = "integer"


@dataclass
class ForwardRecord:
    """Tensors kept from a forward pass for the backward pass.

    ``xs[0]`` is the (possibly quantized) network input and ``xs[i + 1]`` the
    output of layer ``i``.
    """

    mode: Mode
    xs: list = field(default_factory=list)
    weights: dict = field(default_factory=dict)
    pre_act: dict = field(default_factory=dict)


@dataclass
class _Codes:
    """Integer activation codes on the integer path."""

    codes: np.ndarray
    scale: float

    def value(self) -> np.ndarray:
        return self.codes * self.scale


def _check_input(net, x):
    x = T.as_tensor(x).astype(np.float64, copy=False)
    if x.ndim != 4 or x.shape[1:] != net.input_shape:
        raise DimensionError(f"input shape {x.shape} does not match N x {net.input_shape}")
    return x


def _check_params(shapes, params):
    for s in shapes:
        if s.weight_shape is None:
            continue
        if s.index not in params:
            raise ConfigurationError(f"missing parameters for layer {s.index}")
        if params[s.index].shape != s.weight_shape:
            raise DimensionError(
                f"layer {s.index} weights have shape {params[s.index].shape}, expected {s.weight_shape}"
            )


def _effective_weight(master, bits, mode):
    if mode is Mode.FLOAT:
        return master
    return quantize_weights(master, bits)


def _activation(z, bits, mode):
    y = T.clipped_relu(z)
    if mode is Mode.FLOAT:
        return y
    return quantize_activations(y, bits)


def forward(net: NetworkDescriptor, params: Params, x, mode=Mode.FLOAT, record: bool = False):
    """Run the network on an N x C x H x W batch and return logits.

    With ``record=True`` returns ``(logits, ForwardRecord)`` for :func:`backward`.
    """
    mode = Mode(mode)
    shapes = resolve(net)
    _check_params(shapes, params)
    x = _check_input(net, x)
    if mode is Mode.INTEGER:
        if record:
            raise UsageError("the integer path is inference-only; it cannot record for backward")
        return _forward_integer(net, shapes, params, x)

    rec = ForwardRecord(mode)
    h = x if mode is Mode.FLOAT else quantize_activations(x, net.input_bits)
    xs = [h]
    for s in shapes:
        layer = s.layer
        if layer.kind == "conv":
            w = _effective_weight(params[s.index], layer.weight_bits, mode)
            rec.weights[s.index] = w
            h = _scaled(T.conv2d(h, w, layer.stride, layer.padding), net, s)
        elif layer.kind in ("fc", "output"):
            w = _effective_weight(params[s.index], layer.weight_bits, mode)
            rec.weights[s.index] = w
            h = _scaled(T.fully_connected(h, w), net, s)
        elif layer.kind == "act":
            rec.pre_act[s.index] = h
            h = _activation(h, layer.bits, mode)
        elif layer.kind == "pool":
            pool = T.max_pool2d if layer.mode == "max" else T.avg_pool2d
            h = pool(h, layer.kernel, layer.stride, layer.padding)
        elif layer.kind == "flatten":
            h = h.reshape(h.shape[0], -1)
        elif layer.kind == "residual":
            skip = xs[layer.source + 1]
            if s.weight_shape is not None:
                w = _effective_weight(params[s.index], layer.weight_bits, mode)
                rec.weights[s.index] = w
                skip = _scaled(T.conv2d(skip, w, s.proj_stride, 0), net, s)
            h = h + skip
        xs.append(h)
    if record:
        rec.xs = xs
        return h, rec
    return h


def _scaled(y, net, s):
    g = layer_gain(net, s)
    return y if g == 1.0 else y * g


def backward(net: NetworkDescriptor, params: Params, rec: ForwardRecord | None, loss_grad) -> Params:
    """Gradients of the loss with respect to the *master* weights.

    Rounding is straight-through; quantized weights whose master value left
    [-1, 1] receive zero gradient.
    """
    if rec is None or not rec.xs:
        raise UsageError("backward needs the record of a forward pass run with record=True")
    shapes = resolve(net)
    pending: dict[int, np.ndarray] = {len(shapes) - 1: T.as_tensor(loss_grad).astype(np.float64)}
    grads: Params = {}

    def push(index, g):
        # index -1 is the network input; its gradient is not needed
        if index < 0:
            return
        pending[index] = pending[index] + g if index in pending else g

    for s in reversed(shapes):
        g = pending.pop(s.index, None)
        if g is None:
            g = np.zeros((rec.xs[0].shape[0],) + s.out_shape)
        layer = s.layer
        inp = rec.xs[s.index]
        if s.weight_shape is not None:
            gain = layer_gain(net, s)
            gw = g if gain == 1.0 else g * gain
        if layer.kind == "conv":
            dx, dw = T.conv2d_backward(gw, inp, rec.weights[s.index], layer.stride, layer.padding)
            grads[s.index] = _master_grad(dw, params[s.index], layer, rec.mode)
            push(s.index - 1, dx)
        elif layer.kind in ("fc", "output"):
            dx, dw = T.fully_connected_backward(gw, inp, rec.weights[s.index])
            grads[s.index] = _master_grad(dw, params[s.index], layer, rec.mode)
            push(s.index - 1, dx)
        elif layer.kind == "act":
            push(s.index - 1, T.clipped_relu_backward(g, rec.pre_act[s.index]))
        elif layer.kind == "pool":
            back = T.max_pool2d_backward if layer.mode == "max" else T.avg_pool2d_backward
            push(s.index - 1, back(g, inp, layer.kernel, layer.stride, layer.padding))
        elif layer.kind == "flatten":
            push(s.index - 1, g.reshape(inp.shape))
        elif layer.kind == "residual":
            push(s.index - 1, g)
            if s.weight_shape is not None:
                skip = rec.xs[layer.source + 1]
                dskip, dw = T.conv2d_backward(gw, skip, rec.weights[s.index], s.proj_stride, 0)
                grads[s.index] = _master_grad(dw, params[s.index], layer, rec.mode)
                push(layer.source, dskip)
            else:
                push(layer.source, g)
    return grads


def _master_grad(dw, master, layer, mode):
    if mode is Mode.FLOAT:
        return dw
    return spec_backward(dw, master, QuantSpec(layer.weight_bits, Kind.WEIGHT))


# -- integer path ------------------------------------------------------


def accumulator_bounds(net: NetworkDescriptor) -> dict[int, int]:
    """Worst-case |accumulator| per compute layer on the integer path.

    The bound is ``max_weight_code * max_input_code * fan_in``; an average
    pool in front of a layer multiplies the input code range by its window
    area, since the integer path pools by summing codes.
    """
    bounds = {}
    max_code = activation_steps(net.input_bits) if net.input_bits < FULL_PRECISION else None
    stream = {-1: max_code}
    for s in resolve(net):
        layer = s.layer
        if s.weight_shape is not None:
            src = max_code if layer.kind != "residual" else stream[layer.source]
            if src is not None and layer.weight_bits < FULL_PRECISION:
                bounds[s.index] = weight_steps(layer.weight_bits) * src * s.fan_in
        if layer.kind in ("conv", "fc", "output", "residual"):
            max_code = None
        elif layer.kind == "act":
            max_code = activation_steps(layer.bits) if layer.bits < FULL_PRECISION else None
        elif layer.kind == "pool" and layer.mode == "avg" and max_code is not None:
            max_code = max_code * layer.kernel * layer.kernel
        stream[s.index] = max_code
    return bounds


def check_accumulator(net: NetworkDescriptor, bits: int = ACCUMULATOR_BITS) -> dict[int, int]:
    """Raise unless a signed ``bits``-wide accumulator holds every layer's worst case."""
    bounds = accumulator_bounds(net)
    for index, bound in bounds.items():
        if bound.bit_length() >= bits:
            raise InvariantViolation(
                f"layer {index}: worst-case accumulator magnitude {bound} needs "
                f"{bound.bit_length() + 1} signed bits, only {bits} available"
            )
    return bounds


def _integer_ready(net, shapes):
    if net.input_bits > MAX_INTEGER_BITS:
        raise ConfigurationError(f"integer path needs input_bits <= {MAX_INTEGER_BITS}, got {net.input_bits}")
    for s in shapes:
        bits = s.layer.weight_bits if s.weight_shape is not None else s.layer.bits
        if bits is not None and bits > MAX_INTEGER_BITS:
            raise ConfigurationError(
                f"integer path needs every compute layer quantized to <= {MAX_INTEGER_BITS} bits; "
                f"layer {s.index} ({s.layer.kind}) is at {bits}"
            )


def _as_value(h):
    return h.value() if isinstance(h, _Codes) else h


def _need_codes(h, s):
    if not isinstance(h, _Codes):
        raise ConfigurationError(
            f"integer path: layer {s.index} ({s.layer.kind}) receives an unquantized input; "
            "put a quantized activation in front of it"
        )
    return h


def _forward_integer(net, shapes, params, x):
    _integer_ready(net, shapes)
    check_accumulator(net)
    steps = activation_steps(net.input_bits)
    h = _Codes(activation_codes(x, net.input_bits).astype(np.int64), 1.0 / steps)
    xs = [h]
    for s in shapes:
        layer = s.layer
        if layer.kind in ("conv", "fc", "output"):
            a = _need_codes(h, s)
            q = to_codes(params[s.index], QuantSpec(layer.weight_bits, Kind.WEIGHT))
            if layer.kind == "conv":
                acc = T.conv2d(a.codes, q.codes, layer.stride, layer.padding)
            else:
                acc = T.fully_connected(a.codes, q.codes)
            h = acc * (q.scale * a.scale * layer_gain(net, s))
        elif layer.kind == "act":
            steps = activation_steps(layer.bits)
            y = T.clipped_relu(_as_value(h))
            h = _Codes(activation_codes(y, layer.bits).astype(np.int64), 1.0 / steps)
        elif layer.kind == "pool":
            if layer.mode == "max":
                if isinstance(h, _Codes):
                    h = _Codes(T.max_pool2d(h.codes, layer.kernel, layer.stride, layer.padding), h.scale)
                else:
                    h = T.max_pool2d(h, layer.kernel, layer.stride, layer.padding)
            elif isinstance(h, _Codes):
                area = layer.kernel * layer.kernel
                summed = T.sum_pool2d(h.codes, layer.kernel, layer.stride, layer.padding)
                h = _Codes(summed, h.scale / area)
            else:
                h = T.avg_pool2d(h, layer.kernel, layer.stride, layer.padding)
        elif layer.kind == "flatten":
            if isinstance(h, _Codes):
                h = _Codes(h.codes.reshape(h.codes.shape[0], -1), h.scale)
            else:
                h = h.reshape(h.shape[0], -1)
        elif layer.kind == "residual":
            skip = xs[layer.source + 1]
            if s.weight_shape is not None:
                a = _need_codes(skip, s)
                q = to_codes(params[s.index], QuantSpec(layer.weight_bits, Kind.WEIGHT))
                skip = T.conv2d(a.codes, q.codes, s.proj_stride, 0) * (q.scale * a.scale * layer_gain(net, s))
            h = _as_value(h) + _as_value(skip)
        xs.append(h)
    return _as_value(h)


def predict(net: NetworkDescriptor, params: Params, x, mode=Mode.FAKE_QUANT, batch_size: int = 256) -> np.ndarray:
    """Arg-max class per sample, evaluated in fixed-size chunks."""
    x = _check_input(net, x)
    out = [forward(net, params, x[i : i + batch_size], mode).argmax(axis=1) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)
