"""Network descriptors, filter widening, initialization and checkpoints.

A descriptor is an ordered list of layers. Compute layers (``conv``, ``fc``,
``output`` and projecting ``residual`` skips) store their *base* output
channel count; the effective count is ``round(base * widening)``. The first
compute layer keeps its input channels pinned to the data, and the ``output``
layer always produces ``class_count`` logits, so widening only grows the
interior of the network.

Descriptor JSON schema (unknown keys are rejected)::

    {
      "name": str,                      # optional
      "note": str,                      # optional free text (variant, provenance)
      "input_shape": [C, H, W],
      "class_count": int,
      "widening": int | float | "p/q",  # optional, default 1
      "input_bits": int,                # optional, default 8
      "gain": "none" | "he",            # optional, default "none"
      "layers": [
        {"kind": "conv", "out": int, "kernel": int, "stride": int, "padding": int,
         "weight_bits": int},
        {"kind": "fc", "out": int, "weight_bits": int},
        {"kind": "act", "bits": int},                 # clipped ReLU + quantizer
        {"kind": "pool", "mode": "max" | "avg", "kernel": int, "stride": int,
         "padding": int},
        {"kind": "flatten"},
        {"kind": "residual", "source": int, "weight_bits": int},
        {"kind": "output", "weight_bits": int}
      ]
    }

``residual`` adds the output of layer ``source`` (``-1`` is the network input)
to the running tensor. When shapes differ the skip goes through a 1x1
projection convolution whose stride is inferred from the spatial ratio.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
import zlib
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    ConfigurationError,
    DimensionError,
    IncompatibleCheckpointError,
    ParseError,
)
from .quant import FULL_PRECISION, Kind, QuantizedTensor, QuantSpec, check_bits, from_codes, to_codes
from .tensor import output_extent

KINDS = ("conv", "fc", "pool", "act", "flatten", "residual", "output")
PARAM_KINDS = ("conv", "fc", "residual", "output")

ROLE_INPUT = "input"
ROLE_INTERNAL = "internal"
ROLE_OUTPUT = "output"

_LAYER_KEYS = {
    "conv": {"kind", "out", "kernel", "stride", "padding", "weight_bits", "role"},
    "fc": {"kind", "out", "weight_bits", "role"},
    "pool": {"kind", "mode", "kernel", "stride", "padding"},
    "act": {"kind", "bits"},
    "flatten": {"kind"},
    "residual": {"kind", "source", "weight_bits"},
    "output": {"kind", "weight_bits", "role"},
}
_NET_KEYS = {"name", "note", "input_shape", "class_count", "widening", "input_bits", "gain", "layers"}
GAINS = ("none", "he")


@dataclass(frozen=True)
class LayerDescriptor:
    kind: str
    out: int | None = None
    kernel: int | None = None
    stride: int = 1
    padding: int = 0
    mode: str = "max"
    weight_bits: int | None = None
    bits: int | None = None
    source: int | None = None
    role: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("conv", "fc"):
            if not isinstance(self.out, int) or self.out < 1:
                raise ConfigurationError(f"{self.kind} layer needs a positive 'out', got {self.out!r}")
        if self.kind in ("conv", "pool"):
            if not isinstance(self.kernel, int) or self.kernel < 1:
                raise ConfigurationError(f"{self.kind} layer needs a positive 'kernel', got {self.kernel!r}")
            if self.stride < 1 or self.padding < 0:
                raise ConfigurationError(f"{self.kind} layer has bad stride/padding {self.stride}/{self.padding}")
        if self.kind == "pool" and self.mode not in ("max", "avg"):
            raise ConfigurationError(f"pool mode must be 'max' or 'avg', got {self.mode!r}")
        if self.kind in PARAM_KINDS:
            object.__setattr__(self, "weight_bits", check_bits(FULL_PRECISION if self.weight_bits is None else self.weight_bits))
        elif self.weight_bits is not None:
            raise ConfigurationError(f"{self.kind} layer carries no weights")
        if self.kind == "act":
            object.__setattr__(self, "bits", check_bits(FULL_PRECISION if self.bits is None else self.bits))
        if self.kind == "residual" and not isinstance(self.source, int):
            raise ConfigurationError("residual layer needs an integer 'source'")

    @property
    def has_weights(self) -> bool:
        return self.kind in PARAM_KINDS

    @property
    def weight_spec(self) -> QuantSpec | None:
        if self.weight_bits is None:
            return None
        return QuantSpec(self.weight_bits, Kind.WEIGHT)

    @property
    def activation_spec(self) -> QuantSpec | None:
        if self.bits is None:
            return None
        return QuantSpec(self.bits, Kind.ACTIVATION)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind in ("conv", "fc"):
            d["out"] = self.out
        if self.kind in ("conv", "pool"):
            d.update(kernel=self.kernel, stride=self.stride, padding=self.padding)
        if self.kind == "pool":
            d["mode"] = self.mode
        if self.kind == "residual":
            d["source"] = self.source
        if self.kind == "act":
            d["bits"] = self.bits
        if self.weight_bits is not None:
            d["weight_bits"] = self.weight_bits
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerDescriptor":
        if not isinstance(d, dict) or "kind" not in d:
            raise ConfigurationError(f"layer entry must be an object with a 'kind', got {d!r}")
        kind = d["kind"]
        if kind not in _LAYER_KEYS:
            raise ConfigurationError(f"unknown layer kind {kind!r}")
        unknown = set(d) - _LAYER_KEYS[kind]
        if unknown:
            raise ConfigurationError(f"unknown keys for {kind} layer: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class LayerShape:
    """Resolved geometry of one layer (per sample, batch dimension excluded)."""

    index: int
    layer: LayerDescriptor
    in_shape: tuple
    out_shape: tuple
    role: str | None = None
    weight_shape: tuple | None = None
    source_shape: tuple | None = None
    proj_stride: int = 1

    @property
    def out_elements(self) -> int:
        return int(np.prod(self.out_shape))

    @property
    def in_elements(self) -> int:
        return int(np.prod(self.in_shape))

    @property
    def n_params(self) -> int:
        return 0 if self.weight_shape is None else int(np.prod(self.weight_shape))

    @property
    def fan_in(self) -> int:
        if self.weight_shape is None:
            return 0
        return int(np.prod(self.weight_shape[1:]))


def _parse_widening(value) -> Fraction:
    try:
        m = Fraction(value) if not isinstance(value, float) else Fraction(value).limit_denominator(10**6)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigurationError(f"widening must be a positive rational, got {value!r}") from None
    if m <= 0:
        raise ConfigurationError(f"widening must be positive, got {value!r}")
    return m


def scaled_channels(base: int, m: Fraction) -> int:
    """``base * m`` rounded half away from zero; zero is a configuration error."""
    exact = Fraction(base) * m
    count = int(exact + Fraction(1, 2))  # floor(x + 1/2) == half-away for x > 0
    if count < 1:
        raise ConfigurationError(f"widening by {m} leaves {base} channels at zero")
    return count


@dataclass(frozen=True)
class NetworkDescriptor:
    input_shape: tuple
    class_count: int
    layers: tuple
    widening: Fraction = Fraction(1)
    input_bits: int = 8
    gain: str = "none"
    name: str = ""
    note: str = ""

    def __post_init__(self):
        shape = tuple(int(s) for s in self.input_shape)
        if len(shape) != 3 or min(shape) < 1:
            raise ConfigurationError(f"input_shape must be three positive extents C,H,W; got {self.input_shape!r}")
        object.__setattr__(self, "input_shape", shape)
        if not isinstance(self.class_count, int) or self.class_count < 1:
            raise ConfigurationError(f"class_count must be a positive integer, got {self.class_count!r}")
        layers = tuple(l if isinstance(l, LayerDescriptor) else LayerDescriptor.from_dict(l) for l in self.layers)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "widening", _parse_widening(self.widening))
        object.__setattr__(self, "input_bits", check_bits(self.input_bits))
        if self.gain not in GAINS:
            raise ConfigurationError(f"gain must be one of {GAINS}, got {self.gain!r}")

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        m = self.widening
        d: dict[str, Any] = {}
        if self.name:
            d["name"] = self.name
        if self.note:
            d["note"] = self.note
        d.update(
            input_shape=list(self.input_shape),
            class_count=self.class_count,
            widening=int(m) if m.denominator == 1 else f"{m.numerator}/{m.denominator}",
            input_bits=self.input_bits,
        )
        if self.gain != "none":
            d["gain"] = self.gain
        d.update(
            layers=[l.to_dict() for l in self.layers],
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkDescriptor":
        if not isinstance(d, dict):
            raise ConfigurationError("descriptor must be a JSON object")
        unknown = set(d) - _NET_KEYS
        if unknown:
            raise ConfigurationError(f"unknown descriptor keys: {sorted(unknown)}")
        missing = {"input_shape", "class_count", "layers"} - set(d)
        if missing:
            raise ConfigurationError(f"descriptor is missing keys: {sorted(missing)}")
        return cls(
            input_shape=tuple(d["input_shape"]),
            class_count=d["class_count"],
            layers=tuple(LayerDescriptor.from_dict(l) for l in d["layers"]),
            widening=d.get("widening", 1),
            input_bits=d.get("input_bits", 8),
            gain=d.get("gain", "none"),
            name=d.get("name", ""),
            note=d.get("note", ""),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @property
    def digest(self) -> bytes:
        """SHA-256 over the canonical JSON form."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).digest()

    # -- geometry ------------------------------------------------------

    def channels(self, index: int) -> int:
        layer = self.layers[index]
        if layer.kind == "output":
            return self.class_count
        return scaled_channels(layer.out, self.widening)

    def resolve(self) -> list[LayerShape]:
        return resolve(self)

    @property
    def param_layers(self) -> list[int]:
        return [s.index for s in resolve(self) if s.weight_shape is not None]


def _projection_stride(src_hw, dst_hw):
    for stride in range(1, src_hw[0] + 1):
        try:
            if all(output_extent(a, 1, stride, 0) == b for a, b in zip(src_hw, dst_hw)):
                return stride
        except ConfigurationError:
            continue
    return None


def resolve(net: NetworkDescriptor) -> list[LayerShape]:
    """Propagate shapes through the network, raising on any inconsistency."""
    shape: tuple = net.input_shape
    outputs: list[tuple] = []
    seen_compute = False
    resolved = []
    n = len(net.layers)
    for i, layer in enumerate(net.layers):
        kw: dict[str, Any] = {}
        where = f"layer {i} ({layer.kind})"
        if layer.kind == "conv":
            if len(shape) != 3:
                raise DimensionError(f"{where}: needs a C,H,W input, got {shape}")
            c, h, w = shape
            cout = net.channels(i)
            ho = output_extent(h, layer.kernel, layer.stride, layer.padding, f"{where} height")
            wo = output_extent(w, layer.kernel, layer.stride, layer.padding, f"{where} width")
            kw["weight_shape"] = (cout, c, layer.kernel, layer.kernel)
            out = (cout, ho, wo)
        elif layer.kind in ("fc", "output"):
            if len(shape) != 1:
                raise DimensionError(f"{where}: needs a flat input (add a flatten layer), got {shape}")
            dout = net.channels(i)
            kw["weight_shape"] = (dout, shape[0])
            out = (dout,)
            if layer.kind == "output" and i != n - 1:
                raise ConfigurationError(f"{where}: output layer must be last")
        elif layer.kind == "pool":
            if len(shape) != 3:
                raise DimensionError(f"{where}: needs a C,H,W input, got {shape}")
            c, h, w = shape
            out = (
                c,
                output_extent(h, layer.kernel, layer.stride, layer.padding, f"{where} height"),
                output_extent(w, layer.kernel, layer.stride, layer.padding, f"{where} width"),
            )
        elif layer.kind == "act":
            out = shape
        elif layer.kind == "flatten":
            out = (int(np.prod(shape)),)
        elif layer.kind == "residual":
            src = layer.source
            if not -1 <= src < i:
                raise ConfigurationError(f"{where}: source {src} must name an earlier layer or -1")
            sshape = net.input_shape if src == -1 else outputs[src]
            kw["source_shape"] = sshape
            if sshape != shape:
                if len(sshape) != 3 or len(shape) != 3:
                    raise DimensionError(f"{where}: cannot project skip {sshape} onto {shape}")
                stride = _projection_stride(sshape[1:], shape[1:])
                if stride is None:
                    raise DimensionError(f"{where}: no 1x1 strided projection maps {sshape} onto {shape}")
                kw["weight_shape"] = (shape[0], sshape[0], 1, 1)
                kw["proj_stride"] = stride
            out = shape
        else:  # pragma: no cover - guarded by LayerDescriptor
            raise ConfigurationError(f"unknown layer kind {layer.kind!r}")

        if layer.kind == "residual" and "weight_shape" not in kw:
            role = None
        elif layer.has_weights:
            role = ROLE_OUTPUT if layer.kind == "output" else (ROLE_INTERNAL if seen_compute else ROLE_INPUT)
            seen_compute = True
        else:
            role = None
        if layer.role is not None and layer.role != role:
            raise ConfigurationError(f"{where}: declared role {layer.role!r} but position makes it {role!r}")
        resolved.append(LayerShape(i, layer, shape, out, role=role, **kw))
        outputs.append(out)
        shape = out
    if shape != (net.class_count,):
        raise DimensionError(f"network produces {shape}, expected ({net.class_count},) logits")
    return resolved


def widen(net: NetworkDescriptor, m) -> NetworkDescriptor:
    """Multiply the filter count of every non-output compute layer by ``m``."""
    m = _parse_widening(m)
    out = replace(net, widening=net.widening * m)
    resolve(out)
    return out


def requantize(
    net: NetworkDescriptor,
    k_w: int,
    k_a: int,
    *,
    input_bits: int | None = None,
    full_precision_first: bool = False,
    full_precision_last: bool = False,
) -> NetworkDescriptor:
    """Set uniform weight/activation bit-widths.

    ``full_precision_first`` keeps the input-adjacent layer's weights and the
    network input at 32 bits; ``full_precision_last`` keeps the output layer's
    weights and the activation feeding it at 32 bits.
    """
    check_bits(k_w)
    check_bits(k_a)
    shapes = resolve(net)
    layers = list(net.layers)
    for s in shapes:
        layer = layers[s.index]
        if layer.has_weights:
            bits = k_w
            if (full_precision_first and s.role == ROLE_INPUT) or (full_precision_last and s.role == ROLE_OUTPUT):
                bits = FULL_PRECISION
            layers[s.index] = replace(layer, weight_bits=bits)
        elif layer.kind == "act":
            layers[s.index] = replace(layer, bits=k_a)
    if full_precision_last:
        acts = [i for i, l in enumerate(layers) if l.kind == "act"]
        if acts:
            layers[acts[-1]] = replace(layers[acts[-1]], bits=FULL_PRECISION)
    ib = net.input_bits if input_bits is None else input_bits
    if full_precision_first:
        ib = FULL_PRECISION
    return replace(net, layers=tuple(layers), input_bits=ib)


# -- descriptor files --------------------------------------------------

BUILTIN = ("alexnet", "resnet34", "small_cnn", "tiny_cnn")


def load_descriptor(source) -> NetworkDescriptor:
    """Load a descriptor from a JSON path or the name of a shipped descriptor."""
    if isinstance(source, NetworkDescriptor):
        return source
    if isinstance(source, dict):
        return NetworkDescriptor.from_dict(source)
    text = None
    if str(source) in BUILTIN:
        text = resources.files("wrpn.descriptors").joinpath(f"{source}.json").read_text()
    else:
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read descriptor {source}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"descriptor {source} is not valid JSON: {exc.msg}", exc.pos) from exc
    net = NetworkDescriptor.from_dict(data)
    resolve(net)
    return net


def save_descriptor(net: NetworkDescriptor, path) -> None:
    Path(path).write_text(net.to_json())


# -- parameters --------------------------------------------------------

Params = dict  # layer index -> float64 weight array


def layer_gain(net: NetworkDescriptor, shape: LayerShape) -> float:
    """Fixed float multiplier applied to a compute layer's output.

    With ``gain="he"`` the stored weights span the whole [-1, 1] quantizer
    range and the layer output is scaled by sqrt(6 / fan_in), which gives
    the effective weights He variance. Without it, low-bit weight grids
    would round small fan-in-scaled weights to zero.
    """
    if net.gain == "he":
        return float(np.sqrt(6.0 / shape.fan_in))
    return 1.0


def init_parameters(net: NetworkDescriptor, seed: int) -> Params:
    """He-normal weights (std sqrt(2/fan_in)) clamped to [-1, 1], or
    uniform on [-1, 1] when the descriptor carries the ``he`` gain."""
    rng = np.random.default_rng(seed)
    params: Params = {}
    for s in resolve(net):
        if s.weight_shape is None:
            continue
        if net.gain == "he":
            params[s.index] = rng.uniform(-1.0, 1.0, size=s.weight_shape)
        else:
            std = np.sqrt(2.0 / s.fan_in)
            params[s.index] = np.clip(rng.normal(0.0, std, size=s.weight_shape), -1.0, 1.0)
    return params


# -- checkpoints -------------------------------------------------------

MAGIC = b"WRPN"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Master weights plus everything needed to resume training bit-exactly."""

    descriptor: NetworkDescriptor
    params: Params
    optimizer_state: dict = field(default_factory=dict)
    epoch: int = 0
    seed: int = 0
    rng_state: dict | None = None

    @property
    def descriptor_hash(self) -> bytes:
        return self.descriptor.digest


def _pack_array(buf, name: str, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    raw = name.encode()
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)
    buf.write(struct.pack("<I", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(struct.pack("<Q", arr.size))
    buf.write(arr.tobytes())


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write the little-endian binary format.

    Layout: ``b"WRPN"``, u32 version, 32-byte descriptor SHA-256, u32-prefixed
    JSON metadata (descriptor, epoch, seed, RNG state), u32 array count, then
    per array: u32-prefixed name, u32 ndim, u32 dims, u64 element count and
    binary64 data. A trailing CRC-32 covers every preceding byte.
    """
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(ckpt.descriptor_hash)
    meta = json.dumps(
        {
            "descriptor": ckpt.descriptor.to_dict(),
            "epoch": ckpt.epoch,
            "seed": ckpt.seed,
            "rng_state": ckpt.rng_state,
        },
        sort_keys=True,
    ).encode()
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    arrays = [(f"weight/{i}", ckpt.params[i]) for i in sorted(ckpt.params)]
    arrays += [(f"momentum/{i}", ckpt.optimizer_state[i]) for i in sorted(ckpt.optimizer_state)]
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        _pack_array(buf, name, arr)
    body = buf.getvalue()
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError(f"checkpoint truncated: wanted {n} bytes", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, net: NetworkDescriptor | None = None) -> Checkpoint:
    """Read a checkpoint; with ``net`` given, refuse one written for another descriptor."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < 4 + 4 + 32 + 4:
        raise ParseError("checkpoint truncated: header incomplete", len(data))
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    r = _Reader(body)
    if r.take(4) != MAGIC:
        raise ParseError("bad checkpoint magic", 0)
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", 4)
    if zlib.crc32(body) != crc:
        raise ParseError("checkpoint checksum mismatch (truncated or corrupt)", len(body))
    digest = r.take(32)
    (meta_len,) = r.unpack("<I")
    meta_at = r.pos
    try:
        meta = json.loads(r.take(meta_len))
        descriptor = NetworkDescriptor.from_dict(meta["descriptor"])
    except (ValueError, KeyError, ConfigurationError) as exc:
        raise ParseError(f"checkpoint metadata unreadable: {exc}", meta_at) from exc
    if descriptor.digest != digest:
        raise ParseError("embedded descriptor does not match header hash", meta_at)
    (count,) = r.unpack("<I")
    params: Params = {}
    momentum: dict = {}
    for _ in range(count):
        at = r.pos
        (name_len,) = r.unpack("<I")
        name = r.take(name_len).decode("utf-8", errors="replace")
        (ndim,) = r.unpack("<I")
        dims = r.unpack(f"<{ndim}I")
        (size,) = r.unpack("<Q")
        if size != int(np.prod(dims, dtype=np.int64)):
            raise ParseError(f"array {name!r} element count disagrees with its shape", at)
        arr = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(dims)
        group, _, idx = name.partition("/")
        target = {"weight": params, "momentum": momentum}.get(group)
        if target is None or not idx.isdigit():
            raise ParseError(f"unknown array name {name!r}", at)
        target[int(idx)] = arr
    if r.pos != len(body):
        raise ParseError("trailing bytes after last array", r.pos)
    ckpt = Checkpoint(descriptor, params, momentum, int(meta["epoch"]), int(meta["seed"]), meta.get("rng_state"))
    if net is not None and net.digest != digest:
        raise IncompatibleCheckpointError(
            f"checkpoint {path} was written for a different network descriptor"
        )
    return ckpt


# -- integer-code export -----------------------------------------------


def save_integer_model(net: NetworkDescriptor, params: Params, path) -> None:
    """Write every compute layer's weights as integer codes plus one scale.

    The ``.npz`` archive holds ``descriptor`` (JSON text) and, per compute
    layer ``i``, ``codes_i`` (int32) and ``scale_i`` (float64 scalar). Every
    compute layer must be quantized; a full-precision layer has no codes.
    """
    arrays = {"descriptor": np.array(net.to_json())}
    for s in resolve(net):
        if s.weight_shape is None:
            continue
        spec = s.layer.weight_spec
        if spec.full_precision:
            raise ConfigurationError(f"layer {s.index} is full precision; quantize it before exporting codes")
        q = to_codes(params[s.index], spec)
        arrays[f"codes_{s.index}"] = q.codes.astype(np.int32)
        arrays[f"scale_{s.index}"] = np.float64(q.scale)
    with Path(path).open("wb") as fh:
        np.savez(fh, **arrays)


def load_integer_model(path) -> tuple[NetworkDescriptor, Params]:
    """Read an archive from :func:`save_integer_model`; weights come back dequantized."""
    try:
        with np.load(path, allow_pickle=False) as z:
            net = NetworkDescriptor.from_dict(json.loads(str(z["descriptor"])))
            params: Params = {}
            for s in resolve(net):
                if s.weight_shape is None:
                    continue
                codes = z[f"codes_{s.index}"].astype(np.int64)
                if codes.shape != s.weight_shape:
                    raise DimensionError(f"layer {s.index} codes have shape {codes.shape}, expected {s.weight_shape}")
                spec = s.layer.weight_spec
                q = QuantizedTensor(codes, float(z[f"scale_{s.index}"]), codes.shape, spec.kind, spec.k)
                params[s.index] = from_codes(q)
    except (OSError, KeyError, ValueError) as exc:
        if isinstance(exc, (ConfigurationError, DimensionError)):
            raise
        raise ParseError(f"cannot read integer model {path}: {exc}") from exc
    return net, params
