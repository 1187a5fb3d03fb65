"""Static compute-cost and memory-footprint models over network descriptors.

Compute cost of a layer is its FMA count times the bit-width of its weights
times the bit-width of the activations it consumes. A layer's activation
width is whatever precision the incoming stream carries: the network input
enters at ``input_bits``, a quantized activation layer sets its own width,
and raw conv/fc outputs (pre-activations) are full precision.

CSV schemas (one row per layer, header first):

cost
    ``layer,kind,role,fmas,k_w,k_a,bit_cost``
    A last row with layer ``total`` carries the summed ``fmas`` and
    ``bit_cost`` (other fields empty).
footprint
    ``layer,kind,out_elements,act_bits,activation_bytes,params,weight_bits,weight_bytes``
    Row ``-1`` is the network input. ``activation_bytes`` is the per-batch
    size of that layer's output tensor. A last row with layer ``total``
    carries the phase's activation bytes (all tensors for training, the
    largest single-layer working set for inference), total params and total
    weight bytes.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .model import NetworkDescriptor, requantize, resolve, widen
from .quant import FULL_PRECISION


class Phase(str, enum.Enum):
    TRAINING = "training"
    INFERENCE = "inference"


def count_fmas(net: NetworkDescriptor) -> dict[int, int]:
    """Per-sample multiply-accumulates of every layer (zero for pool/act/flatten)."""
    out = {}
    for s in resolve(net):
        kind = s.layer.kind
        if kind == "conv":
            cout, ho, wo = s.out_shape
            _, cin, kh, kw = s.weight_shape
            out[s.index] = ho * wo * cout * kh * kw * cin
        elif kind in ("fc", "output"):
            dout, din = s.weight_shape
            out[s.index] = dout * din
        elif kind == "residual" and s.weight_shape is not None:
            cout, ho, wo = s.out_shape
            out[s.index] = ho * wo * cout * s.weight_shape[1]
        else:
            out[s.index] = 0
    return out


def _stream_bits(net: NetworkDescriptor, shapes) -> tuple[dict, dict]:
    """Bit-width of each layer's input stream and of each layer's output."""
    bits_in: dict[int, int] = {}
    bits_out: dict[int, int] = {-1: net.input_bits}
    current = net.input_bits
    for s in shapes:
        kind = s.layer.kind
        bits_in[s.index] = bits_out[s.layer.source] if kind == "residual" and s.weight_shape else current
        if kind in ("conv", "fc", "output", "residual"):
            current = FULL_PRECISION
        elif kind == "act":
            current = s.layer.bits
        bits_out[s.index] = current
    return bits_in, bits_out


@dataclass(frozen=True)
class LayerCost:
    layer: int
    kind: str
    role: str
    fmas: int
    k_w: int
    k_a: int
    bit_cost: int


@dataclass
class CostReport:
    name: str
    widening: str
    layers: list = field(default_factory=list)

    @property
    def total_fmas(self) -> int:
        return sum(l.fmas for l in self.layers)

    @property
    def total_cost(self) -> int:
        return sum(l.bit_cost for l in self.layers)

    def ratio(self, reference: "CostReport") -> Fraction:
        return Fraction(self.total_cost, reference.total_cost)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "widening": self.widening,
            "total_fmas": self.total_fmas,
            "total_cost": self.total_cost,
            "layers": [asdict(l) for l in self.layers],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["layer", "kind", "role", "fmas", "k_w", "k_a", "bit_cost"])
        for l in self.layers:
            writer.writerow([l.layer, l.kind, l.role, l.fmas, l.k_w, l.k_a, l.bit_cost])
        writer.writerow(["total", "", "", self.total_fmas, "", "", self.total_cost])
        return buf.getvalue()


def _fmt_widening(m: Fraction) -> str:
    return str(m.numerator) if m.denominator == 1 else f"{m.numerator}/{m.denominator}"


def compute_cost(net: NetworkDescriptor) -> CostReport:
    shapes = resolve(net)
    fmas = count_fmas(net)
    bits_in, _ = _stream_bits(net, shapes)
    report = CostReport(net.name, _fmt_widening(net.widening))
    for s in shapes:
        if s.weight_shape is None:
            continue
        k_w = s.layer.weight_bits
        k_a = bits_in[s.index]
        f = fmas[s.index]
        report.layers.append(LayerCost(s.index, s.layer.kind, s.role, f, k_w, k_a, f * k_w * k_a))
    return report


def cost_ratio(candidate: NetworkDescriptor, baseline: NetworkDescriptor) -> Fraction:
    """Total bit-cost of ``candidate`` over that of ``baseline``, exactly."""
    return compute_cost(candidate).ratio(compute_cost(baseline))


def fma_ratio(candidate: NetworkDescriptor, baseline: NetworkDescriptor) -> Fraction:
    return Fraction(sum(count_fmas(candidate).values()), sum(count_fmas(baseline).values()))


CONVENTIONS = {
    # name: (input operand bits, full-precision first layer, full-precision last layer)
    "uniform": ("k_a", False, False),
    "input_8bit": (8, False, False),
    "first_fp": (FULL_PRECISION, True, False),
    "last_fp": ("k_a", False, True),
    "first_last_fp": (FULL_PRECISION, True, True),
}


def convention_descriptor(net: NetworkDescriptor, convention: str, k_w: int, k_a: int) -> NetworkDescriptor:
    input_bits, first, last = CONVENTIONS[convention]
    return requantize(
        net,
        k_w,
        k_a,
        input_bits=k_a if input_bits == "k_a" else input_bits,
        full_precision_first=first,
        full_precision_last=last,
    )


def sensitivity_table(net: NetworkDescriptor, k_w: int, k_a: int, widening=2) -> list[dict]:
    """Cost of the widened reduced-precision net against the 1x full-precision net.

    One row per first/last-layer convention; the baseline is always 32-bit
    weights, activations and input at the descriptor's own widening.
    """
    baseline = requantize(net, FULL_PRECISION, FULL_PRECISION, input_bits=FULL_PRECISION)
    base_cost = compute_cost(baseline).total_cost
    wide = widen(net, widening)
    rows = []
    for name in CONVENTIONS:
        cand = compute_cost(convention_descriptor(wide, name, k_w, k_a))
        ratio = Fraction(cand.total_cost, base_cost)
        rows.append(
            {
                "convention": name,
                "k_w": k_w,
                "k_a": k_a,
                "widening": _fmt_widening(Fraction(widening)),
                "fma_ratio": float(fma_ratio(wide, net)),
                "candidate_cost": cand.total_cost,
                "baseline_cost": base_cost,
                "ratio": float(ratio),
            }
        )
    return rows


def sensitivity_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


# -- memory footprint --------------------------------------------------


def _bytes(elements: int, bits: int) -> int:
    return -(-elements * bits // 8)


@dataclass(frozen=True)
class LayerFootprint:
    layer: int
    kind: str
    out_elements: int
    act_bits: int
    activation_bytes: int
    params: int
    weight_bits: int
    weight_bytes: int


@dataclass
class FootprintReport:
    """Activation and weight bytes for one phase and batch size.

    Training keeps every activation tensor (network input included) for the
    backward pass. Inference needs only the live working set: the largest
    input + output (+ residual skip) of any single layer.
    """

    name: str
    phase: Phase
    batch: int
    weight_bytes: int
    activation_bytes: int
    layers: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "phase": self.phase.value,
            "batch": self.batch,
            "weight_bytes": self.weight_bytes,
            "activation_bytes": self.activation_bytes,
            "layers": [asdict(l) for l in self.layers],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = ["layer", "kind", "out_elements", "act_bits", "activation_bytes", "params", "weight_bits", "weight_bytes"]
        writer.writerow(cols)
        for l in self.layers:
            writer.writerow([getattr(l, c) for c in cols])
        params = sum(l.params for l in self.layers)
        writer.writerow(["total", "", "", "", self.activation_bytes, params, "", self.weight_bytes])
        return buf.getvalue()


def memory_footprint(
    net: NetworkDescriptor,
    batch: int,
    phase=Phase.TRAINING,
    k_w: int | None = None,
    k_a: int | None = None,
) -> FootprintReport:
    """Activation/weight bytes; ``k_w``/``k_a`` override the per-layer widths."""
    if not isinstance(batch, int) or batch < 1:
        raise ValueError(f"batch must be a positive integer, got {batch!r}")
    phase = Phase(phase)
    shapes = resolve(net)
    _, bits_out = _stream_bits(net, shapes)
    if k_a is not None:
        bits_out = {i: k_a for i in bits_out}

    elements = {-1: math.prod(net.input_shape)}
    per_sample = {-1: _bytes(elements[-1], bits_out[-1])}
    rows = [LayerFootprint(-1, "input", elements[-1], bits_out[-1], batch * per_sample[-1], 0, 0, 0)]
    weight_bytes = 0
    for s in shapes:
        elements[s.index] = s.out_elements
        per_sample[s.index] = _bytes(s.out_elements, bits_out[s.index])
        wb = 0
        kw = 0
        if s.weight_shape is not None:
            kw = s.layer.weight_bits if k_w is None else k_w
            wb = _bytes(s.n_params, kw)
            weight_bytes += wb
        rows.append(
            LayerFootprint(
                s.index, s.layer.kind, s.out_elements, bits_out[s.index],
                batch * per_sample[s.index], s.n_params, kw, wb,
            )
        )

    if phase is Phase.TRAINING:
        act = batch * sum(per_sample.values())
    else:
        live = 0
        for s in shapes:
            tensors = {s.index - 1, s.index}
            if s.layer.kind == "residual":
                tensors.add(s.layer.source)
            live = max(live, sum(per_sample[t] for t in tensors))
        act = batch * live
    return FootprintReport(net.name, phase, batch, weight_bytes, act, rows)
