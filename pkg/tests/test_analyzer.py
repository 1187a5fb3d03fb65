import csv
import io
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wrpn.analyzer import (
    CONVENTIONS,
    Phase,
    compute_cost,
    cost_ratio,
    count_fmas,
    fma_ratio,
    memory_footprint,
    sensitivity_csv,
    sensitivity_table,
)
from wrpn.model import NetworkDescriptor, load_descriptor, requantize, resolve, widen


def fc_net(din, dout, k_w=32, input_bits=32):
    return NetworkDescriptor.from_dict({"input_shape": [din, 1, 1], "class_count": dout, "input_bits": input_bits,
                                        "layers": [{"kind": "flatten"}, {"kind": "output", "weight_bits": k_w}]})


def conv_stack(channels, hw=8, k_w=32, k_a=32):
    layers = []
    for c in channels:
        layers += [{"kind": "conv", "out": c, "kernel": 3, "padding": 1, "weight_bits": k_w}, {"kind": "act", "bits": k_a}]
    layers += [{"kind": "flatten"}, {"kind": "output", "weight_bits": k_w}]
    return NetworkDescriptor.from_dict({"input_shape": [3, hw, hw], "class_count": 10, "input_bits": k_a,
                                        "layers": layers})


class TestCountFmas:
    def test_conv_hand_count(self):
        net = NetworkDescriptor.from_dict({"input_shape": [2, 4, 4], "class_count": 80, "layers": [
            {"kind": "conv", "out": 5, "kernel": 3, "padding": 1}, {"kind": "flatten"}]})
        assert count_fmas(net)[0] == 4 * 4 * 5 * 18 == 1440

    def test_fc_product(self):
        assert count_fmas(fc_net(9216, 4096))[1] == 37_748_736

    def test_unit_conv(self):
        net = NetworkDescriptor.from_dict({"input_shape": [1, 1, 1], "class_count": 1, "layers": [
            {"kind": "conv", "out": 1, "kernel": 1}, {"kind": "flatten"}]})
        assert count_fmas(net) == {0: 1, 1: 0}

    def test_non_compute_layers_are_free(self):
        fmas = count_fmas(load_descriptor("alexnet"))
        for s in resolve(load_descriptor("alexnet")):
            if s.layer.kind in ("act", "pool", "flatten"):
                assert fmas[s.index] == 0

    def test_alexnet_total(self):
        # single-tower: conv1..5 + fc6..8, counted by hand
        convs = 55 * 55 * 96 * 363 + 27 * 27 * 256 * 2400 + 13 * 13 * 384 * 2304 + 13 * 13 * 384 * 3456 + 13 * 13 * 256 * 3456
        fcs = 9216 * 4096 + 4096 * 4096 + 4096 * 1000
        assert sum(count_fmas(load_descriptor("alexnet")).values()) == convs + fcs

    def test_resnet34_total(self):
        total = sum(count_fmas(load_descriptor("resnet34")).values())
        assert 3.5e9 < total < 4.3e9  # the 224px original is ~3.6 GMAC


class TestCost:
    def test_footnote_product(self):
        low = compute_cost(fc_net(100, 10, k_w=4, input_bits=4))
        high = compute_cost(fc_net(100, 10))
        assert low.total_fmas == 1000
        assert low.total_cost == 16_000
        assert high.total_cost == 1_024_000
        assert low.ratio(high) == Fraction(1, 64)

    def test_self_ratio(self):
        net = load_descriptor("resnet34")
        assert cost_ratio(net, net) == 1

    def test_per_layer_product(self):
        rep = compute_cost(requantize(load_descriptor("small_cnn"), 4, 2))
        for l in rep.layers:
            assert l.bit_cost == l.fmas * l.k_w * l.k_a
        assert rep.total_cost == sum(l.bit_cost for l in rep.layers)
        # first layer reads 8-bit input, the rest read 2-bit activations
        assert [l.k_a for l in rep.layers] == [8, 2, 2, 2]

    def test_alexnet_wide_reduced_precision(self):
        net = load_descriptor("alexnet")
        base = requantize(net, 32, 32, input_bits=32)
        cand = requantize(widen(net, 2), 4, 4, input_bits=4)
        ratio = float(cost_ratio(cand, base))
        assert 0.058 <= ratio <= 0.061
        assert ratio == pytest.approx(float(fma_ratio(widen(net, 2), net)) / 64)

    def test_linear_in_uniform_fma_scaling(self):
        small, big = conv_stack((4, 8), hw=4), conv_stack((4, 8), hw=8)
        assert compute_cost(big).total_cost == 4 * compute_cost(small).total_cost

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(1, 6), min_size=1, max_size=3), st.sampled_from([1, 2, 4, 8, 16]),
           st.sampled_from([1, 2, 4, 8, 16]), st.integers(0, 2))
    def test_monotone(self, chans, kw, ka, which):
        net = conv_stack(chans, hw=4, k_w=kw, k_a=ka)
        c = compute_cost(net).total_cost
        assert compute_cost(conv_stack(chans, 4, kw * 2, ka)).total_cost >= c
        assert compute_cost(conv_stack(chans, 4, kw, ka * 2)).total_cost >= c
        grown = list(chans)
        grown[which % len(grown)] += 1
        assert compute_cost(conv_stack(grown, 4, kw, ka)).total_cost >= c

    @pytest.mark.parametrize("m", [2, 3])
    def test_widen_growth(self, m):
        net = conv_stack((4, 4, 4))
        base, wide = count_fmas(net), count_fmas(widen(net, m))
        roles = {s.index: s.role for s in resolve(net)}
        for i, f in base.items():
            if roles[i] == "internal":
                assert wide[i] == m * m * f
            elif roles[i] in ("input", "output"):
                assert wide[i] == m * f
        assert m <= fma_ratio(widen(net, m), net) <= m * m

    def test_csv_schema(self):
        rep = compute_cost(load_descriptor("alexnet"))
        *rows, total = csv.DictReader(io.StringIO(rep.to_csv()))
        assert list(rows[0]) == ["layer", "kind", "role", "fmas", "k_w", "k_a", "bit_cost"]
        assert sum(int(r["bit_cost"]) for r in rows) == rep.total_cost == int(total["bit_cost"])
        assert total["layer"] == "total" and int(total["fmas"]) == rep.total_fmas
        assert json.loads(rep.to_json())["total_fmas"] == rep.total_fmas


class TestSensitivity:
    @pytest.mark.parametrize("name,kw,ka", [("alexnet", 4, 4), ("resnet34", 4, 8)])
    def test_entries_rederive_by_hand(self, name, kw, ka):
        net = load_descriptor(name)
        rows = sensitivity_table(net, kw, ka)
        assert [r["convention"] for r in rows] == list(CONVENTIONS)
        base_fmas = count_fmas(net)
        wide = widen(net, 2)
        fmas = count_fmas(wide)
        shapes = resolve(wide)
        compute = [s for s in shapes if s.weight_shape is not None]
        first, last = compute[0].index, compute[-1].index
        baseline = sum(base_fmas.values()) * 32 * 32
        for r in rows:
            in_bits = {"uniform": ka, "input_8bit": 8, "first_fp": 32, "last_fp": ka, "first_last_fp": 32}[r["convention"]]
            fp_first = r["convention"] in ("first_fp", "first_last_fp")
            fp_last = r["convention"] in ("last_fp", "first_last_fp")
            total = 0
            for s in compute:
                w_bits = 32 if (fp_first and s.index == first) or (fp_last and s.index == last) else kw
                if s.index == first:
                    a_bits = in_bits
                elif s.index == last:
                    a_bits = 32 if fp_last else ka
                elif s.layer.kind == "residual":
                    a_bits = ka
                else:
                    a_bits = ka
                total += fmas[s.index] * w_bits * a_bits
            assert r["candidate_cost"] == total
            assert r["baseline_cost"] == baseline
            assert r["ratio"] == pytest.approx(total / baseline, rel=1e-15)

    def test_ordering(self):
        rows = {r["convention"]: r["ratio"] for r in sensitivity_table(load_descriptor("alexnet"), 4, 4)}
        assert rows["uniform"] < rows["input_8bit"] < rows["first_fp"] < rows["first_last_fp"]
        assert rows["uniform"] < rows["last_fp"] < rows["first_last_fp"]

    def test_csv(self):
        text = sensitivity_csv(sensitivity_table(load_descriptor("alexnet"), 4, 4))
        assert len(list(csv.DictReader(io.StringIO(text)))) == len(CONVENTIONS)


class TestFootprint:
    def test_single_fc(self):
        net = fc_net(10, 10)
        inf = memory_footprint(net, 1, Phase.INFERENCE)
        assert inf.weight_bytes == 400
        assert inf.activation_bytes == 80

    @pytest.mark.parametrize("phase", list(Phase))
    @pytest.mark.parametrize("k", [1, 4, 32])
    def test_batch_linearity(self, phase, k):
        net = load_descriptor("small_cnn")
        a = memory_footprint(net, 3, phase, k_w=k, k_a=k)
        b = memory_footprint(net, 6, phase, k_w=k, k_a=k)
        assert b.activation_bytes == 2 * a.activation_bytes
        assert b.weight_bytes == a.weight_bytes

    def test_bytes_round_up_per_tensor(self):
        net = fc_net(3, 3)
        rep = memory_footprint(net, 1, Phase.TRAINING, k_w=1, k_a=1)
        assert rep.weight_bytes == 2  # 9 bits
        assert rep.activation_bytes == 3  # three 3-element tensors at 1 bit

    def test_resnet_trend(self):
        net = load_descriptor("resnet34")
        train = memory_footprint(net, 32, Phase.TRAINING)
        infer = memory_footprint(net, 1, Phase.INFERENCE)
        assert train.activation_bytes > train.weight_bytes
        assert infer.activation_bytes < infer.weight_bytes

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 6), min_size=1, max_size=3), st.integers(1, 64), st.sampled_from([2, 4, 8, 32]))
    def test_training_dominates_inference(self, chans, batch, k):
        net = conv_stack(chans, hw=4)
        t = memory_footprint(net, batch, Phase.TRAINING, k_a=k)
        i = memory_footprint(net, batch, Phase.INFERENCE, k_a=k)
        assert t.activation_bytes >= i.activation_bytes

    def test_residual_working_set_includes_skip(self):
        net = load_descriptor("resnet34")
        rep = memory_footprint(net, 1, Phase.INFERENCE)
        assert rep.activation_bytes >= 3 * 64 * 57 * 57 * 4

    def test_csv_schema(self):
        rep = memory_footprint(load_descriptor("alexnet"), 2, "training")
        *rows, total = csv.DictReader(io.StringIO(rep.to_csv()))
        assert int(total["activation_bytes"]) == rep.activation_bytes
        assert int(total["weight_bytes"]) == rep.weight_bytes
        assert list(rows[0]) == ["layer", "kind", "out_elements", "act_bits", "activation_bytes", "params",
                                 "weight_bits", "weight_bytes"]
        assert rows[0]["layer"] == "-1"
        assert sum(int(r["activation_bytes"]) for r in rows) == rep.activation_bytes
        assert sum(int(r["weight_bytes"]) for r in rows) == rep.weight_bytes
        assert json.loads(rep.to_json())["phase"] == "training"

    def test_bad_batch(self):
        with pytest.raises(ValueError):
            memory_footprint(fc_net(2, 2), 0)
