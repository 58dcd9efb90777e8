"""Architecture fidelity, width scaling, the model builder, and the
architecture file format."""
import dataclasses
import json
import math
import os

import numpy as np
import pytest

from lightnet.arch import (
    LayerSpec,
    arch_to_dict,
    builtin_arch,
    mobilenetv3_large_spec,
    parse_arch_dict,
    parse_arch_file,
    resnet50_cost_spec,
    scaled_width,
    serialize_arch,
)
from lightnet.errors import ValidationError
from lightnet.model import build_model
from lightnet.tensor import Tensor

GOLDEN = os.path.join(os.path.dirname(__file__), "golden",
                      "mobilenetv3_large_rows.json")
ARCH_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "arch")


def _row_tuple(row: LayerSpec):
    if row.op == "conv2d":
        op = f"conv2d_{row.kernel}x{row.kernel}" + ("" if row.bn else "_nbn")
    elif row.op == "bneck":
        op = f"bneck_{row.kernel}x{row.kernel}_dw"
    else:
        op = f"pool_{row.kernel}x{row.kernel}"
    return [op, row.se, row.nl, row.stride]


class TestCanonicalRows:
    def test_golden_row_for_row(self):
        with open(GOLDEN, encoding="utf-8") as fh:
            golden = json.load(fh)["rows"]
        spec = mobilenetv3_large_spec(in_channels=3, num_classes=1000)
        assert len(spec.layers) == 20
        actual = [_row_tuple(r) for r in spec.layers]
        assert actual == golden

    def test_se_rows_one_indexed(self):
        spec = mobilenetv3_large_spec(in_channels=3, num_classes=1000)
        se_rows = [i + 1 for i, r in enumerate(spec.layers) if r.se]
        assert se_rows == [5, 6, 7, 12, 13, 14, 15, 16]

    def test_h_swish_first_appearances(self):
        spec = mobilenetv3_large_spec(in_channels=3, num_classes=1000)
        assert spec.layers[0].op == "conv2d" and spec.layers[0].nl == "h_swish"
        first_hs_bneck = next(i + 1 for i, r in enumerate(spec.layers)
                              if r.op == "bneck" and r.nl == "h_swish")
        assert first_hs_bneck == 8

    def test_stride_sequence(self):
        spec = mobilenetv3_large_spec(in_channels=3, num_classes=1000)
        assert [r.stride for r in spec.layers] == [
            2, 1, 2, 1, 2, 1, 1, 2, 1, 1, 1, 1, 1, 2, 1, 1, 1, 1, 1, 1
        ]

    def test_structure_counts(self):
        spec = mobilenetv3_large_spec(in_channels=1, num_classes=10)
        ops = [r.op for r in spec.layers]
        assert ops.count("bneck") == 15
        assert ops.count("conv2d") == 4  # one stem conv, three pointwise convs
        assert ops.count("pool") == 1
        assert spec.layers[0].out == 16
        nbn = [r for r in spec.layers if r.op == "conv2d" and not r.bn]
        assert len(nbn) == 2


class TestWidthScaling:
    def test_round_up_to_multiple_of_eight(self):
        # Independent arithmetic: halve, then ceil to the next multiple of 8.
        def by_hand(v, m):
            return max(8, int(math.ceil(v * m / 8.0)) * 8)

        spec = mobilenetv3_large_spec(in_channels=1, num_classes=10,
                                      width_multiplier=0.5)
        assert spec.layers[0].out == 8
        base = mobilenetv3_large_spec(in_channels=1, num_classes=10)
        for half, full in zip(spec.layers, base.layers):
            if full.op in ("conv2d", "bneck") and full.out != 10:
                assert half.out == by_hand(full.out, 0.5)
            if full.op == "bneck":
                assert half.exp == by_hand(full.exp, 0.5)

    def test_classifier_width_not_scaled(self):
        spec = mobilenetv3_large_spec(in_channels=1, num_classes=10,
                                      width_multiplier=0.5)
        assert spec.layers[-1].out == 10

    def test_multiplier_validation(self):
        with pytest.raises(ValidationError, match="positive"):
            mobilenetv3_large_spec(in_channels=1, num_classes=10,
                                   width_multiplier=0.0)
        with pytest.raises(ValidationError, match="positive"):
            scaled_width(64, -1.0)

    def test_identity_at_full_width(self):
        for v in (16, 24, 72, 120, 184, 200, 240, 480, 672, 960, 1280):
            assert scaled_width(v, 1.0) == v


class TestBuildModel:
    def test_same_seed_bitwise_identical(self):
        spec = mobilenetv3_large_spec(in_channels=1, num_classes=10,
                                      width_multiplier=0.25)
        a = build_model(spec, seed=11)
        b = build_model(spec, seed=11)
        assert a.param_hash() == b.param_hash()
        c = build_model(spec, seed=12)
        assert a.param_hash() != c.param_hash()

    def test_default_parameter_count_band(self):
        spec = mobilenetv3_large_spec(in_channels=3, num_classes=1000)
        model = build_model(spec, seed=0)
        assert 4.0e6 <= model.parameter_count() <= 6.5e6

    def test_forward_grayscale_64_full_width(self):
        # Global pooling makes 64x64 legal even though the layout is
        # described at 224.
        spec = mobilenetv3_large_spec(in_channels=1, num_classes=10)
        model = build_model(spec, seed=0)
        out = model.forward(Tensor(np.random.default_rng(0).standard_normal(
            (1, 1, 64, 64)).astype(np.float32)))
        assert out.shape == (1, 10)
        assert np.all(np.isfinite(out.data))

    def test_resolution_independent_forward(self):
        spec = mobilenetv3_large_spec(in_channels=1, num_classes=4,
                                      width_multiplier=0.25)
        model = build_model(spec, seed=0)
        model.set_training(False)  # single-chip inference: batch stats undefined
        rng = np.random.default_rng(1)
        for hw in (32, 48, 96):
            out = model.forward(Tensor(rng.standard_normal(
                (1, 1, hw, hw)).astype(np.float32)))
            assert out.shape == (1, 4)

    def test_inconsistent_chaining_names_both_layers(self):
        spec = mobilenetv3_large_spec(in_channels=1, num_classes=10)
        bad_rows = list(spec.layers)
        bad_rows[3] = dataclasses.replace(bad_rows[3], in_ch=999)
        bad = dataclasses.replace(spec, layers=tuple(bad_rows))
        with pytest.raises(ValidationError) as exc:
            build_model(bad, seed=0)
        assert "02_bneck" in str(exc.value) and "03_bneck" in str(exc.value)

    def test_init_statistics(self):
        spec = mobilenetv3_large_spec(in_channels=3, num_classes=100)
        model = build_model(spec, seed=0)
        named = dict((n, t) for n, t, _ in model.named_parameters())
        stem = named["00_conv2d.weight"]
        fan_in = 3 * 3 * 3
        assert stem.data.std() == pytest.approx(math.sqrt(2.0 / fan_in), rel=0.25)
        assert np.array_equal(named["01_bneck.depthwise.bn.gamma"].data,
                              np.ones(16, dtype=np.float32))
        assert np.array_equal(named["18_conv2d.bias"].data,
                              np.zeros(1280, dtype=np.float32))

    def test_cost_only_resnet_not_buildable(self):
        with pytest.raises(ValidationError, match="cost-model-only"):
            build_model(resnet50_cost_spec(), seed=0)


class TestResnetSpec:
    def test_conv_dense_layer_count_is_54(self):
        spec = resnet50_cost_spec()
        assert sum(1 for r in spec.layers if r.op in ("conv2d", "dense")) == 54

    def test_four_projection_shortcuts(self):
        spec = resnet50_cost_spec()
        assert sum(1 for r in spec.layers if r.input_from is not None) == 4

    def test_not_serializable(self):
        with pytest.raises(ValidationError, match="side-branch"):
            serialize_arch(resnet50_cost_spec())


class TestArchFiles:
    def test_round_trip_equality(self, tmp_path):
        spec = mobilenetv3_large_spec(in_channels=1, num_classes=10,
                                      width_multiplier=0.5,
                                      input_resolution=64)
        path = tmp_path / "arch.json"
        serialize_arch(spec, path)
        again = parse_arch_file(path)
        assert again == spec
        assert serialize_arch(again) == serialize_arch(spec)

    def test_stride_zero_rejected(self):
        doc = arch_to_dict(mobilenetv3_large_spec(in_channels=1, num_classes=10))
        doc["layers"][0]["stride"] = 0
        with pytest.raises(ValidationError, match="stride"):
            parse_arch_dict(doc)

    def test_unknown_op_rejected_with_layer_index(self):
        doc = arch_to_dict(mobilenetv3_large_spec(in_channels=1, num_classes=10))
        doc["layers"][2]["op"] = "transformer"
        with pytest.raises(ValidationError, match="layer 2"):
            parse_arch_dict(doc)

    def test_unknown_field_rejected(self):
        doc = arch_to_dict(mobilenetv3_large_spec(in_channels=1, num_classes=10))
        doc["layers"][0]["dilation"] = 2
        with pytest.raises(ValidationError, match="dilation"):
            parse_arch_dict(doc)
        doc2 = arch_to_dict(mobilenetv3_large_spec(in_channels=1, num_classes=10))
        doc2["optimizer"] = "sgd"
        with pytest.raises(ValidationError, match="optimizer"):
            parse_arch_dict(doc2)

    def test_missing_field_identified(self):
        doc = arch_to_dict(mobilenetv3_large_spec(in_channels=1, num_classes=10))
        del doc["layers"][1]["kernel"]
        with pytest.raises(ValidationError, match="kernel"):
            parse_arch_dict(doc)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError, match="not found"):
            parse_arch_file(tmp_path / "nope.json")

    def test_user_arch_file_parses_and_builds(self):
        spec = parse_arch_file(os.path.join(ARCH_DIR, "a_convnets.json"))
        assert spec.name == "a-convnets"
        assert len(spec.layers) == 9
        model = build_model(spec, seed=0)
        out = model.forward(Tensor(np.random.default_rng(0).standard_normal(
            (1, 1, 88, 88)).astype(np.float32)))
        assert out.shape == (1, 10)

    def test_builtin_resolution(self):
        assert builtin_arch("mobilenetv3-large").name == "mobilenetv3-large"
        assert builtin_arch("resnet50").name == "resnet50"
        with pytest.raises(ValidationError, match="unknown builtin"):
            builtin_arch("vgg16")
