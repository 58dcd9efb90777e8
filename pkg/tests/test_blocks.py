"""Squeeze-excite gating, bottleneck structure, and the classifier heads."""
import numpy as np
import pytest

from lightnet.blocks import (
    Bneck,
    BneckSpec,
    EfficientLastStage,
    SEConfig,
    SqueezeExcite,
    efficient_last_stage_rows,
    original_last_stage_rows,
)
from lightnet.errors import ShapeError, ValidationError
from lightnet.tensor import Tensor


def t64(arr):
    return Tensor(np.asarray(arr), dtype=np.float64)


class TestSEConfig:
    def test_hidden_width_rounds_up(self):
        assert SEConfig(16).hidden == 4
        assert SEConfig(10).hidden == 3
        assert SEConfig(3).hidden == 1
        assert SEConfig(1).hidden == 1

    def test_rejects_nonpositive(self):
        with pytest.raises(ValidationError):
            SEConfig(0)


class TestSqueezeExcite:
    def test_zero_weights_gate_is_half(self, rng):
        se = SqueezeExcite(rng, SEConfig(4), dtype=np.float64)
        for _, t, _ in se.named_parameters():
            t.data[...] = 0.0
        x = t64(rng.standard_normal((2, 4, 5, 5)))
        out = se.forward(x)
        assert np.allclose(out.data, 0.5 * x.data, atol=1e-15)

    def test_identical_channels_with_symmetric_weights_gate_equally(self, rng):
        se = SqueezeExcite(rng, SEConfig(2), dtype=np.float64)
        se.w1.data[...] = 0.7  # both channels feed the hidden unit equally
        se.b1.data[...] = 0.0
        se.w2.data[...] = 0.3  # hidden unit feeds both gates equally
        se.b2.data[...] = 0.0
        chan = rng.standard_normal((1, 1, 4, 4))
        x = t64(np.concatenate([chan, chan], axis=1))
        out = se.forward(x)
        assert np.allclose(out.data[0, 0], out.data[0, 1], atol=1e-15)

    def test_gates_bounded_and_contractive(self, rng):
        se = SqueezeExcite(rng, SEConfig(8), dtype=np.float64)
        for _ in range(20):
            x = rng.standard_normal((2, 8, 6, 6)) * rng.uniform(0.1, 10)
            out = se.forward(t64(x)).data
            with np.errstate(invalid="ignore", divide="ignore"):
                gates = np.where(x != 0, out / x, 0.5)
            assert gates.min() >= -1e-12 and gates.max() <= 1 + 1e-12
            assert np.all(np.abs(out) <= np.abs(x) + 1e-12)

    def test_channel_mismatch_rejected(self, rng):
        se = SqueezeExcite(rng, SEConfig(4), dtype=np.float64)
        with pytest.raises(ShapeError, match="channels"):
            se.forward(t64(rng.standard_normal((1, 6, 4, 4))))


class TestBneckSpec:
    def test_residual_rule(self):
        base = dict(exp_channels=32, kernel=3, use_se=False, nonlinearity="relu")
        assert BneckSpec(in_channels=16, out_channels=16, stride=1, **base).has_residual
        assert not BneckSpec(in_channels=16, out_channels=16, stride=2, **base).has_residual
        assert not BneckSpec(in_channels=16, out_channels=24, stride=1, **base).has_residual

    def test_invalid_kernel_and_stride(self):
        with pytest.raises(ValidationError):
            BneckSpec(8, 16, 8, kernel=4, stride=1, use_se=False, nonlinearity="relu")
        with pytest.raises(ValidationError):
            BneckSpec(8, 16, 8, kernel=3, stride=3, use_se=False, nonlinearity="relu")


TABLE_PATTERNS = [
    (3, 1, False, "relu"), (3, 2, False, "relu"),
    (5, 2, True, "relu"), (5, 1, True, "relu"),
    (3, 2, False, "h_swish"), (3, 1, False, "h_swish"),
    (3, 1, True, "h_swish"), (5, 2, True, "h_swish"),
    (5, 1, True, "h_swish"),
]


class TestBneck:
    def test_stride_two_halves_spatial_and_drops_residual(self, rng):
        spec = BneckSpec(8, 16, 8, kernel=3, stride=2, use_se=False,
                         nonlinearity="relu")
        block = Bneck(rng, spec, dtype=np.float64)
        out = block.forward(t64(rng.standard_normal((1, 8, 9, 9))))
        assert out.shape == (1, 8, 5, 5)  # floor((9 + 2 - 3) / 2) + 1
        assert not spec.has_residual

    def test_zero_weights_with_identity_bn_pass_input_through(self, rng):
        spec = BneckSpec(4, 8, 4, kernel=3, stride=1, use_se=False,
                         nonlinearity="relu")
        block = Bneck(rng, spec, dtype=np.float64)
        for name, t, _ in block.named_parameters():
            if name.endswith(".weight"):
                t.data[...] = 0.0
        block.set_training(False)
        x = t64(rng.standard_normal((2, 4, 6, 6)))
        out = block.forward(x)
        assert np.allclose(out.data, x.data, atol=1e-12)

    def test_projection_is_linear_for_every_pattern(self, rng):
        # The bottleneck projection must carry no activation (linear
        # bottleneck), and SE must sit between depthwise and projection.
        for kernel, stride, use_se, nl in TABLE_PATTERNS:
            spec = BneckSpec(8, 16, 8, kernel=kernel, stride=stride,
                             use_se=use_se, nonlinearity=nl)
            block = Bneck(rng, spec, dtype=np.float64)
            assert block.project.act is None
            names = [name for name, _ in block.children()]
            assert names[-1] == "project"
            if use_se:
                assert names.index("se") == names.index("depthwise") + 1

    def test_expansion_omitted_when_widths_match(self, rng):
        spec = BneckSpec(16, 16, 16, kernel=3, stride=1, use_se=False,
                         nonlinearity="relu")
        block = Bneck(rng, spec, dtype=np.float64)
        assert block.expand is None

    def test_channel_mismatch_rejected(self, rng):
        spec = BneckSpec(8, 16, 8, kernel=3, stride=1, use_se=False,
                         nonlinearity="relu")
        block = Bneck(rng, spec, dtype=np.float64)
        with pytest.raises(ShapeError, match="channels"):
            block.forward(t64(rng.standard_normal((1, 4, 6, 6))))


class TestLastStages:
    def test_logits_shape_for_any_resolution(self, rng):
        head = EfficientLastStage(rng, 16, 7, width_multiplier=0.05,
                                  dtype=np.float64)
        for hw in (4, 7, 11):
            out = head.forward(t64(rng.standard_normal((2, 16, hw, hw))))
            assert out.shape == (2, 7)
            assert np.all(np.isfinite(out.data))

    def test_wide_conv_runs_after_pooling(self):
        rows = efficient_last_stage_rows()
        assert [r.op for r in rows] == ["conv2d", "pool", "conv2d", "conv2d"]
        assert rows[1].stride == 1  # global pool
        assert rows[2].out == 1280 and rows[2].bn is False

    def test_original_fragment_has_six_layers(self):
        rows = original_last_stage_rows()
        assert len(rows) == 6
        assert [r.op for r in rows] == ["conv2d", "dw", "conv2d", "conv2d",
                                        "pool", "conv2d"]
        assert rows[0].out == 960 and rows[2].out == 320 and rows[3].out == 1280

    def test_head_widths_follow_multiplier(self, rng):
        head = EfficientLastStage(rng, 8, 5, width_multiplier=0.25,
                                  dtype=np.float64)
        assert head.widen.conv_params.out_channels == 240
        assert head.expand.conv_params.out_channels == 320
