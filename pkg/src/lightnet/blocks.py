"""Composite layers: squeeze-excite gating, the inverted-residual
bottleneck (bneck), and the streamlined classifier head, plus the
pre-streamlining head layout kept as a cost-comparison reference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .arch import LayerSpec, scaled_width
from .errors import ShapeError, ValidationError
from .tensor import (
    BatchNormState,
    ConvParams,
    Tensor,
    activation,
    add,
    avg_pool2d,
    batch_norm,
    conv2d,
    dense,
    global_avg_pool,
    mul,
    reshape,
)


def kaiming_normal(rng: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    """Fan-in-scaled Gaussian init (std = sqrt(2/fan_in))."""
    std = math.sqrt(2.0 / fan_in)
    return Tensor(rng.standard_normal(shape) * std, requires_grad=True, dtype=dtype)


class Layer:
    """Composable network piece: a forward pass plus parameter iteration.

    ``params()`` yields (name, tensor, weight_decay_eligible); only conv
    and dense weight matrices are decay-eligible.
    """

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def params(self) -> list[tuple[str, Tensor, bool]]:
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return []

    def children(self) -> list[tuple[str, "Layer"]]:
        return []

    def named_parameters(self, prefix: str = ""):
        for name, t, decay in self.params():
            yield prefix + name, t, decay
        for cname, child in self.children():
            yield from child.named_parameters(prefix + cname + ".")

    def named_buffers(self, prefix: str = ""):
        for name, arr in self.buffers():
            yield prefix + name, arr
        for cname, child in self.children():
            yield from child.named_buffers(prefix + cname + ".")

    def set_training(self, training: bool) -> None:
        for _, child in self.children():
            child.set_training(training)


class BatchNorm(Layer):
    def __init__(self, channels: int, dtype=np.float32):
        self.state = BatchNormState.create(channels, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return batch_norm(x, self.state)

    def params(self):
        return [("gamma", self.state.gamma, False), ("beta", self.state.beta, False)]

    def buffers(self):
        return [("running_mean", self.state.running_mean),
                ("running_var", self.state.running_var)]

    def set_training(self, training: bool) -> None:
        self.state.training = training


class ConvBNAct(Layer):
    """Convolution with same-padding, optional batch norm, optional activation.

    Bias is present exactly when batch norm is absent.
    """

    def __init__(self, rng, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, groups: int = 1, bn: bool = True,
                 act: str | None = None, dtype=np.float32):
        self.conv_params = ConvParams(
            in_channels=in_channels, out_channels=out_channels,
            kernel_h=kernel, kernel_w=kernel, stride=stride,
            padding=(kernel - 1) // 2, groups=groups,
        )
        fan_in = (in_channels // groups) * kernel * kernel
        self.weight = kaiming_normal(
            rng, (out_channels, in_channels // groups, kernel, kernel), fan_in, dtype
        )
        self.bias = None if bn else Tensor(
            np.zeros(out_channels), requires_grad=True, dtype=dtype
        )
        self.bn = BatchNorm(out_channels, dtype) if bn else None
        self.act = act

    def forward(self, x: Tensor) -> Tensor:
        y = conv2d(x, self.weight, self.bias, params=self.conv_params)
        if self.bn is not None:
            y = self.bn.forward(y)
        if self.act is not None:
            y = activation(y, self.act)
        return y

    def params(self):
        out = [("weight", self.weight, True)]
        if self.bias is not None:
            out.append(("bias", self.bias, False))
        return out

    def children(self):
        return [("bn", self.bn)] if self.bn is not None else []


class DenseLayer(Layer):
    def __init__(self, rng, in_features: int, out_features: int,
                 act: str | None = None, dtype=np.float32):
        self.weight = kaiming_normal(rng, (in_features, out_features), in_features, dtype)
        self.bias = Tensor(np.zeros(out_features), requires_grad=True, dtype=dtype)
        self.act = act

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim == 4:
            x = reshape(x, (x.shape[0], x.shape[1] * x.shape[2] * x.shape[3]))
        y = dense(x, self.weight, self.bias)
        if self.act is not None:
            y = activation(y, self.act)
        return y

    def params(self):
        return [("weight", self.weight, True), ("bias", self.bias, False)]


class GlobalPool(Layer):
    def forward(self, x: Tensor) -> Tensor:
        return global_avg_pool(x)


class WindowedAvgPool(Layer):
    def __init__(self, kernel: int, stride: int):
        self.kernel = kernel
        self.stride = stride

    def forward(self, x: Tensor) -> Tensor:
        return avg_pool2d(x, self.kernel, self.stride)


# ---------------------------------------------------------------------------
# Squeeze-and-excite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SEConfig:
    """Channel-attention geometry: hidden width is channels/reduction, rounded up."""

    channels: int
    reduction: int = 4

    def __post_init__(self):
        if self.channels < 1 or self.reduction < 1:
            raise ValidationError("SEConfig channels and reduction must be positive")

    @property
    def hidden(self) -> int:
        return max(1, -(-self.channels // self.reduction))


class SqueezeExcite(Layer):
    """Global pool -> FC bottleneck -> hard-sigmoid gate -> per-channel scale.

    Gates live in [0, 1], so each output channel is a damped copy of the
    corresponding input channel.
    """

    def __init__(self, rng, cfg: SEConfig, dtype=np.float32):
        self.cfg = cfg
        c, h = cfg.channels, cfg.hidden
        self.w1 = kaiming_normal(rng, (c, h), c, dtype)
        self.b1 = Tensor(np.zeros(h), requires_grad=True, dtype=dtype)
        self.w2 = kaiming_normal(rng, (h, c), h, dtype)
        self.b2 = Tensor(np.zeros(c), requires_grad=True, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        n, c = x.shape[0], x.shape[1]
        if c != self.cfg.channels:
            raise ShapeError(
                f"squeeze-excite built for {self.cfg.channels} channels, input has {c}"
            )
        squeezed = reshape(global_avg_pool(x), (n, c))
        z = activation(dense(squeezed, self.w1, self.b1), "relu")
        gate = activation(dense(z, self.w2, self.b2), "hard_sigmoid")
        return mul(x, reshape(gate, (n, c, 1, 1)))

    def params(self):
        return [("fc1.weight", self.w1, True), ("fc1.bias", self.b1, False),
                ("fc2.weight", self.w2, True), ("fc2.bias", self.b2, False)]


# ---------------------------------------------------------------------------
# Bneck
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BneckSpec:
    """Inverted-residual bottleneck geometry.

    The projection conv is linear (no nonlinearity), and a skip connection
    exists exactly when stride == 1 and in_channels == out_channels.
    """

    in_channels: int
    exp_channels: int
    out_channels: int
    kernel: int
    stride: int
    use_se: bool
    nonlinearity: str

    def __post_init__(self):
        if min(self.in_channels, self.exp_channels, self.out_channels) < 1:
            raise ValidationError("bneck channel counts must be positive")
        if self.kernel not in (3, 5):
            raise ValidationError(f"bneck kernel must be 3 or 5, got {self.kernel}")
        if self.stride not in (1, 2):
            raise ValidationError(f"bneck stride must be 1 or 2, got {self.stride}")
        if self.nonlinearity not in ("relu", "h_swish"):
            raise ValidationError(
                f"bneck nonlinearity must be relu or h_swish, got {self.nonlinearity!r}"
            )

    @property
    def has_residual(self) -> bool:
        return self.stride == 1 and self.in_channels == self.out_channels


class Bneck(Layer):
    """Expand (1x1) -> depthwise KxK -> optional SE -> linear project (1x1).

    The expansion conv is omitted entirely when exp_channels equals
    in_channels (the stem-adjacent block).
    """

    def __init__(self, rng, spec: BneckSpec, dtype=np.float32):
        self.spec = spec
        nl = spec.nonlinearity
        self.expand = None
        if spec.exp_channels != spec.in_channels:
            self.expand = ConvBNAct(rng, spec.in_channels, spec.exp_channels, 1,
                                    act=nl, dtype=dtype)
        self.depthwise = ConvBNAct(rng, spec.exp_channels, spec.exp_channels,
                                   spec.kernel, stride=spec.stride,
                                   groups=spec.exp_channels, act=nl, dtype=dtype)
        self.se = None
        if spec.use_se:
            self.se = SqueezeExcite(rng, SEConfig(spec.exp_channels), dtype=dtype)
        # Linear bottleneck: projection carries no activation.
        self.project = ConvBNAct(rng, spec.exp_channels, spec.out_channels, 1,
                                 act=None, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.spec.in_channels:
            raise ShapeError(
                f"bneck expects {self.spec.in_channels} input channels, got {x.shape[1]}"
            )
        y = x
        if self.expand is not None:
            y = self.expand.forward(y)
        y = self.depthwise.forward(y)
        if self.se is not None:
            y = self.se.forward(y)
        y = self.project.forward(y)
        if self.spec.has_residual:
            y = add(y, x)
        return y

    def children(self):
        out = []
        if self.expand is not None:
            out.append(("expand", self.expand))
        out.append(("depthwise", self.depthwise))
        if self.se is not None:
            out.append(("se", self.se))
        out.append(("project", self.project))
        return out


# ---------------------------------------------------------------------------
# Classifier heads
# ---------------------------------------------------------------------------

class EfficientLastStage(Layer):
    """Streamlined head: widen (1x1+BN+h-swish), pool to 1x1, then run the
    big expansion and classifier convs on a single spatial position."""

    def __init__(self, rng, in_channels: int, num_classes: int,
                 width_multiplier: float = 1.0, dtype=np.float32):
        mid = scaled_width(960, width_multiplier)
        penult = scaled_width(1280, width_multiplier)
        self.widen = ConvBNAct(rng, in_channels, mid, 1, act="h_swish", dtype=dtype)
        self.pool = GlobalPool()
        self.expand = ConvBNAct(rng, mid, penult, 1, bn=False, act="h_swish", dtype=dtype)
        self.classify = ConvBNAct(rng, penult, num_classes, 1, bn=False, act=None, dtype=dtype)
        self.num_classes = num_classes

    def forward(self, x: Tensor) -> Tensor:
        y = self.widen.forward(x)
        y = self.pool.forward(y)
        y = self.expand.forward(y)
        y = self.classify.forward(y)
        return reshape(y, (y.shape[0], self.num_classes))

    def children(self):
        return [("widen", self.widen), ("expand", self.expand),
                ("classify", self.classify)]


def efficient_last_stage_rows(width_multiplier: float = 1.0,
                              num_classes: int = 1000) -> tuple[LayerSpec, ...]:
    """The streamlined head as analyzable rows (4 layers)."""
    mid = scaled_width(960, width_multiplier)
    penult = scaled_width(1280, width_multiplier)
    return (
        LayerSpec(op="conv2d", out=mid, kernel=1, stride=1, nl="h_swish", bn=True),
        LayerSpec(op="pool", kernel=7, stride=1),
        LayerSpec(op="conv2d", out=penult, kernel=1, stride=1, nl="h_swish", bn=False),
        LayerSpec(op="conv2d", out=num_classes, kernel=1, stride=1, nl="none", bn=False),
    )


def original_last_stage_rows(width_multiplier: float = 1.0,
                             num_classes: int = 1000) -> tuple[LayerSpec, ...]:
    """The pre-streamlining head (6 layers), kept for cost comparison.

    Runs the width expansion at full spatial extent and keeps the depthwise
    + bottleneck pair that the streamlined head deletes.
    """
    mid = scaled_width(960, width_multiplier)
    narrow = scaled_width(320, width_multiplier)
    penult = scaled_width(1280, width_multiplier)
    return (
        LayerSpec(op="conv2d", out=mid, kernel=1, stride=1, nl="h_swish", bn=True),
        LayerSpec(op="dw", out=mid, kernel=3, stride=1, nl="h_swish", bn=True),
        LayerSpec(op="conv2d", out=narrow, kernel=1, stride=1, nl="none", bn=True),
        LayerSpec(op="conv2d", out=penult, kernel=1, stride=1, nl="h_swish", bn=True),
        LayerSpec(op="pool", kernel=7, stride=1),
        LayerSpec(op="conv2d", out=num_classes, kernel=1, stride=1, nl="none", bn=False),
    )
