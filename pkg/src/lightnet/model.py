"""Materialize an ArchSpec into an executable, trainable model."""
from __future__ import annotations

import hashlib

import numpy as np

from .arch import ArchSpec, LayerSpec, layer_output_shape
from .blocks import (
    Bneck,
    BneckSpec,
    ConvBNAct,
    DenseLayer,
    GlobalPool,
    Layer,
    WindowedAvgPool,
)
from .errors import ShapeError, ValidationError
from .tensor import Tensor, reshape


class Model:
    """Parameter set plus the forward/backward graph for one ArchSpec."""

    def __init__(self, arch: ArchSpec, layers: list[tuple[str, Layer]], dtype):
        self.arch = arch
        self.layers = layers
        self.dtype = dtype
        self.training = True

    @property
    def num_classes(self) -> int:
        return self.arch.num_classes

    @property
    def in_channels(self) -> int:
        return self.arch.in_channels

    def set_training(self, training: bool) -> None:
        self.training = training
        for _, layer in self.layers:
            layer.set_training(training)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ShapeError(f"model input must be 4-D (N,C,H,W), got {x.ndim}-D")
        if x.shape[1] != self.arch.in_channels:
            raise ShapeError(
                f"model expects {self.arch.in_channels} input channels, got {x.shape[1]}"
            )
        y = x
        for _, layer in self.layers:
            y = layer.forward(y)
        if y.ndim == 4:
            if y.shape[2] != 1 or y.shape[3] != 1:
                raise ShapeError(
                    f"final layer left a {y.shape[2]}x{y.shape[3]} spatial extent; "
                    "architectures must end with a pool or dense layer"
                )
            y = reshape(y, (y.shape[0], y.shape[1]))
        return y

    def named_parameters(self) -> list[tuple[str, Tensor, bool]]:
        out = []
        for lname, layer in self.layers:
            out.extend(layer.named_parameters(lname + "."))
        return out

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for lname, layer in self.layers:
            out.extend(layer.named_buffers(lname + "."))
        return out

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Every parameter and running statistic, in a stable order."""
        out = [(name, t.data) for name, t, _ in self.named_parameters()]
        out.extend(self.named_buffers())
        return out

    def load_state_arrays(self, values: dict[str, np.ndarray]) -> None:
        expected = self.state_arrays()
        expected_names = [name for name, _ in expected]
        missing = [n for n in expected_names if n not in values]
        extra = [n for n in values if n not in set(expected_names)]
        if missing or extra:
            raise ValidationError(
                f"state mismatch: missing {missing[:3]}, unexpected {extra[:3]}"
            )
        for name, arr in expected:
            new = values[name]
            if tuple(new.shape) != tuple(arr.shape):
                raise ShapeError(
                    f"state tensor {name!r} has shape {tuple(new.shape)}, expected {tuple(arr.shape)}"
                )
            arr[...] = new.astype(arr.dtype)

    def zero_grads(self) -> None:
        for _, t, _ in self.named_parameters():
            t.grad = None

    def param_hash(self) -> str:
        h = hashlib.sha256()
        for name, arr in self.state_arrays():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def parameter_count(self) -> int:
        return sum(t.data.size for _, t, _ in self.named_parameters())


def _layer_title(i: int, row: LayerSpec) -> str:
    return f"{i:02d}_{row.op}"


def build_model(spec: ArchSpec, seed: int = 0, dtype=np.float32) -> Model:
    """Instantiate parameters for ``spec`` deterministically from ``seed``.

    Conv/dense weights are fan-in-scaled Gaussians, biases zero, batch norm
    gamma 1 / beta 0. Raises when consecutive rows disagree on channel
    counts, naming both layers.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    layers: list[tuple[str, Layer]] = []
    cur = spec.in_channels
    prev_title = "input"
    for i, row in enumerate(spec.layers):
        title = _layer_title(i, row)
        if row.input_from is not None:
            raise ValidationError(
                f"{title}: side-branch rows are cost-model-only and cannot be built"
            )
        if row.in_ch is not None and row.in_ch != cur:
            raise ValidationError(
                f"inconsistent channel chaining: {prev_title} outputs {cur} channels "
                f"but {title} declares {row.in_ch} input channels"
            )
        if row.op == "conv2d":
            layer: Layer = ConvBNAct(rng, cur, row.out, row.kernel, row.stride,
                                     bn=row.bn,
                                     act=row.nl if row.nl != "none" else None,
                                     dtype=dtype)
            cur = row.out
        elif row.op == "dw":
            if row.out != cur:
                raise ValidationError(
                    f"{title}: depthwise rows must preserve the channel count "
                    f"({cur} in, {row.out} out)"
                )
            layer = ConvBNAct(rng, cur, cur, row.kernel, row.stride, groups=cur,
                              bn=row.bn, act=row.nl if row.nl != "none" else None,
                              dtype=dtype)
        elif row.op == "bneck":
            layer = Bneck(rng, BneckSpec(
                in_channels=cur, exp_channels=row.exp, out_channels=row.out,
                kernel=row.kernel, stride=row.stride, use_se=row.se,
                nonlinearity=row.nl,
            ), dtype=dtype)
            cur = row.out
        elif row.op == "pool":
            layer = GlobalPool() if row.stride == 1 else WindowedAvgPool(row.kernel, row.stride)
        elif row.op == "dense":
            # Feature count depends on the spatial extent at this depth.
            shape = (spec.in_channels, spec.input_resolution, spec.input_resolution)
            for r in spec.layers[:i]:
                shape = layer_output_shape(r, shape)
            feats = shape[0] * shape[1] * shape[2]
            layer = DenseLayer(rng, feats, row.out,
                               act=row.nl if row.nl != "none" else None, dtype=dtype)
            cur = row.out
        else:
            raise ValidationError(f"{title}: unknown op {row.op!r}")
        layers.append((title, layer))
        prev_title = title
    return Model(spec, layers, dtype)
