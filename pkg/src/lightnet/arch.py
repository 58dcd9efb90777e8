"""Declarative architecture descriptions and builders.

An ``ArchSpec`` is an ordered list of ``LayerSpec`` rows plus input
metadata. The canonical MobileNetV3-Large layout is emitted row-for-row
(operator, SE flag, nonlinearity, stride) with the canonical channel and
expansion widths; a ResNet-50 layout is provided for cost comparison only.

File format: JSON with top-level fields name, in_channels,
input_resolution, num_classes, width_multiplier, layers[]; each layer
object carries op, kernel, stride, se, nl, exp, out, bn. Unknown fields are
rejected. Convolutions are same-padded (padding = (kernel-1)//2); pool rows
with stride 1 are global average pools, stride > 1 windowed average pools.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import ValidationError

LAYER_OPS = ("conv2d", "bneck", "pool", "dense")
# "dw" (bare depthwise conv) is valid in programmatic specs (cost fragments)
# but is not part of the file schema.
INTERNAL_OPS = LAYER_OPS + ("dw",)
NONLINEARITIES = ("relu", "h_swish", "none")


@dataclass(frozen=True)
class LayerSpec:
    """One architecture row.

    ``in_ch`` is the declared input channel count; builders fill it and
    ``build_model`` cross-checks it against the chained value. It is not
    part of the file format (parsing re-derives it). ``input_from`` routes
    this row's input to the output of an earlier row (side branches in
    cost-only graphs); such rows cannot be serialized or built.
    """

    op: str
    out: int = 0
    kernel: int = 1
    stride: int = 1
    se: bool = False
    nl: str = "none"
    exp: int | None = None
    bn: bool = True
    in_ch: int | None = None
    input_from: int | None = None

    def validate(self, idx: int) -> None:
        where = f"layer {idx}"
        if self.op not in INTERNAL_OPS:
            raise ValidationError(f"{where}: unknown op {self.op!r}")
        if self.nl not in NONLINEARITIES:
            raise ValidationError(f"{where}: unknown nonlinearity {self.nl!r}")
        if self.stride < 1:
            raise ValidationError(f"{where}: stride must be >= 1, got {self.stride}")
        if self.kernel < 1:
            raise ValidationError(f"{where}: kernel must be >= 1, got {self.kernel}")
        if self.op in ("conv2d", "dense", "bneck", "dw") and self.out < 1:
            raise ValidationError(f"{where}: out must be >= 1 for op {self.op}, got {self.out}")
        if self.op == "bneck":
            if self.exp is None or self.exp < 1:
                raise ValidationError(f"{where}: bneck requires a positive exp width")
            if self.kernel not in (3, 5):
                raise ValidationError(f"{where}: bneck kernel must be 3 or 5, got {self.kernel}")
            if self.stride not in (1, 2):
                raise ValidationError(f"{where}: bneck stride must be 1 or 2, got {self.stride}")
            if self.nl not in ("relu", "h_swish"):
                raise ValidationError(f"{where}: bneck nonlinearity must be relu or h_swish")
        if self.se and self.op != "bneck":
            raise ValidationError(f"{where}: se flag is only valid on bneck rows")


@dataclass(frozen=True)
class ArchSpec:
    """A whole network as an immutable value."""

    name: str
    in_channels: int
    num_classes: int
    input_resolution: int = 224
    width_multiplier: float = 1.0
    layers: tuple[LayerSpec, ...] = field(default_factory=tuple)

    def validate(self) -> None:
        if self.in_channels < 1:
            raise ValidationError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_resolution < 1:
            raise ValidationError(
                f"input_resolution must be positive, got {self.input_resolution}"
            )
        if self.width_multiplier <= 0:
            raise ValidationError(
                f"width_multiplier must be positive, got {self.width_multiplier}"
            )
        if not self.layers:
            raise ValidationError("architecture has no layers")
        for i, layer in enumerate(self.layers):
            layer.validate(i)
            if layer.input_from is not None and not (0 <= layer.input_from < i):
                raise ValidationError(
                    f"layer {i}: input_from must point to an earlier row, got {layer.input_from}"
                )


def scaled_width(base: int, multiplier: float) -> int:
    """Scale a channel width and round up to a multiple of 8 (minimum 8)."""
    if multiplier <= 0:
        raise ValidationError(f"width multiplier must be positive, got {multiplier}")
    return max(8, 8 * math.ceil(base * multiplier / 8))


# ---------------------------------------------------------------------------
# Canonical MobileNetV3-Large
# ---------------------------------------------------------------------------

# (kernel, exp, out, se, nonlinearity, stride) for the 15 bottleneck rows.
_MOBILENETV3_LARGE_BNECKS = (
    (3, 16, 16, False, "relu", 1),
    (3, 64, 24, False, "relu", 2),
    (3, 72, 24, False, "relu", 1),
    (5, 72, 40, True, "relu", 2),
    (5, 120, 40, True, "relu", 1),
    (5, 120, 40, True, "relu", 1),
    (3, 240, 80, False, "h_swish", 2),
    (3, 200, 80, False, "h_swish", 1),
    (3, 184, 80, False, "h_swish", 1),
    (3, 184, 80, False, "h_swish", 1),
    (3, 480, 112, True, "h_swish", 1),
    (3, 672, 112, True, "h_swish", 1),
    (5, 672, 160, True, "h_swish", 2),
    (5, 960, 160, True, "h_swish", 1),
    (5, 960, 160, True, "h_swish", 1),
)

FIRST_CONV_WIDTH = 16
LAST_CONV_WIDTH = 960
PENULTIMATE_WIDTH = 1280


def mobilenetv3_large_spec(in_channels: int = 1, num_classes: int = 1000,
                           width_multiplier: float = 1.0,
                           input_resolution: int = 224) -> ArchSpec:
    """The 20-row MobileNetV3-Large layout.

    One stem conv, 15 bottlenecks, a 1x1 conv, a global pool, and two
    unnormalized (no batch norm) 1x1 classifier convs. Channel widths scale
    with ``width_multiplier`` and round up to multiples of 8.
    """
    if in_channels not in (1, 3):
        raise ValidationError(f"in_channels must be 1 (grayscale) or 3, got {in_channels}")
    if num_classes < 2:
        raise ValidationError(f"num_classes must be >= 2, got {num_classes}")
    w = width_multiplier
    rows: list[LayerSpec] = []
    cur = in_channels
    first = scaled_width(FIRST_CONV_WIDTH, w)
    rows.append(LayerSpec(op="conv2d", out=first, kernel=3, stride=2,
                          nl="h_swish", bn=True, in_ch=cur))
    cur = first
    for kernel, exp, out, se, nl, stride in _MOBILENETV3_LARGE_BNECKS:
        rows.append(LayerSpec(op="bneck", out=scaled_width(out, w), kernel=kernel,
                              stride=stride, se=se, nl=nl,
                              exp=scaled_width(exp, w), bn=True, in_ch=cur))
        cur = scaled_width(out, w)
    last = scaled_width(LAST_CONV_WIDTH, w)
    rows.append(LayerSpec(op="conv2d", out=last, kernel=1, stride=1,
                          nl="h_swish", bn=True, in_ch=cur))
    rows.append(LayerSpec(op="pool", kernel=7, stride=1, nl="none", in_ch=last))
    penult = scaled_width(PENULTIMATE_WIDTH, w)
    rows.append(LayerSpec(op="conv2d", out=penult, kernel=1, stride=1,
                          nl="h_swish", bn=False, in_ch=last))
    rows.append(LayerSpec(op="conv2d", out=num_classes, kernel=1, stride=1,
                          nl="none", bn=False, in_ch=penult))
    spec = ArchSpec(name="mobilenetv3-large", in_channels=in_channels,
                    num_classes=num_classes, input_resolution=input_resolution,
                    width_multiplier=w, layers=tuple(rows))
    spec.validate()
    return spec


# ---------------------------------------------------------------------------
# ResNet-50 (cost model only)
# ---------------------------------------------------------------------------

def resnet50_cost_spec() -> ArchSpec:
    """Canonical 50-layer bottleneck-residual layout at 224x224x3.

    For analytic parameter/MAdds accounting only: residual adds cost
    nothing, so blocks are flattened into conv rows; each stage's
    projection shortcut is a side-branch row (``input_from``). Not
    buildable or serializable.
    """
    rows: list[LayerSpec] = []
    rows.append(LayerSpec(op="conv2d", out=64, kernel=7, stride=2, nl="relu",
                          bn=True, in_ch=3))
    rows.append(LayerSpec(op="pool", kernel=3, stride=2, in_ch=64))
    cur = 64
    stages = ((3, 64, 256, 1), (4, 128, 512, 2), (6, 256, 1024, 2), (3, 512, 2048, 2))
    for blocks, width, wide, first_stride in stages:
        for b in range(blocks):
            stride = first_stride if b == 0 else 1
            block_input_row = len(rows) - 1
            rows.append(LayerSpec(op="conv2d", out=width, kernel=1, stride=1,
                                  nl="relu", bn=True, in_ch=cur))
            rows.append(LayerSpec(op="conv2d", out=width, kernel=3, stride=stride,
                                  nl="relu", bn=True, in_ch=width))
            rows.append(LayerSpec(op="conv2d", out=wide, kernel=1, stride=1,
                                  nl="none", bn=True, in_ch=width))
            if b == 0:
                rows.append(LayerSpec(op="conv2d", out=wide, kernel=1, stride=stride,
                                      nl="none", bn=True, in_ch=cur,
                                      input_from=block_input_row))
            cur = wide
    rows.append(LayerSpec(op="pool", kernel=7, stride=1, in_ch=cur))
    rows.append(LayerSpec(op="dense", out=1000, in_ch=cur))
    spec = ArchSpec(name="resnet50", in_channels=3, num_classes=1000,
                    input_resolution=224, width_multiplier=1.0, layers=tuple(rows))
    spec.validate()
    return spec


# ---------------------------------------------------------------------------
# Architecture files
# ---------------------------------------------------------------------------

_TOP_FIELDS = ("name", "in_channels", "input_resolution", "num_classes",
               "width_multiplier", "layers")
_LAYER_FIELDS = ("op", "kernel", "stride", "se", "nl", "exp", "out", "bn")


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ValidationError(f"{where}: missing required field {key!r}")
    return obj[key]


def parse_arch_dict(doc: dict, source: str = "<arch>") -> ArchSpec:
    if not isinstance(doc, dict):
        raise ValidationError(f"{source}: top level must be an object")
    for key in doc:
        if key not in _TOP_FIELDS:
            raise ValidationError(f"{source}: unknown top-level field {key!r}")
    layers_doc = _require(doc, "layers", source)
    if not isinstance(layers_doc, list) or not layers_doc:
        raise ValidationError(f"{source}: layers must be a non-empty list")

    rows: list[LayerSpec] = []
    cur = int(_require(doc, "in_channels", source))
    for i, item in enumerate(layers_doc):
        where = f"{source}: layer {i}"
        if not isinstance(item, dict):
            raise ValidationError(f"{where}: must be an object")
        for key in item:
            if key not in _LAYER_FIELDS:
                raise ValidationError(f"{where}: unknown field {key!r}")
        op = _require(item, "op", where)
        if op not in LAYER_OPS:
            raise ValidationError(f"{where}: unknown op {op!r}")
        exp = item.get("exp")
        row = LayerSpec(
            op=op,
            out=int(item.get("out", 0)),
            kernel=int(_require(item, "kernel", where)),
            stride=int(_require(item, "stride", where)),
            se=bool(item.get("se", False)),
            nl=str(item.get("nl", "none")),
            exp=int(exp) if exp is not None else None,
            bn=bool(item.get("bn", True)),
            in_ch=cur,
        )
        row.validate(i)
        rows.append(row)
        if op in ("conv2d", "bneck", "dense"):
            cur = row.out
    spec = ArchSpec(
        name=str(_require(doc, "name", source)),
        in_channels=int(_require(doc, "in_channels", source)),
        num_classes=int(_require(doc, "num_classes", source)),
        input_resolution=int(doc.get("input_resolution", 224)),
        width_multiplier=float(doc.get("width_multiplier", 1.0)),
        layers=tuple(rows),
    )
    spec.validate()
    return spec


def parse_arch_file(path) -> ArchSpec:
    """Load and strictly validate an architecture JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"architecture file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_arch_dict(doc, source=str(path))


def arch_to_dict(spec: ArchSpec) -> dict:
    layers = []
    for i, row in enumerate(spec.layers):
        if row.input_from is not None:
            raise ValidationError(
                f"layer {i}: side-branch rows cannot be expressed in the file format"
            )
        if row.op not in LAYER_OPS:
            raise ValidationError(
                f"layer {i}: op {row.op!r} is internal and cannot be serialized"
            )
        layers.append({
            "op": row.op, "kernel": row.kernel, "stride": row.stride,
            "se": row.se, "nl": row.nl, "exp": row.exp, "out": row.out,
            "bn": row.bn,
        })
    return {
        "name": spec.name,
        "in_channels": spec.in_channels,
        "input_resolution": spec.input_resolution,
        "num_classes": spec.num_classes,
        "width_multiplier": spec.width_multiplier,
        "layers": layers,
    }


def serialize_arch(spec: ArchSpec, path=None) -> str:
    """Render a spec as canonical JSON; optionally write it to ``path``."""
    text = json.dumps(arch_to_dict(spec), indent=2) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# Shape propagation (shared by the builder and the cost analyzer)
# ---------------------------------------------------------------------------

def conv_out_hw(h: int, w: int, kernel: int, stride: int) -> tuple[int, int]:
    pad = (kernel - 1) // 2
    return ((h + 2 * pad - kernel) // stride + 1,
            (w + 2 * pad - kernel) // stride + 1)


def layer_output_shape(row: LayerSpec, in_shape: tuple[int, int, int]) -> tuple[int, int, int]:
    """(C,H,W) after one row; dense rows collapse to (K,1,1)."""
    c, h, w = in_shape
    if row.op in ("conv2d", "dw"):
        oh, ow = conv_out_hw(h, w, row.kernel, row.stride)
        return (row.out, oh, ow)
    if row.op == "bneck":
        oh, ow = conv_out_hw(h, w, row.kernel, row.stride)
        return (row.out, oh, ow)
    if row.op == "pool":
        if row.stride == 1:
            return (c, 1, 1)
        oh, ow = conv_out_hw(h, w, row.kernel, row.stride)
        return (c, oh, ow)
    if row.op == "dense":
        return (row.out, 1, 1)
    raise ValidationError(f"unknown op {row.op!r}")


def builtin_arch(name: str) -> ArchSpec:
    """Resolve a builtin architecture name."""
    table = {
        "mobilenetv3-large": lambda: mobilenetv3_large_spec(in_channels=3, num_classes=1000),
        "resnet50": resnet50_cost_spec,
    }
    if name not in table:
        raise ValidationError(
            f"unknown builtin architecture {name!r}; expected one of {sorted(table)}"
        )
    return table[name]()
