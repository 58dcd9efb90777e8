"""Analytic per-layer parameter and MAdds/FLOPs accounting over an ArchSpec.

Counting convention: one MAdd per multiply-accumulate inside convolutions,
dense layers, and squeeze-excite FC pairs. Batch norm, activations, bias
adds, and pooling count as zero. FLOPs are reported as 2 x MAdds. The
convention in force is printed in every report header.
"""
from __future__ import annotations

from dataclasses import dataclass

from .arch import ArchSpec, LayerSpec, conv_out_hw, layer_output_shape, mobilenetv3_large_spec, scaled_width
from .blocks import SEConfig, efficient_last_stage_rows, original_last_stage_rows
from .errors import ValidationError


@dataclass(frozen=True)
class CostRow:
    name: str
    out_shape: tuple[int, int, int]
    params: int
    madds: int
    spec_row: int = 0  # index of the ArchSpec row this line belongs to
    kind: str = "conv"  # conv | se | pool | dense


@dataclass(frozen=True)
class CostReport:
    arch_name: str
    input_shape: tuple[int, int, int]
    convention: str  # "madds" | "flops"
    rows: tuple[CostRow, ...]

    @property
    def scale(self) -> int:
        return 2 if self.convention == "flops" else 1

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_madds(self) -> int:
        """Total operation count under the report's convention."""
        return self.scale * sum(r.madds for r in self.rows)

    def row_ops(self, row: CostRow) -> int:
        return self.scale * row.madds


def _row_name(i: int, row: LayerSpec) -> str:
    if row.op == "conv2d":
        return f"{i:02d}_conv2d_{row.kernel}x{row.kernel}" + ("" if row.bn else "_nbn")
    if row.op == "dw":
        return f"{i:02d}_dw_{row.kernel}x{row.kernel}"
    if row.op == "bneck":
        tag = f"{i:02d}_bneck_{row.kernel}x{row.kernel}_s{row.stride}"
        return tag + ("_se" if row.se else "")
    if row.op == "pool":
        return f"{i:02d}_pool"
    return f"{i:02d}_dense"


def _conv_cost(cin: int, cout: int, kernel: int, oh: int, ow: int,
               groups: int, bn: bool) -> tuple[int, int]:
    weights = kernel * kernel * (cin // groups) * cout
    madds = oh * ow * weights
    params = weights + (2 * cout if bn else cout)
    return params, madds


def _bneck_rows(i: int, row: LayerSpec,
                in_shape: tuple[int, int, int]) -> list[CostRow]:
    """One report line per bottleneck component (expand/dw/se/project)."""
    c, h, w = in_shape
    exp, out = row.exp, row.out
    base = _row_name(i, row)
    rows: list[CostRow] = []
    if exp != c:
        p, m = _conv_cost(c, exp, 1, h, w, 1, True)
        rows.append(CostRow(f"{base}/expand", (exp, h, w), p, m, i, "conv"))
    oh, ow = conv_out_hw(h, w, row.kernel, row.stride)
    p, m = _conv_cost(exp, exp, row.kernel, oh, ow, exp, True)
    rows.append(CostRow(f"{base}/dw", (exp, oh, ow), p, m, i, "conv"))
    if row.se:
        hidden = SEConfig(exp).hidden
        p = exp * hidden + hidden + hidden * exp + exp
        m = 2 * exp * hidden
        rows.append(CostRow(f"{base}/se", (exp, oh, ow), p, m, i, "se"))
    p, m = _conv_cost(exp, out, 1, oh, ow, 1, True)
    rows.append(CostRow(f"{base}/project", (out, oh, ow), p, m, i, "conv"))
    return rows


def analyze(spec: ArchSpec, input_shape: tuple[int, int, int] | None = None,
            convention: str = "madds") -> CostReport:
    """Per-layer and total parameter/MAdds accounting for ``spec``."""
    if convention not in ("madds", "flops"):
        raise ValidationError(f"convention must be 'madds' or 'flops', got {convention!r}")
    spec.validate()
    if input_shape is None:
        input_shape = (spec.in_channels, spec.input_resolution, spec.input_resolution)
    c0, h0, w0 = input_shape
    if c0 != spec.in_channels:
        raise ValidationError(
            f"input has {c0} channels but the architecture expects {spec.in_channels}"
        )
    if h0 < 1 or w0 < 1:
        raise ValidationError(f"input spatial extent must be positive, got {h0}x{w0}")

    rows: list[CostRow] = []
    shapes: list[tuple[int, int, int]] = []
    for i, row in enumerate(spec.layers):
        if row.input_from is not None:
            in_shape = shapes[row.input_from]
        elif i == 0:
            in_shape = input_shape
        else:
            in_shape = shapes[i - 1]
        out_shape = layer_output_shape(row, in_shape)
        c, h, w = in_shape
        if row.op == "conv2d":
            params, madds = _conv_cost(c, row.out, row.kernel, out_shape[1],
                                       out_shape[2], 1, row.bn)
            rows.append(CostRow(_row_name(i, row), out_shape, params, madds, i, "conv"))
        elif row.op == "dw":
            params, madds = _conv_cost(c, c, row.kernel, out_shape[1],
                                       out_shape[2], c, row.bn)
            rows.append(CostRow(_row_name(i, row), out_shape, params, madds, i, "conv"))
        elif row.op == "bneck":
            rows.extend(_bneck_rows(i, row, in_shape))
        elif row.op == "pool":
            rows.append(CostRow(_row_name(i, row), out_shape, 0, 0, i, "pool"))
        else:  # dense
            feats = c * h * w
            rows.append(CostRow(_row_name(i, row), out_shape,
                                feats * row.out + row.out, feats * row.out,
                                i, "dense"))
        shapes.append(out_shape)
    return CostReport(arch_name=spec.name, input_shape=input_shape,
                      convention=convention, rows=tuple(rows))


# ---------------------------------------------------------------------------
# Last-stage comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LastStageComparison:
    original: CostReport
    efficient: CostReport
    delta_madds: int
    relocated_conv_ratio: int


def _backbone_feature_shape(width_multiplier: float,
                            input_resolution: int) -> tuple[int, int, int]:
    spec = mobilenetv3_large_spec(in_channels=3, num_classes=1000,
                                  width_multiplier=width_multiplier,
                                  input_resolution=input_resolution)
    shape = (3, input_resolution, input_resolution)
    for row in spec.layers[:16]:  # stem conv + 15 bottlenecks
        shape = layer_output_shape(row, shape)
    return shape


def compare_last_stages(width_multiplier: float = 1.0,
                        input_resolution: int = 224,
                        num_classes: int = 1000) -> LastStageComparison:
    """Cost both classifier heads on the backbone's final feature map.

    ``relocated_conv_ratio`` is the exact cost ratio of the wide expansion
    conv placed before versus after global pooling; it equals the pooled
    area (49 at 224 input).
    """
    feat = _backbone_feature_shape(width_multiplier, input_resolution)
    c, fh, fw = feat
    original = ArchSpec(name="original-last-stage", in_channels=c,
                        num_classes=num_classes, input_resolution=fh,
                        width_multiplier=width_multiplier,
                        layers=original_last_stage_rows(width_multiplier, num_classes))
    efficient = ArchSpec(name="efficient-last-stage", in_channels=c,
                         num_classes=num_classes, input_resolution=fh,
                         width_multiplier=width_multiplier,
                         layers=efficient_last_stage_rows(width_multiplier, num_classes))
    rep_orig = analyze(original, input_shape=feat)
    rep_eff = analyze(efficient, input_shape=feat)
    delta = rep_orig.total_madds - rep_eff.total_madds

    mid = scaled_width(960, width_multiplier)
    penult = scaled_width(1280, width_multiplier)
    before_pool = fh * fw * penult * mid
    after_pool = 1 * 1 * penult * mid
    if before_pool % after_pool:
        raise ValidationError("relocated-conv costs do not divide exactly")
    return LastStageComparison(original=rep_orig, efficient=rep_eff,
                               delta_madds=delta,
                               relocated_conv_ratio=before_pool // after_pool)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _shape_str(shape: tuple[int, int, int]) -> str:
    return "x".join(str(d) for d in shape)


def report_render(report: CostReport, fmt: str = "table") -> str:
    """Deterministic text rendering; csv columns are layer,out_shape,params,madds."""
    if fmt == "csv":
        lines = [f"# convention: {report.convention} (flops = 2 x madds; "
                 "bn/activation/pool/bias count as zero)"]
        lines.append("layer,out_shape,params,madds")
        for row in report.rows:
            lines.append(f"{row.name},{_shape_str(row.out_shape)},{row.params},"
                         f"{report.row_ops(row)}")
        lines.append(f"total,,{report.total_params},{report.total_madds}")
        return "\n".join(lines) + "\n"
    if fmt != "table":
        raise ValidationError(f"unknown report format {fmt!r}")

    unit = report.convention
    header = (f"{report.arch_name}  input={_shape_str(report.input_shape)}  "
              f"convention={unit} (flops = 2 x madds; bn/activation/pool/bias = 0)")
    name_w = max([len(r.name) for r in report.rows] + [len("layer")])
    shape_w = max([len(_shape_str(r.out_shape)) for r in report.rows] + [len("out_shape")])
    lines = [header, ""]
    lines.append(f"{'layer':<{name_w}}  {'out_shape':>{shape_w}}  {'params':>12}  {unit:>14}")
    for row in report.rows:
        lines.append(f"{row.name:<{name_w}}  {_shape_str(row.out_shape):>{shape_w}}  "
                     f"{row.params:>12,}  {report.row_ops(row):>14,}")
    lines.append(f"{'total':<{name_w}}  {'':>{shape_w}}  "
                 f"{report.total_params:>12,}  {report.total_madds:>14,}")
    return "\n".join(lines) + "\n"
