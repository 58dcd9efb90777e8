"""lightnet: from-scratch MobileNetV3-Large with cost analysis and a
limited-data recognition harness for SAR-style target chips."""

from .arch import (
    ArchSpec,
    LayerSpec,
    builtin_arch,
    mobilenetv3_large_spec,
    parse_arch_file,
    resnet50_cost_spec,
    serialize_arch,
)
from .blocks import Bneck, BneckSpec, EfficientLastStage, SEConfig, SqueezeExcite
from .cost import CostReport, analyze, compare_last_stages, report_render
from .data import (
    Sample,
    load_chip_dataset,
    preprocess,
    split_samples,
    subsample_per_class,
    synth_sar_generate,
    write_chip_dataset,
)
from .errors import (
    CheckpointError,
    DataError,
    LightnetError,
    NumericsError,
    ShapeError,
    ValidationError,
)
from .gradcheck import run_suite
from .model import Model, build_model
from .tensor import (
    BatchNormState,
    ConvParams,
    Tensor,
    activation,
    batch_norm,
    conv2d,
    dense,
    global_avg_pool,
    no_grad,
    softmax_cross_entropy,
)
from .train import (
    Metrics,
    TrainConfig,
    checkpoint_load,
    checkpoint_save,
    evaluate,
    run_limited_data_sweep,
    train,
)

__version__ = "0.1.0"
