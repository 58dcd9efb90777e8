"""Finite-difference verification of analytic gradients.

Every case builds 64-bit leaf tensors, runs the tape backward against a
fixed random projection of the output, and compares each gradient with
central differences (step 1e-5). Inputs are drawn away from activation
kinks so the difference quotient stays two-sided.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import Bneck, BneckSpec, EfficientLastStage, SEConfig, SqueezeExcite
from .tensor import (
    BatchNormState,
    ConvParams,
    Tensor,
    activation,
    avg_pool2d,
    batch_norm,
    conv2d,
    dense,
    global_avg_pool,
    softmax_cross_entropy,
)

FD_STEP = 1e-5
PRIMITIVE_THRESHOLD = 1e-4
BLOCK_THRESHOLD = 1e-3


def numerical_gradient(f, arr: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of scalar ``f()`` w.r.t. ``arr`` in place."""
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max |a-n| / max(|a|,|n|,1): relative for large, absolute for small."""
    num = np.abs(analytic - numeric)
    den = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float((num / den).max()) if num.size else 0.0


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    max_error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.threshold


def check_gradients(tensors: list[Tensor], forward, rng: np.random.Generator,
                    name: str, threshold: float) -> GradCheckResult:
    """Compare tape gradients of ``forward()`` against central differences.

    ``forward`` must rebuild the graph from the leaf tensors on every call.
    """
    out = forward()
    proj = rng.standard_normal(out.shape)
    for t in tensors:
        t.grad = None
    out.backward(proj)

    def scalar():
        return float((forward().data * proj).sum())

    worst = 0.0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_gradient(scalar, t.data)
        worst = max(worst, max_relative_error(analytic, numeric))
    return GradCheckResult(name=name, max_error=worst, threshold=threshold)


def _leaf(rng, shape, scale=1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True,
                  dtype=np.float64)


def _kink_free(rng, shape, kinks=(-3.0, 0.0, 3.0, 6.0), margin=1e-3) -> Tensor:
    x = rng.standard_normal(shape) * 2.0
    for k in kinks:
        near = np.abs(x - k) < margin
        x[near] = k + margin * np.where(x[near] >= k, 2.0, -2.0)
    return Tensor(x, requires_grad=True, dtype=np.float64)


# ---------------------------------------------------------------------------
# Case builders
# ---------------------------------------------------------------------------

def _conv_case(rng, name, n, cin, cout, k, stride, pad, groups, bias):
    params = ConvParams(in_channels=cin, out_channels=cout, kernel_h=k,
                        kernel_w=k, stride=stride, padding=pad, groups=groups)
    x = _leaf(rng, (n, cin, 6, 6))
    w = _leaf(rng, (cout, cin // groups, k, k), scale=0.5)
    tensors = [x, w]
    b = None
    if bias:
        b = _leaf(rng, (cout,), scale=0.1)
        tensors.append(b)
    return name, tensors, lambda: conv2d(x, w, b, params=params), PRIMITIVE_THRESHOLD


def _activation_case(rng, kind):
    x = _kink_free(rng, (3, 7))
    return (f"activation_{kind}", [x], lambda: activation(x, kind),
            PRIMITIVE_THRESHOLD)


def _bneck_case(rng, kernel, stride, use_se, nl):
    spec = BneckSpec(in_channels=4, exp_channels=8, out_channels=4,
                     kernel=kernel, stride=stride, use_se=use_se,
                     nonlinearity=nl)
    block = Bneck(rng, spec, dtype=np.float64)
    x = _leaf(rng, (1, 4, 8, 8))
    tensors = [x] + [t for _, t, _ in block.named_parameters()]
    tag = f"bneck_{kernel}x{kernel}_s{stride}_{nl}" + ("_se" if use_se else "")
    return tag, tensors, lambda: block.forward(x), BLOCK_THRESHOLD


def build_suite(seed: int = 0) -> list[tuple[str, list[Tensor], object, float]]:
    """Every primitive op family plus each bottleneck pattern in the layout."""
    rng = np.random.default_rng(seed)
    cases = [
        _conv_case(rng, "conv2d_3x3", 2, 3, 4, 3, 1, 1, 1, True),
        _conv_case(rng, "conv2d_3x3_s2", 2, 3, 4, 3, 2, 1, 1, False),
        _conv_case(rng, "conv2d_1x1", 2, 4, 5, 1, 1, 0, 1, True),
        _conv_case(rng, "conv2d_grouped", 1, 4, 6, 3, 1, 1, 2, False),
        _conv_case(rng, "conv2d_depthwise_3x3", 2, 4, 4, 3, 1, 1, 4, False),
        _conv_case(rng, "conv2d_depthwise_5x5_s2", 1, 3, 3, 5, 2, 2, 3, False),
    ]

    x = _leaf(rng, (3, 5))
    w = _leaf(rng, (5, 4), scale=0.5)
    b = _leaf(rng, (4,), scale=0.1)
    cases.append(("dense", [x, w, b], lambda: dense(x, w, b), PRIMITIVE_THRESHOLD))

    xbn = _leaf(rng, (2, 3, 4, 4))
    state = BatchNormState.create(3, dtype=np.float64)
    state.gamma = Tensor(rng.uniform(0.5, 1.5, 3), requires_grad=True, dtype=np.float64)
    state.beta = Tensor(rng.uniform(-0.5, 0.5, 3), requires_grad=True, dtype=np.float64)
    cases.append(("batch_norm_train", [xbn, state.gamma, state.beta],
                  lambda: batch_norm(xbn, state), PRIMITIVE_THRESHOLD))

    xp = _leaf(rng, (2, 3, 5, 5))
    cases.append(("global_avg_pool", [xp], lambda: global_avg_pool(xp),
                  PRIMITIVE_THRESHOLD))

    xw = _leaf(rng, (2, 3, 7, 7))
    cases.append(("avg_pool_3x3_s2", [xw], lambda: avg_pool2d(xw, 3, 2),
                  PRIMITIVE_THRESHOLD))

    for kind in ("relu", "relu6", "sigmoid", "swish", "hard_sigmoid", "h_swish"):
        cases.append(_activation_case(rng, kind))

    se = SqueezeExcite(rng, SEConfig(8), dtype=np.float64)
    xse = _leaf(rng, (2, 8, 4, 4))
    cases.append(("se_module", [xse] + [t for _, t, _ in se.named_parameters()],
                  lambda: se.forward(xse), PRIMITIVE_THRESHOLD))

    # The distinct bottleneck patterns in the published layout:
    # kernel x SE x nonlinearity x stride combinations that actually occur.
    patterns = [
        (3, 1, False, "relu"), (3, 2, False, "relu"),
        (5, 2, True, "relu"), (5, 1, True, "relu"),
        (3, 2, False, "h_swish"), (3, 1, False, "h_swish"),
        (3, 1, True, "h_swish"), (5, 2, True, "h_swish"),
        (5, 1, True, "h_swish"),
    ]
    for kernel, stride, use_se, nl in patterns:
        cases.append(_bneck_case(rng, kernel, stride, use_se, nl))

    head = EfficientLastStage(rng, 8, 3, width_multiplier=0.01, dtype=np.float64)
    xh = _leaf(rng, (1, 8, 4, 4))
    cases.append(("efficient_last_stage",
                  [xh] + [t for _, t, _ in head.named_parameters()],
                  lambda: head.forward(xh), BLOCK_THRESHOLD))
    return cases


def check_cross_entropy(seed: int = 0) -> GradCheckResult:
    """The loss returns its gradient analytically; verify it numerically."""
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((3, 5))
    labels = rng.integers(0, 5, size=3)
    _, grad = softmax_cross_entropy(Tensor(logits, dtype=np.float64), labels)

    def scalar():
        loss, _ = softmax_cross_entropy(Tensor(logits, dtype=np.float64), labels)
        return loss

    numeric = numerical_gradient(scalar, logits)
    return GradCheckResult("softmax_cross_entropy",
                           max_relative_error(grad.data, numeric),
                           PRIMITIVE_THRESHOLD)


def run_suite(seed: int = 0) -> list[GradCheckResult]:
    """Worst finite-difference error per op family, deterministic per seed."""
    rng = np.random.default_rng(seed + 1)
    results = []
    for name, tensors, forward, threshold in build_suite(seed):
        results.append(check_gradients(tensors, forward, rng, name, threshold))
    results.append(check_cross_entropy(seed))
    return results
