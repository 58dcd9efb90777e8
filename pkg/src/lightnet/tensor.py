"""Minimal reverse-mode tensor engine.

Everything the network needs as differentiable primitives: dense and
grouped/depthwise 2-D convolution, batch normalization, global average
pooling, fully connected transform, the activation family (relu, relu6,
sigmoid, swish, hard_sigmoid, h_swish), and softmax cross-entropy.

Data layout is N,C,H,W row-major throughout. Convolution is
cross-correlation (no kernel flip). Every op validates that its output is
finite; NaN/Inf raises instead of propagating silently.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from .errors import NumericsError, ShapeError, ValidationError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (used for evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """N-dimensional array with an optional gradient buffer.

    Tensors produced by ops carry a backward context; calling
    ``backward(grad)`` on an op output propagates gradients to every
    reachable tensor with ``requires_grad=True``. Op outputs are treated
    as immutable, so read-only sharing across threads is safe; a single
    forward/backward chain is single-threaded.
    """

    __slots__ = ("data", "grad", "requires_grad", "_ctx")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._ctx: Function | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def backward(self, grad=None) -> None:
        """Reverse-mode sweep seeding this tensor with ``grad``.

        ``grad`` defaults to ones for scalar outputs. Raises if this tensor
        was not produced by a recorded op.
        """
        if self._ctx is None:
            raise ValidationError(
                "backward called before any recorded forward computation"
            )
        if grad is None:
            if self.data.size != 1:
                raise ValidationError(
                    "backward without an explicit gradient requires a scalar output"
                )
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.data.shape:
            raise ShapeError(
                f"seed gradient shape {grad.shape} does not match output shape {self.data.shape}"
            )

        # Post-order DFS: parents appear before their consumers.
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or node._ctx is None:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._ctx.inputs:
                if parent._ctx is not None and id(parent) not in seen:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            input_grads = node._ctx.backward(g)
            for parent, pg in zip(node._ctx.inputs, input_grads):
                if pg is None:
                    continue
                if parent._ctx is not None:
                    key = id(parent)
                    grads[key] = pg if key not in grads else grads[key] + pg
                elif parent.requires_grad:
                    parent.grad = pg.copy() if parent.grad is None else parent.grad + pg


class Function:
    """One differentiable op. Subclasses work on raw ndarrays."""

    def forward(self, *arrays, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> tuple:
        raise NotImplementedError

    @classmethod
    def apply(cls, *tensors: Tensor, **kwargs) -> Tensor:
        fn = cls()
        out_data = fn.forward(*[t.data for t in tensors], **kwargs)
        if not np.all(np.isfinite(out_data)):
            raise NumericsError(f"{cls.__name__} produced non-finite values")
        requires = _GRAD_ENABLED and any(t.requires_grad for t in tensors)
        out = Tensor(out_data, requires_grad=requires, dtype=out_data.dtype)
        if requires:
            fn.inputs = tensors
            out._ctx = fn
        return out


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvParams:
    """Geometry of one 2-D convolution.

    Depthwise convolution is the case groups == in_channels == out_channels
    (one filter per channel).
    """

    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel_h", "kernel_w", "stride", "groups"):
            if getattr(self, name) < 1:
                raise ValidationError(f"ConvParams.{name} must be positive, got {getattr(self, name)}")
        if self.padding < 0:
            raise ValidationError(f"ConvParams.padding must be non-negative, got {self.padding}")
        if self.in_channels % self.groups != 0:
            raise ValidationError(
                f"in_channels {self.in_channels} not divisible by groups {self.groups}"
            )
        if self.out_channels % self.groups != 0:
            raise ValidationError(
                f"out_channels {self.out_channels} not divisible by groups {self.groups}"
            )

    @property
    def is_depthwise(self) -> bool:
        return self.groups == self.in_channels == self.out_channels

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        oh = (h + 2 * self.padding - self.kernel_h) // self.stride + 1
        ow = (w + 2 * self.padding - self.kernel_w) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeError(
                f"convolution kernel {self.kernel_h}x{self.kernel_w} with stride {self.stride} "
                f"and padding {self.padding} does not fit input {h}x{w}"
            )
        return oh, ow


def _pad_hw(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> tuple[np.ndarray, int, int]:
    """Padded input (N,C,Hp,Wp) -> columns (N, C*kh*kw, Ho*Wo)."""
    n, c, hp, wp = xp.shape
    if kh == 1 and kw == 1 and stride == 1:
        # Pointwise convolution: the column matrix is the input itself.
        return xp.reshape(n, c, hp * wp), hp, wp
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(cols: np.ndarray, n: int, c: int, hp: int, wp: int,
            kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Scatter-add columns back onto the padded input grid."""
    if kh == 1 and kw == 1 and stride == 1:
        return cols.reshape(n, c, hp, wp)
    xpg = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    for u in range(kh):
        for v in range(kw):
            xpg[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride] += cols[:, :, u, v]
    return xpg


class _Conv2d(Function):
    def forward(self, x, weight, bias=None, *, params: ConvParams):
        if x.ndim != 4:
            raise ShapeError(f"conv2d input must be 4-D (N,C,H,W), got {x.ndim}-D")
        n, c, h, w = x.shape
        if c != params.in_channels:
            raise ShapeError(
                f"conv2d input has {c} channels, ConvParams.in_channels is {params.in_channels}"
            )
        cg = params.in_channels // params.groups
        expected_w = (params.out_channels, cg, params.kernel_h, params.kernel_w)
        if weight.shape != expected_w:
            raise ShapeError(f"conv2d weight shape {weight.shape} != expected {expected_w}")
        if bias is not None and bias.shape != (params.out_channels,):
            raise ShapeError(f"conv2d bias shape {bias.shape} != ({params.out_channels},)")
        if not np.all(np.isfinite(x)):
            raise NumericsError("conv2d input contains non-finite values")

        ho, wo = params.output_hw(h, w)
        xp = _pad_hw(x, params.padding)
        self.params = params
        self.x_shape = x.shape
        self.has_bias = bias is not None

        if params.is_depthwise:
            # Decompose over kernel offsets: a handful of vectorized
            # multiply-adds beats a strided-view contraction here.
            s = params.stride
            out = np.zeros((n, c, ho, wo), dtype=x.dtype)
            wk = weight[:, 0]
            for u in range(params.kernel_h):
                for v in range(params.kernel_w):
                    out += xp[:, :, u:u + s * ho:s, v:v + s * wo:s] * wk[:, u, v][None, :, None, None]
            self.xp = xp
            self.weight = weight
            self.mode = "depthwise"
        else:
            g = params.groups
            out = np.empty((n, params.out_channels, ho, wo), dtype=x.dtype)
            og = params.out_channels // g
            cols_per_group = []
            for gi in range(g):
                xg = xp[:, gi * cg:(gi + 1) * cg] if g > 1 else xp
                cols, _, _ = _im2col(xg, params.kernel_h, params.kernel_w, params.stride)
                wmat = weight[gi * og:(gi + 1) * og].reshape(og, -1)
                out[:, gi * og:(gi + 1) * og] = (wmat @ cols).reshape(n, og, ho, wo)
                cols_per_group.append(cols)
            self.cols_per_group = cols_per_group
            self.weight = weight
            self.mode = "grouped"
        self.out_hw = (ho, wo)
        if bias is not None:
            out = out + bias[None, :, None, None]
        return out

    def backward(self, grad_out):
        p = self.params
        n, c, h, w = self.x_shape
        ho, wo = self.out_hw
        hp, wp = h + 2 * p.padding, w + 2 * p.padding
        db = grad_out.sum(axis=(0, 2, 3)) if self.has_bias else None

        if self.mode == "depthwise":
            s = p.stride
            dw = np.zeros((c, 1, p.kernel_h, p.kernel_w), dtype=grad_out.dtype)
            xpg = np.zeros((n, c, hp, wp), dtype=grad_out.dtype)
            wk = self.weight[:, 0]
            for u in range(p.kernel_h):
                for v in range(p.kernel_w):
                    patch = self.xp[:, :, u:u + s * ho:s, v:v + s * wo:s]
                    dw[:, 0, u, v] = (patch * grad_out).sum(axis=(0, 2, 3))
                    xpg[:, :, u:u + s * ho:s, v:v + s * wo:s] += (
                        grad_out * wk[:, u, v][None, :, None, None]
                    )
        else:
            g = p.groups
            cg = p.in_channels // g
            og = p.out_channels // g
            dw = np.empty_like(self.weight)
            xpg = np.zeros((n, c, hp, wp), dtype=grad_out.dtype)
            for gi in range(g):
                cols = self.cols_per_group[gi]
                gout = grad_out[:, gi * og:(gi + 1) * og].reshape(n, og, ho * wo)
                gmat = gout.transpose(1, 0, 2).reshape(og, n * ho * wo)
                cmat = cols.transpose(1, 0, 2).reshape(cols.shape[1], n * ho * wo)
                dw[gi * og:(gi + 1) * og] = (gmat @ cmat.T).reshape(og, cg, p.kernel_h, p.kernel_w)
                wmat = self.weight[gi * og:(gi + 1) * og].reshape(og, -1)
                dcols = wmat.T @ gout
                xpg[:, gi * cg:(gi + 1) * cg] += _col2im(
                    dcols, n, cg, hp, wp, p.kernel_h, p.kernel_w, p.stride, ho, wo
                )
        dx = xpg[:, :, p.padding:p.padding + h, p.padding:p.padding + w] if p.padding else xpg
        if self.has_bias:
            return dx, dw, db
        return dx, dw


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, *,
           params: ConvParams) -> Tensor:
    """Cross-correlation of ``x`` (N,C,H,W) with ``weight`` (O,C/g,Kh,Kw)."""
    if bias is None:
        return _Conv2d.apply(x, weight, params=params)
    return _Conv2d.apply(x, weight, bias, params=params)


# ---------------------------------------------------------------------------
# Dense (fully connected)
# ---------------------------------------------------------------------------

class _Dense(Function):
    def forward(self, x, weight, bias=None):
        if x.ndim != 2:
            raise ShapeError(f"dense input must be 2-D (N,D), got {x.ndim}-D")
        if weight.ndim != 2 or x.shape[1] != weight.shape[0]:
            raise ShapeError(
                f"dense input features {x.shape[1]} != weight rows {weight.shape[0] if weight.ndim == 2 else weight.shape}"
            )
        if bias is not None and bias.shape != (weight.shape[1],):
            raise ShapeError(f"dense bias shape {bias.shape} != ({weight.shape[1]},)")
        self.x = x
        self.weight = weight
        self.has_bias = bias is not None
        out = x @ weight
        if bias is not None:
            out = out + bias
        return out

    def backward(self, grad_out):
        dx = grad_out @ self.weight.T
        dw = self.x.T @ grad_out
        if self.has_bias:
            return dx, dw, grad_out.sum(axis=0)
        return dx, dw


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map of row vectors: x[N,D] @ weight[D,K] + bias[K]."""
    if bias is None:
        return _Dense.apply(x, weight)
    return _Dense.apply(x, weight, bias)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _act_relu(x):
    return np.maximum(x, 0)


def _d_relu(x):
    return (x > 0).astype(x.dtype)


def _act_relu6(x):
    return np.clip(x, 0, 6)


def _d_relu6(x):
    return ((x > 0) & (x < 6)).astype(x.dtype)


def _act_hard_sigmoid(x):
    return np.clip(x + 3, 0, 6) / 6


def _d_hard_sigmoid(x):
    return ((x > -3) & (x < 3)).astype(x.dtype) / 6


def _act_h_swish(x):
    # Grouped so the gate is exactly 1.0 for x >= 3 (h_swish(x) == x there).
    return x * (np.clip(x + 3, 0, 6) / 6)


def _d_h_swish(x):
    # Product rule through relu6(x+3)/6 inherits the subgradient-0 kink convention.
    return _act_hard_sigmoid(x) + x * _d_hard_sigmoid(x)


def _act_swish(x):
    return x * _sigmoid(x)


def _d_swish(x):
    s = _sigmoid(x)
    return s * (1 + x * (1 - s))


def _d_sigmoid(x):
    s = _sigmoid(x)
    return s * (1 - s)


ACTIVATIONS: dict[str, tuple] = {
    "relu": (_act_relu, _d_relu),
    "relu6": (_act_relu6, _d_relu6),
    "sigmoid": (_sigmoid, _d_sigmoid),
    "swish": (_act_swish, _d_swish),
    "hard_sigmoid": (_act_hard_sigmoid, _d_hard_sigmoid),
    "h_swish": (_act_h_swish, _d_h_swish),
}


class _Activation(Function):
    def forward(self, x, *, kind: str):
        if kind not in ACTIVATIONS:
            raise ValidationError(
                f"unknown activation {kind!r}; expected one of {sorted(ACTIVATIONS)}"
            )
        self.x = x
        self.kind = kind
        return ACTIVATIONS[kind][0](x)

    def backward(self, grad_out):
        return (grad_out * ACTIVATIONS[self.kind][1](self.x),)


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise nonlinearity; h_swish(x) = x * relu6(x+3) / 6."""
    return _Activation.apply(x, kind=kind)


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------

@dataclass
class BatchNormState:
    """Learnable affine plus running statistics for one channel axis."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.1
    training: bool = True

    @classmethod
    def create(cls, channels: int, dtype=np.float32, epsilon: float = 1e-5,
               momentum: float = 0.1) -> "BatchNormState":
        return cls(
            gamma=Tensor(np.ones(channels, dtype=dtype), requires_grad=True),
            beta=Tensor(np.zeros(channels, dtype=dtype), requires_grad=True),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            epsilon=epsilon,
            momentum=momentum,
        )

    @property
    def channels(self) -> int:
        return self.gamma.data.shape[0]

    def validate(self) -> None:
        c = self.channels
        for name in ("beta",):
            if getattr(self, name).data.shape != (c,):
                raise ShapeError(f"BatchNormState.{name} length != channel count {c}")
        for name in ("running_mean", "running_var"):
            if getattr(self, name).shape != (c,):
                raise ShapeError(f"BatchNormState.{name} length != channel count {c}")
        if np.any(self.running_var < 0):
            raise ValidationError("BatchNormState.running_var has negative entries")


class _BatchNorm(Function):
    def forward(self, x, gamma, beta, *, state: BatchNormState):
        if x.ndim != 4:
            raise ShapeError(f"batch_norm input must be 4-D (N,C,H,W), got {x.ndim}-D")
        n, c, h, w = x.shape
        if c != state.channels:
            raise ShapeError(
                f"batch_norm input has {c} channels, state carries {state.channels}"
            )
        state.validate()
        self.training = state.training
        if state.training:
            m = n * h * w
            if m < 2:
                raise ValidationError(
                    "batch_norm in train mode needs at least 2 values per channel (N*H*W >= 2)"
                )
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            inv = 1.0 / np.sqrt(var + state.epsilon)
            xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
            mom = state.momentum
            unbiased = var * (m / (m - 1))
            state.running_mean[...] = (1 - mom) * state.running_mean + mom * mean
            state.running_var[...] = (1 - mom) * state.running_var + mom * unbiased
            self.m = m
        else:
            inv = 1.0 / np.sqrt(state.running_var + state.epsilon)
            xhat = (x - state.running_mean[None, :, None, None]) * inv[None, :, None, None]
        self.xhat = xhat
        self.inv = inv
        self.gamma = gamma
        return gamma[None, :, None, None] * xhat + beta[None, :, None, None]

    def backward(self, grad_out):
        dbeta = grad_out.sum(axis=(0, 2, 3))
        dgamma = (grad_out * self.xhat).sum(axis=(0, 2, 3))
        gb = (self.gamma * self.inv)[None, :, None, None]
        if not self.training:
            return grad_out * gb, dgamma, dbeta
        m = self.m
        dxhat = grad_out * self.gamma[None, :, None, None]
        sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        sum_dxhat_xhat = (dxhat * self.xhat).sum(axis=(0, 2, 3), keepdims=True)
        dx = self.inv[None, :, None, None] * (
            dxhat - sum_dxhat / m - self.xhat * sum_dxhat_xhat / m
        )
        return dx, dgamma, dbeta


def batch_norm(x: Tensor, state: BatchNormState) -> Tensor:
    """Normalize per channel; train mode uses batch stats and updates the running ones."""
    return _BatchNorm.apply(x, state.gamma, state.beta, state=state)


# ---------------------------------------------------------------------------
# Pooling, elementwise, reshape
# ---------------------------------------------------------------------------

class _GlobalAvgPool(Function):
    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError(f"global_avg_pool input must be 4-D, got {x.ndim}-D")
        if x.shape[2] < 1 or x.shape[3] < 1:
            raise ShapeError("global_avg_pool needs H,W >= 1")
        self.in_shape = x.shape
        return x.mean(axis=(2, 3), keepdims=True)

    def backward(self, grad_out):
        n, c, h, w = self.in_shape
        return (np.broadcast_to(grad_out / (h * w), self.in_shape).copy(),)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial extent, any resolution -> (N,C,1,1)."""
    return _GlobalAvgPool.apply(x)


class _AvgPool2d(Function):
    """Windowed average pooling (used only by generic parsed architectures)."""

    def forward(self, x, *, kernel: int, stride: int):
        if x.ndim != 4:
            raise ShapeError(f"avg_pool input must be 4-D, got {x.ndim}-D")
        pad = (kernel - 1) // 2
        params = ConvParams(in_channels=x.shape[1], out_channels=x.shape[1],
                            kernel_h=kernel, kernel_w=kernel, stride=stride,
                            padding=pad, groups=x.shape[1])
        ho, wo = params.output_hw(x.shape[2], x.shape[3])
        xp = _pad_hw(x, pad)
        win = np.lib.stride_tricks.sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
        win = win[:, :, ::stride, ::stride]
        self.meta = (x.shape, kernel, stride, pad, ho, wo)
        return win.mean(axis=(4, 5))

    def backward(self, grad_out):
        (n, c, h, w), k, s, pad, ho, wo = self.meta
        xpg = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=grad_out.dtype)
        g = grad_out / (k * k)
        for u in range(k):
            for v in range(k):
                xpg[:, :, u:u + s * ho:s, v:v + s * wo:s] += g
        return (xpg[:, :, pad:pad + h, pad:pad + w] if pad else xpg,)


def avg_pool2d(x: Tensor, kernel: int, stride: int) -> Tensor:
    return _AvgPool2d.apply(x, kernel=kernel, stride=stride)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


class _Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad_out):
        sa, sb = self.shapes
        return _unbroadcast(grad_out, sa), _unbroadcast(grad_out, sb)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _Add.apply(a, b)


class _Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad_out):
        return (_unbroadcast(grad_out * self.b, self.a.shape),
                _unbroadcast(grad_out * self.a, self.b.shape))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _Mul.apply(a, b)


class _Reshape(Function):
    def forward(self, x, *, shape):
        self.in_shape = x.shape
        return x.reshape(shape)

    def backward(self, grad_out):
        return (grad_out.reshape(self.in_shape),)


def reshape(x: Tensor, shape) -> Tensor:
    return _Reshape.apply(x, shape=shape)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def softmax_cross_entropy(logits: Tensor, labels) -> tuple[float, Tensor]:
    """Mean negative log softmax likelihood and its gradient w.r.t. the logits.

    Stabilized by max subtraction. The returned gradient seeds
    ``logits.backward`` during training.
    """
    z = logits.data
    if z.ndim != 2:
        raise ShapeError(f"logits must be 2-D (N,K), got {z.ndim}-D")
    n, k = z.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"labels must have length {n}, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        bad = labels[(labels < 0) | (labels >= k)][0]
        raise ValidationError(f"label {bad} out of range [0, {k})")
    zs = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=1, keepdims=True))
    logp = zs - lse
    loss = float(-logp[np.arange(n), labels].mean())
    if not np.isfinite(loss):
        raise NumericsError("softmax_cross_entropy produced a non-finite loss")
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, Tensor(grad, dtype=z.dtype)
