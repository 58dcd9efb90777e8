"""SGD training loop, evaluation metrics, the limited-data sweep protocol,
and portable binary checkpoints.

Checkpoint format: magic "LWN1", then little-endian version u32=1 and
tensor-count u32; per tensor: name-length u16, UTF-8 name, rank u8, dims
u32 each, values as float32 little-endian row-major. Trailing bytes are
forbidden. The architecture JSON rides along as an auxiliary byte tensor
named "__arch__" so a checkpoint alone reconstructs its model.
"""
from __future__ import annotations

import dataclasses
import io
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .arch import arch_to_dict, parse_arch_dict
from .data import Sample, batch_tensor, subsample_per_class
from .errors import CheckpointError, NumericsError, ShapeError, ValidationError
from .model import Model, build_model
from .tensor import Tensor, no_grad, softmax_cross_entropy


@dataclass
class TrainConfig:
    """Optimizer and schedule knobs; the defaults suit this network family."""

    epochs: int = 150
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 4e-5
    lr_schedule: str = "cosine"  # constant | cosine
    seed: int = 0
    precision: str = "f32"  # f32 | f64
    resolution: int = 64
    channel_mode: str = "gray1"

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            # lr == 0 is a legal no-op optimizer (useful for plumbing tests).
            raise ValidationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValidationError(f"momentum must be in [0,1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValidationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValidationError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.precision not in ("f32", "f64"):
            raise ValidationError(f"precision must be f32 or f64, got {self.precision!r}")

    @property
    def dtype(self):
        return np.float64 if self.precision == "f64" else np.float32

    def epoch_lr(self, epoch: int) -> float:
        if self.lr_schedule == "constant":
            return self.learning_rate
        return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * epoch / self.epochs))


@dataclass
class EpochStats:
    epoch: int
    lr: float
    loss: float
    train_accuracy: float


class SGD:
    """Momentum SGD with decoupled weight decay on decay-eligible weights."""

    def __init__(self, params: list[tuple[str, "object", bool]], lr: float,
                 momentum: float, weight_decay: float):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {name: np.zeros_like(t.data) for name, t, _ in params}

    def step(self) -> None:
        for name, t, decay in self.params:
            if t.grad is None:
                continue
            v = self.velocity[name]
            v *= self.momentum
            v += t.grad
            t.data -= self.lr * v
            if decay and self.weight_decay:
                t.data -= self.lr * self.weight_decay * t.data

    def zero_grad(self) -> None:
        for _, t, _ in self.params:
            t.grad = None


def train(model: Model, train_samples: list[Sample], config: TrainConfig,
          log=None) -> tuple[Model, list[EpochStats]]:
    """Train in place; returns the model and per-epoch loss/accuracy history.

    Shuffling is seeded per epoch; a NaN loss aborts with the offending
    epoch and batch named.
    """
    config.validate()
    if not train_samples:
        raise ValidationError("training set is empty")
    labels_present = {s.label for s in train_samples}
    if max(labels_present) >= model.num_classes:
        raise ValidationError(
            f"dataset has label {max(labels_present)} but the model has "
            f"{model.num_classes} classes"
        )

    x_all = batch_tensor(train_samples, config.resolution, config.channel_mode,
                         model.dtype).data
    y_all = np.array([s.label for s in train_samples], dtype=np.int64)

    model.set_training(True)
    optimizer = SGD(model.named_parameters(), config.learning_rate,
                    config.momentum, config.weight_decay)
    rng = np.random.default_rng(config.seed)
    history: list[EpochStats] = []
    n = len(train_samples)

    for epoch in range(config.epochs):
        lr = config.epoch_lr(epoch)
        optimizer.lr = lr
        order = rng.permutation(n)
        losses = []
        correct = 0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            xb = Tensor(x_all[idx], dtype=model.dtype)
            yb = y_all[idx]
            try:
                logits = model.forward(xb)
                loss, grad = softmax_cross_entropy(logits, yb)
            except NumericsError as exc:
                raise NumericsError(
                    f"training diverged at epoch {epoch + 1}, batch {bi + 1}: {exc}"
                ) from None
            if not math.isfinite(loss):
                raise NumericsError(
                    f"non-finite loss at epoch {epoch + 1}, batch {bi + 1}"
                )
            optimizer.zero_grad()
            logits.backward(grad.data)
            optimizer.step()
            losses.append(loss * len(idx))
            correct += int((logits.data.argmax(axis=1) == yb).sum())
        stats = EpochStats(epoch=epoch + 1, lr=lr,
                           loss=float(np.sum(losses) / n),
                           train_accuracy=correct / n)
        history.append(stats)
        if log is not None:
            log(stats)
    return model, history


def history_csv(history: list[EpochStats]) -> str:
    lines = ["epoch,lr,loss,train_accuracy"]
    for h in history:
        lines.append(f"{h.epoch},{h.lr:.8f},{h.loss:.8f},{h.train_accuracy:.6f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class Metrics:
    """Confusion matrix (rows = true, cols = predicted) and accuracy summary."""

    confusion: np.ndarray
    class_names: list[str] = field(default_factory=list)

    @property
    def per_class_accuracy(self) -> np.ndarray:
        totals = self.confusion.sum(axis=1)
        safe = np.maximum(totals, 1)
        return np.where(totals > 0, np.diag(self.confusion) / safe, 0.0)

    @property
    def average_accuracy(self) -> float:
        """Unweighted mean of the per-class rates."""
        return float(self.per_class_accuracy.mean())


def evaluate(model: Model, test_samples: list[Sample], resolution: int = 64,
             channel_mode: str = "gray1", batch_size: int = 64,
             class_names: list[str] | None = None) -> Metrics:
    """Argmax classification over the test chips; mutates nothing."""
    if not test_samples:
        raise ValidationError("test set is empty")
    labels = np.array([s.label for s in test_samples], dtype=np.int64)
    if labels.max() >= model.num_classes:
        raise ValidationError(
            f"dataset has label {labels.max()} but the model has "
            f"{model.num_classes} classes"
        )
    was_training = model.training
    model.set_training(False)
    k = model.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    try:
        with no_grad():
            for start in range(0, len(test_samples), batch_size):
                chunk = test_samples[start:start + batch_size]
                xb = batch_tensor(chunk, resolution, channel_mode, model.dtype)
                preds = model.forward(xb).data.argmax(axis=1)
                for s, p in zip(chunk, preds):
                    confusion[s.label, int(p)] += 1
    finally:
        model.set_training(was_training)
    if class_names is None:
        names = {s.label: s.class_name for s in test_samples}
        class_names = [names.get(i, f"class_{i:02d}") for i in range(k)]
    return Metrics(confusion=confusion, class_names=class_names)


def metrics_table(metrics: Metrics) -> str:
    """Per-class rows plus an Average row, percentages with 2 decimals."""
    width = max([len(c) for c in metrics.class_names] + [len("Average")])
    lines = [f"{'Class':<{width}}  Accuracy"]
    for name, acc in zip(metrics.class_names, metrics.per_class_accuracy):
        lines.append(f"{name:<{width}}  {100 * acc:6.2f}%")
    lines.append(f"{'Average':<{width}}  {100 * metrics.average_accuracy:6.2f}%")
    return "\n".join(lines) + "\n"


def metrics_csv(metrics: Metrics) -> str:
    lines = ["class,accuracy"]
    for name, acc in zip(metrics.class_names, metrics.per_class_accuracy):
        lines.append(f"{name},{100 * acc:.2f}")
    lines.append(f"Average,{100 * metrics.average_accuracy:.2f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Limited-data sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    k: int
    seed: int
    per_class: np.ndarray
    average: float
    init_hash: str = ""   # model state before training (no-leakage audit)
    final_hash: str = ""  # model state after training


@dataclass
class SweepReport:
    class_names: list[str]
    rows: list[SweepRow]
    summaries: list[tuple[int, float]]  # (k, mean average accuracy over seeds)


def run_limited_data_sweep(train_samples: list[Sample], test_samples: list[Sample],
                           arch_spec, k_list: list[int], seeds: list[int],
                           config: TrainConfig, log=None) -> SweepReport:
    """Per (k, seed): subsample -> train a fresh model -> evaluate.

    Models are freshly initialized per run (run seed feeds both the
    parameter init and the shuffling); rows come out in (k, seed) order
    followed by per-k means.
    """
    if not k_list or not seeds:
        raise ValidationError("k_list and seeds must be non-empty")
    class_names = sorted({s.class_name for s in test_samples})
    rows: list[SweepRow] = []
    summaries: list[tuple[int, float]] = []
    for k in sorted(k_list):
        averages = []
        for seed in seeds:
            subset = subsample_per_class(train_samples, k, seed)
            model = build_model(arch_spec, seed=seed, dtype=config.dtype)
            init_hash = model.param_hash()
            run_cfg = dataclasses.replace(config, seed=seed)
            train(model, subset, run_cfg, log=None)
            metrics = evaluate(model, test_samples, config.resolution,
                               config.channel_mode, class_names=class_names)
            row = SweepRow(k=k, seed=seed,
                           per_class=metrics.per_class_accuracy.copy(),
                           average=metrics.average_accuracy,
                           init_hash=init_hash, final_hash=model.param_hash())
            rows.append(row)
            averages.append(row.average)
            if log is not None:
                log(row)
        summaries.append((k, float(np.mean(averages))))
    return SweepReport(class_names=class_names, rows=rows, summaries=summaries)


def sweep_csv(report: SweepReport) -> str:
    """Columns k,seed,<class...>,average; percentages with 2 decimals."""
    header = "k,seed," + ",".join(report.class_names) + ",average"
    lines = [header]
    for row in report.rows:
        cells = ",".join(f"{100 * a:.2f}" for a in row.per_class)
        lines.append(f"{row.k},{row.seed},{cells},{100 * row.average:.2f}")
    blank = "," * len(report.class_names)
    for k, mean_avg in report.summaries:
        lines.append(f"{k},mean{blank},{100 * mean_avg:.2f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_MAGIC = b"LWN1"
_VERSION = 1
_ARCH_KEY = "__arch__"


def _arch_bytes(model: Model) -> np.ndarray:
    text = json.dumps(arch_to_dict(model.arch), sort_keys=True)
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float32)


def checkpoint_save(model: Model, path) -> None:
    """Serialize every parameter and running statistic as float32."""
    entries = [(_ARCH_KEY, _arch_bytes(model))] + [
        (name, arr) for name, arr in model.state_arrays()
    ]
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<II", _VERSION, len(entries)))
    for name, arr in entries:
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name!r}")
        a = np.ascontiguousarray(arr, dtype=np.float32)
        if a.ndim > 0xFF:
            raise CheckpointError(f"tensor rank too large: {name!r}")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", a.ndim))
        for d in a.shape:
            buf.write(struct.pack("<I", d))
        buf.write(a.astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_exact(fh, n: int, what: str, offset: list[int]) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(
            f"truncated checkpoint: expected {n} bytes for {what} at offset {offset[0]}, "
            f"got {len(data)}"
        )
    offset[0] += n
    return data


def checkpoint_read(path) -> dict[str, np.ndarray]:
    """Read the raw tensor dictionary, validating framing byte by byte."""
    offset = [0]
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic", offset)
        if magic != _MAGIC:
            raise CheckpointError(
                f"bad magic {magic!r} at offset 0 (expected {_MAGIC!r})"
            )
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header", offset))
        if version != _VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version} at offset 4"
            )
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length", offset))
            name = _read_exact(fh, name_len, "name", offset).decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, "rank", offset))
            dims = [
                struct.unpack("<I", _read_exact(fh, 4, f"dim of {name}", offset))[0]
                for _ in range(rank)
            ]
            n_values = int(np.prod(dims, dtype=np.int64)) if dims else 1
            raw = _read_exact(fh, 4 * n_values, f"values of {name}", offset)
            if name in tensors:
                raise CheckpointError(f"duplicate tensor name {name!r}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
        if fh.read(1):
            raise CheckpointError(f"trailing bytes after offset {offset[0]}")
    return tensors


def checkpoint_load(path) -> Model:
    """Rebuild the model recorded in a checkpoint and restore its state."""
    tensors = checkpoint_read(path)
    if _ARCH_KEY not in tensors:
        raise CheckpointError(f"checkpoint lacks the {_ARCH_KEY!r} architecture record")
    arch_raw = tensors.pop(_ARCH_KEY)
    try:
        doc = json.loads(bytes(arch_raw.astype(np.uint8)).decode("utf-8"))
        spec = parse_arch_dict(doc, source="<checkpoint>")
    except (ValueError, ValidationError) as exc:
        raise CheckpointError(f"invalid architecture record: {exc}") from None
    model = build_model(spec, seed=0)
    try:
        model.load_state_arrays(tensors)
    except (ValidationError, ShapeError) as exc:
        raise CheckpointError(f"checkpoint does not match its architecture: {exc}") from None
    return model
