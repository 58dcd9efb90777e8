"""Dataset ingestion, limited-sample subsampling, preprocessing, and a
deterministic synthetic SAR-like chip generator.

Chip layout on disk: root/<class_name>/<chip>.pgm (binary P5, maxval 255),
with train/test membership encoded in the file name prefix ("train_" /
"test_"). An optional manifest.csv (columns file,class,depression; UTF-8,
LF) lists every chip. The synthetic generator writes exactly this layout,
so generated and real datasets are interchangeable downstream.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ValidationError
from .tensor import Tensor


@dataclass
class Sample:
    """One labeled grayscale chip with its provenance."""

    image: np.ndarray  # 2-D, values in [0,1]
    label: int
    class_name: str
    source_id: str
    depression_deg: float | None = None


@dataclass
class DatasetManifest:
    classes: list[str]
    train_counts: dict[str, int] = field(default_factory=dict)
    test_counts: dict[str, int] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# PGM I/O
# ---------------------------------------------------------------------------

def read_pgm(path) -> np.ndarray:
    """Binary P5 PGM, 8-bit, as a float array in [0,1]."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None

    def fail(msg):
        raise DataError(f"malformed PGM {path}: {msg}")

    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(raw):
            if raw[pos:pos + 1].isspace():
                pos += 1
            elif raw[pos:pos + 1] == b"#":
                while pos < len(raw) and raw[pos] != 0x0A:
                    pos += 1
            else:
                break
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            fail("truncated header")
        return raw[start:pos]

    if next_token() != b"P5":
        fail("missing P5 magic")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError:
        fail("non-numeric header field")
    if maxval != 255:
        fail(f"unsupported maxval {maxval} (expected 255)")
    if width < 1 or height < 1:
        fail(f"bad dimensions {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    pixels = raw[pos:pos + width * height]
    if len(pixels) != width * height:
        fail(f"expected {width * height} pixel bytes, found {len(pixels)}")
    if raw[pos + width * height:]:
        fail("trailing bytes after pixel data")
    img = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)
    return img.astype(np.float64) / 255.0


def write_pgm(path, image: np.ndarray) -> None:
    """Write an image in [0,1] as binary P5 with maxval 255."""
    img = np.clip(np.asarray(image), 0.0, 1.0)
    data = np.round(img * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


# ---------------------------------------------------------------------------
# Directory-of-chips loading
# ---------------------------------------------------------------------------

def _read_manifest(path) -> dict[str, float | None]:
    entries: dict[str, float | None] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["file", "class", "depression"]:
            raise DataError(
                f"{path}: manifest header must be file,class,depression, got {header}"
            )
        for lineno, rowvals in enumerate(reader, start=2):
            if not rowvals:
                continue
            if len(rowvals) != 3:
                raise DataError(f"{path}: line {lineno}: expected 3 columns")
            fname, _cls, depr = rowvals
            if fname in entries:
                raise DataError(f"{path}: duplicate file entry {fname!r}")
            entries[fname] = float(depr) if depr else None
    return entries


def load_chip_dataset(root_dir) -> tuple[list[Sample], DatasetManifest]:
    """Load every chip under ``root_dir/<class>/*.pgm`` in lexicographic order.

    Pixel values are scaled to [0,1]. Classes are the sorted directory
    names; labels are their indices. Raises on malformed PGM files, empty
    class directories, and duplicate manifest entries.
    """
    root = os.fspath(root_dir)
    if not os.path.isdir(root):
        raise DataError(f"dataset root {root!r} is not a directory")
    class_names = sorted(
        d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d))
    )
    if not class_names:
        raise DataError(f"dataset root {root!r} contains no class directories")

    manifest_path = os.path.join(root, "manifest.csv")
    depression = _read_manifest(manifest_path) if os.path.isfile(manifest_path) else {}

    samples: list[Sample] = []
    train_counts: dict[str, int] = {}
    test_counts: dict[str, int] = {}
    for label, cname in enumerate(class_names):
        cdir = os.path.join(root, cname)
        files = sorted(f for f in os.listdir(cdir) if f.endswith(".pgm"))
        if not files:
            raise DataError(f"class directory {cdir!r} contains no .pgm chips")
        for fname in files:
            rel = f"{cname}/{fname}"
            img = read_pgm(os.path.join(cdir, fname))
            if img.shape[0] < 32 or img.shape[1] < 32:
                raise DataError(f"{rel}: chips must be at least 32x32, got {img.shape}")
            samples.append(Sample(image=img, label=label, class_name=cname,
                                  source_id=rel,
                                  depression_deg=depression.get(rel)))
            if fname.startswith("train_"):
                train_counts[cname] = train_counts.get(cname, 0) + 1
            elif fname.startswith("test_"):
                test_counts[cname] = test_counts.get(cname, 0) + 1
    return samples, DatasetManifest(classes=class_names,
                                    train_counts=train_counts,
                                    test_counts=test_counts)


def split_samples(samples: list[Sample]) -> tuple[list[Sample], list[Sample]]:
    """Partition loaded chips by the train_/test_ file-name convention.

    Chips without either prefix land in the train split (single-split
    datasets stay usable)."""
    train = [s for s in samples if not os.path.basename(s.source_id).startswith("test_")]
    test = [s for s in samples if os.path.basename(s.source_id).startswith("test_")]
    return train, test


# ---------------------------------------------------------------------------
# Limited-sample subsampling
# ---------------------------------------------------------------------------

def subsample_per_class(samples: list[Sample], k: int, seed: int) -> list[Sample]:
    """Uniform draw without replacement of k chips per class.

    Deterministic per seed; independent across classes; output is ordered
    by (label, source_id). Raises naming any class smaller than k.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    by_class: dict[int, list[Sample]] = {}
    for s in samples:
        by_class.setdefault(s.label, []).append(s)
    rng = np.random.default_rng(seed)
    chosen: list[Sample] = []
    for label in sorted(by_class):
        pool = sorted(by_class[label], key=lambda s: s.source_id)
        if len(pool) < k:
            raise ValidationError(
                f"class {pool[0].class_name!r} has {len(pool)} samples, fewer than k={k}"
            )
        idx = rng.choice(len(pool), size=k, replace=False)
        chosen.extend(pool[i] for i in sorted(idx))
    return chosen


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def _bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    # Pixel-center aligned sampling grid.
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def preprocess(sample: Sample, target_resolution: int = 64,
               channel_mode: str = "gray1", dtype=np.float32) -> Tensor:
    """Resize to target x target, standardize per image, lay out channels.

    ``gray1`` keeps one channel; ``replicate3`` copies it three times. An
    all-constant chip standardizes to zeros (std floor), not an error.
    """
    if target_resolution < 32:
        raise ValidationError(
            f"target_resolution must be >= 32, got {target_resolution}"
        )
    if channel_mode not in ("gray1", "replicate3"):
        raise ValidationError(f"unknown channel_mode {channel_mode!r}")
    img = _bilinear_resize(np.asarray(sample.image, dtype=np.float64),
                           target_resolution, target_resolution)
    std = img.std()
    if std <= 1e-6:
        # Effectively constant chip: below the floor there is only noise.
        img = np.zeros_like(img)
    else:
        img = (img - img.mean()) / std
    chans = 1 if channel_mode == "gray1" else 3
    out = np.broadcast_to(img, (chans,) + img.shape).copy()
    return Tensor(out, dtype=dtype)


def batch_tensor(samples: list[Sample], target_resolution: int = 64,
                 channel_mode: str = "gray1", dtype=np.float32) -> Tensor:
    arrays = [preprocess(s, target_resolution, channel_mode, dtype).data for s in samples]
    return Tensor(np.stack(arrays), dtype=dtype)


# ---------------------------------------------------------------------------
# Synthetic chip generator
# ---------------------------------------------------------------------------

TRAIN_DEPRESSION_DEG = 17.0
TEST_DEPRESSION_DEG = 15.0


def _render_chip(layout: np.ndarray, amps: np.ndarray, resolution: int,
                 azimuth_rad: float, jitter: np.ndarray,
                 speckle_rng: np.random.Generator) -> np.ndarray:
    """Rotate the scatterer layout, render Gaussian blobs, apply speckle."""
    cos_a, sin_a = np.cos(azimuth_rad), np.sin(azimuth_rad)
    rot = np.array([[cos_a, -sin_a], [sin_a, cos_a]])
    center = (resolution - 1) / 2.0
    pts = layout @ rot.T + center + jitter
    sigma = resolution / 40.0
    yy, xx = np.mgrid[0:resolution, 0:resolution]
    img = np.zeros((resolution, resolution), dtype=np.float64)
    for (py, px), amp in zip(pts, amps):
        img += amp * np.exp(-((yy - py) ** 2 + (xx - px) ** 2) / (2 * sigma ** 2))
    speckle = speckle_rng.exponential(scale=1.0, size=img.shape)
    return np.clip(img * speckle, 0.0, 1.0)


def synth_sar_generate(num_classes: int = 10, per_class_train: int = 100,
                       per_class_test: int = 50, resolution: int = 64,
                       seed: int = 0) -> tuple[list[Sample], list[Sample], DatasetManifest]:
    """Deterministic stand-in dataset of point-scatterer targets.

    Each class is a fixed layout of 5-9 scatterers; each chip renders the
    layout at a random azimuth in [0,360) with <=2 px translation jitter
    as Gaussian blobs under unit-mean exponential speckle. Train and test
    draw from disjoint random streams.
    """
    if num_classes < 2:
        raise ValidationError(f"num_classes must be >= 2, got {num_classes}")
    if per_class_train < 1 or per_class_test < 0:
        raise ValidationError("per-class counts must be positive (test may be zero)")
    if resolution < 32:
        raise ValidationError(f"resolution must be >= 32, got {resolution}")

    ss = np.random.SeedSequence(seed)
    layout_seq, train_seq, test_seq = ss.spawn(3)
    layout_rng = np.random.default_rng(layout_seq)

    layouts, amplitudes = [], []
    max_radius = 0.35 * resolution
    for _ in range(num_classes):
        n_scatter = int(layout_rng.integers(5, 10))
        radii = layout_rng.uniform(0.15, 1.0, size=n_scatter) * max_radius
        angles = layout_rng.uniform(0.0, 2 * np.pi, size=n_scatter)
        pts = np.stack([radii * np.sin(angles), radii * np.cos(angles)], axis=1)
        layouts.append(pts)
        amplitudes.append(layout_rng.uniform(0.5, 1.0, size=n_scatter))

    class_names = [f"class_{i:02d}" for i in range(num_classes)]

    def make_split(seq, per_class, prefix, depression):
        rng = np.random.default_rng(seq)
        out: list[Sample] = []
        for label, cname in enumerate(class_names):
            for j in range(per_class):
                azimuth = rng.uniform(0.0, 2 * np.pi)
                jitter = rng.uniform(-2.0, 2.0, size=2)
                img = _render_chip(layouts[label], amplitudes[label], resolution,
                                   azimuth, jitter, rng)
                out.append(Sample(image=img, label=label, class_name=cname,
                                  source_id=f"{cname}/{prefix}_{j:04d}.pgm",
                                  depression_deg=depression))
        return out

    train = make_split(train_seq, per_class_train, "train", TRAIN_DEPRESSION_DEG)
    test = make_split(test_seq, per_class_test, "test", TEST_DEPRESSION_DEG)
    manifest = DatasetManifest(
        classes=class_names,
        train_counts={c: per_class_train for c in class_names},
        test_counts={c: per_class_test for c in class_names},
    )
    return train, test, manifest


def write_chip_dataset(out_dir, train: list[Sample], test: list[Sample]) -> int:
    """Write chips in the standard layout plus manifest.csv; returns file count."""
    root = os.fspath(out_dir)
    os.makedirs(root, exist_ok=True)
    rows = []
    count = 0
    for s in list(train) + list(test):
        cdir = os.path.join(root, s.class_name)
        os.makedirs(cdir, exist_ok=True)
        write_pgm(os.path.join(root, s.source_id), s.image)
        depr = "" if s.depression_deg is None else f"{s.depression_deg:g}"
        rows.append(f"{s.source_id},{s.class_name},{depr}")
        count += 1
    rows.sort()
    with open(os.path.join(root, "manifest.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("file,class,depression\n")
        for row in rows:
            fh.write(row + "\n")
    return count
