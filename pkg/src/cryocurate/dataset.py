"""Labeled image datasets from class-underscore named files.

Filenames follow ``<class>_<suffix>.<ext>``; the prefix before the first
underscore is the label. Manifests store paths only, so building one
opens no image files; decoding happens per item in ``get_item``.
Transform arithmetic accumulates in float64 and outputs float32.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import (
    ClassTooSmall,
    DecodeError,
    EmptyDataset,
    ShapeMismatch,
    UnknownClass,
)
from .imgformats import FileFormat, ImageArray, detect_format, read_mrc, read_npy, write_npy

log = logging.getLogger(__name__)


# --- transforms -------------------------------------------------------------

def transform_normalize_minmax(data: np.ndarray) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    lo, hi = arr.min(), arr.max()
    if hi == lo:
        return np.zeros_like(arr, dtype=np.float32)
    return ((arr - lo) / (hi - lo)).astype(np.float32)


def transform_standardize(data: np.ndarray) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    std = arr.std()
    if std == 0.0:
        return np.zeros_like(arr, dtype=np.float32)
    return ((arr - arr.mean()) / std).astype(np.float32)


def gaussian_kernel(sigma: float, kernel: int) -> np.ndarray:
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if kernel < 3 or kernel % 2 == 0:
        raise ValueError(f"kernel must be an odd int >= 3, got {kernel}")
    offsets = np.arange(kernel, dtype=np.float64) - kernel // 2
    weights = np.exp(-0.5 * (offsets / sigma) ** 2)
    return weights / weights.sum()


def transform_gaussian_blur(data: np.ndarray, sigma: float, kernel: int = 5) -> np.ndarray:
    """Separable Gaussian convolution with reflect padding."""
    arr = np.asarray(data, dtype=np.float64)
    weights = gaussian_kernel(sigma, kernel)
    half = kernel // 2
    for axis in range(arr.ndim):
        if arr.shape[axis] == 1:
            continue
        pad = [(0, 0)] * arr.ndim
        pad[axis] = (half, half)
        padded = np.pad(arr, pad, mode="reflect")
        out = np.zeros_like(arr)
        for k in range(kernel):
            sl = [slice(None)] * arr.ndim
            sl[axis] = slice(k, k + arr.shape[axis])
            out += weights[k] * padded[tuple(sl)]
        arr = out
    return arr.astype(np.float32)


def _resample_axis(arr: np.ndarray, axis: int, target: int) -> np.ndarray:
    n = arr.shape[axis]
    if n == target:
        return arr
    scale = n / target
    centers = (np.arange(target, dtype=np.float64) + 0.5) * scale - 0.5
    lower = np.clip(np.floor(centers).astype(int), 0, n - 1)
    upper = np.clip(lower + 1, 0, n - 1)
    frac = np.clip(centers - lower, 0.0, 1.0)
    shape = [1] * arr.ndim
    shape[axis] = target
    frac = frac.reshape(shape)
    return (np.take(arr, lower, axis=axis) * (1.0 - frac)
            + np.take(arr, upper, axis=axis) * frac)


def transform_rescale(data: np.ndarray, target) -> np.ndarray:
    """Bilinear (2D) / trilinear (3D) resample to the target shape.

    ``target`` is either a shape tuple matching the input rank or a
    single scale factor applied to every axis.
    """
    arr = np.asarray(data, dtype=np.float64)
    if isinstance(target, (int, float)):
        target_shape = tuple(max(1, round(dim * target)) for dim in arr.shape)
    else:
        target_shape = tuple(int(t) for t in target)
        if len(target_shape) != arr.ndim:
            raise ValueError(
                f"target rank {len(target_shape)} != data rank {arr.ndim}")
    if any(t < 1 for t in target_shape):
        raise ValueError(f"target dims must be >= 1, got {target_shape}")
    for axis, t in enumerate(target_shape):
        arr = _resample_axis(arr, axis, t)
    return arr.astype(np.float32)


def transform_pad_to(data: np.ndarray, shape) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    if len(shape) != arr.ndim:
        raise ValueError(f"pad rank {len(shape)} != data rank {arr.ndim}")
    pad = []
    for have, want in zip(arr.shape, shape):
        if want < have:
            raise ValueError(f"pad target {want} smaller than data size {have}")
        before = (want - have) // 2
        pad.append((before, want - have - before))
    return np.pad(arr, pad).astype(np.float32)


@dataclass(frozen=True)
class TransformSpec:
    """Ordered transform pipeline; order is significant."""

    steps: tuple = ()

    @classmethod
    def parse(cls, text: str) -> "TransformSpec":
        """Parse e.g. ``"standardize,blur:1.5:5,rescale:32x32"``.

        Step grammar: ``minmax`` | ``standardize`` | ``blur:<sigma>[:<kernel>]``
        | ``rescale:<dims 'x'-separated | factor>`` | ``pad:<dims>``.
        """
        steps = []
        for chunk in filter(None, (part.strip() for part in text.split(","))):
            name, _, args = chunk.partition(":")
            if name in ("minmax", "normalize_minmax"):
                steps.append(("minmax",))
            elif name == "standardize":
                steps.append(("standardize",))
            elif name == "blur":
                sigma, _, kernel = args.partition(":")
                steps.append(("blur", float(sigma), int(kernel) if kernel else 5))
            elif name == "rescale":
                if "x" in args:
                    steps.append(("rescale", tuple(int(d) for d in args.split("x"))))
                else:
                    steps.append(("rescale", float(args)))
            elif name == "pad":
                steps.append(("pad", tuple(int(d) for d in args.split("x"))))
            else:
                raise ValueError(f"unknown transform {name!r}")
        return cls(steps=tuple(steps))

    def describe(self) -> list[str]:
        out = []
        for step in self.steps:
            name, *args = step
            if name in ("rescale", "pad") and isinstance(args[0], tuple):
                out.append(f"{name}:" + "x".join(str(d) for d in args[0]))
            elif args:
                out.append(name + ":" + ":".join(str(a) for a in args))
            else:
                out.append(name)
        return out

    def apply(self, data: np.ndarray) -> np.ndarray:
        arr = np.asarray(data)
        for step in self.steps:
            name, *args = step
            if name == "minmax":
                arr = transform_normalize_minmax(arr)
            elif name == "standardize":
                arr = transform_standardize(arr)
            elif name == "blur":
                arr = transform_gaussian_blur(arr, *args)
            elif name == "rescale":
                arr = transform_rescale(arr, args[0])
            elif name == "pad":
                arr = transform_pad_to(arr, args[0])
            else:
                raise ValueError(f"unknown transform {name!r}")
        return arr


# --- manifest ---------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    path: Path
    class_label: str
    suffix: str


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple
    classes: tuple
    datatype: str
    dataset_size: int | None = None
    transforms: TransformSpec = field(default_factory=TransformSpec)

    def __len__(self) -> int:
        return len(self.records)

    def label_index(self, label: str) -> int:
        return self.classes.index(label)


def discover(datapath, datatype: str = "mrc", classes=None, dataset_size=None,
             transforms: TransformSpec | None = None) -> DatasetManifest:
    datapath = Path(datapath)
    records = []
    for path in sorted(datapath.glob(f"*.{datatype}")):
        stem = path.name[: -(len(datatype) + 1)]
        if "_" not in stem:
            log.warning("skipping %s: no class-underscore prefix", path.name)
            continue
        label, suffix = stem.split("_", 1)
        records.append(Record(path=path, class_label=label, suffix=suffix))
    if classes is not None:
        classes = list(classes)
        records = [r for r in records if r.class_label in classes]
        present = {r.class_label for r in records}
        for label in classes:
            if label not in present:
                raise UnknownClass(f"class {label!r} has no files in {datapath}")
    else:
        classes = sorted({r.class_label for r in records})
    if dataset_size is not None:
        records = records[:dataset_size]
        classes = [c for c in classes if any(r.class_label == c for r in records)]
    if not records:
        raise EmptyDataset(f"no *.{datatype} files with class labels in {datapath}")
    return DatasetManifest(records=tuple(records), classes=tuple(classes),
                           datatype=datatype, dataset_size=dataset_size,
                           transforms=transforms or TransformSpec())


def _read_file(path: Path) -> bytes:
    return Path(path).read_bytes()


def _decode(payload: bytes, path) -> ImageArray:
    fmt = detect_format(payload, filename_hint=str(path))
    if fmt == FileFormat.MRC:
        _header, image = read_mrc(payload)
        return image
    if fmt == FileFormat.NPY:
        return read_npy(payload)
    raise DecodeError(f"{path}: not a decodable image file")


def get_item(manifest: DatasetManifest, index: int) -> tuple[ImageArray, str]:
    """Read, decode and transform exactly one file from disk."""
    record = manifest.records[index]
    try:
        image = _decode(_read_file(record.path), record.path)
    except DecodeError:
        raise
    except Exception as exc:
        raise DecodeError(f"{record.path}: {exc}") from exc
    data = manifest.transforms.apply(image.data)
    return ImageArray(data, voxel_size=image.voxel_size), record.class_label


# --- split ------------------------------------------------------------------

@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0,1), got {self.train_fraction}")


def _split_indices(manifest: DatasetManifest, config: SplitConfig):
    # PRNG pinned to CPython's Mersenne Twister, seeded with "<seed>:<label>"
    if config.stratified:
        groups = [(label, [i for i, r in enumerate(manifest.records)
                           if r.class_label == label])
                  for label in manifest.classes]
        for label, indices in groups:
            if len(indices) < 2:
                raise ClassTooSmall(
                    f"class {label!r} has {len(indices)} item(s); need >= 2 to split")
    else:
        groups = [("", list(range(len(manifest.records))))]
    train, val = [], []
    for label, indices in groups:
        rng = random.Random(f"{config.seed}:{label}")
        shuffled = list(indices)
        rng.shuffle(shuffled)
        n_train = math.ceil(config.train_fraction * len(shuffled))
        train.extend(shuffled[:n_train])
        val.extend(shuffled[n_train:])
    return sorted(train), sorted(val)


def split(manifest: DatasetManifest, config: SplitConfig):
    train_idx, val_idx = _split_indices(manifest, config)

    def subset(indices):
        records = tuple(manifest.records[i] for i in indices)
        return replace(manifest, records=records, dataset_size=None)

    return subset(train_idx), subset(val_idx)


# --- batching / export ------------------------------------------------------

@dataclass
class Batch:
    data: np.ndarray          # (B, ...) float32
    labels: np.ndarray        # (B,) int64 into `classes`
    classes: tuple
    meta: list                # (path, suffix) per item


def batches(manifest: DatasetManifest, batch_size: int,
            drop_last: bool = False) -> Iterator[Batch]:
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    for start in range(0, len(manifest.records), batch_size):
        chunk = manifest.records[start:start + batch_size]
        if drop_last and len(chunk) < batch_size:
            return
        arrays, labels, meta = [], [], []
        for offset, record in enumerate(chunk):
            image, label = get_item(manifest, start + offset)
            arr = np.asarray(image.data, dtype=np.float32)
            if arrays and arr.shape != arrays[0].shape:
                raise ShapeMismatch(
                    f"{chunk[0].path} has shape {arrays[0].shape} but "
                    f"{record.path} has shape {arr.shape}; add rescale/pad")
            arrays.append(arr)
            labels.append(manifest.label_index(label))
            meta.append((str(record.path), record.suffix))
        yield Batch(data=np.stack(arrays), labels=np.asarray(labels, dtype=np.int64),
                    classes=manifest.classes, meta=meta)


def export(manifest: DatasetManifest, out_dir, batch_size: int) -> dict:
    """Write NPY batches plus labels.csv, classes.txt and an export index."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    batch_entries = []
    with open(out_dir / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label", "path", "suffix"])
        row = 0
        for k, batch in enumerate(batches(manifest, batch_size)):
            name = f"batch_{k}.npy"
            (out_dir / name).write_bytes(write_npy(batch.data))
            batch_entries.append({"file": name, "shape": list(batch.data.shape),
                                  "count": int(len(batch.labels))})
            for label_idx, (path, suffix) in zip(batch.labels, batch.meta):
                writer.writerow([row, manifest.classes[label_idx], path, suffix])
                row += 1
    (out_dir / "classes.txt").write_text(
        "".join(c + "\n" for c in manifest.classes), encoding="utf-8")
    index = {
        "batches": batch_entries,
        "batch_size": batch_size,
        "dtype": "float32",
        "classes": list(manifest.classes),
        "n_records": len(manifest.records),
        "datatype": manifest.datatype,
        "transforms": manifest.transforms.describe(),
    }
    (out_dir / "export_index.json").write_text(json.dumps(index, indent=2),
                                               encoding="utf-8")
    return index


def load_export(out_dir):
    """Read an exported artifact set back as (batches, labels, classes)."""
    out_dir = Path(out_dir)
    index = json.loads((out_dir / "export_index.json").read_text())
    arrays = [read_npy((out_dir / entry["file"]).read_bytes()).data
              for entry in index["batches"]]
    classes = (out_dir / "classes.txt").read_text().splitlines()
    with open(out_dir / "labels.csv", newline="") as fh:
        labels = [row["label"] for row in csv.DictReader(fh)]
    return arrays, labels, classes
