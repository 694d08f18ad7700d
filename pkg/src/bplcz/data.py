"""So2Sat LCZ42 ingestion, balanced splitting and synthetic fixtures.

Samples are stored channel-last, exactly as in the So2Sat containers:
SAR patches are ``[32, 32, 8]`` and multi-spectral patches ``[32, 32, 10]``.
Labels are 0-based; the LCZ codes ``1..10, A..G`` map in order to ``0..16``.
"""

from __future__ import annotations

import hashlib
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import h5py
import numpy as np

PATCH_SIZE = 32
SAR_CHANNELS = 8
MS_CHANNELS = 10
NUM_CLASSES = 17

LCZ_CODES = tuple([str(i) for i in range(1, 11)] + list("ABCDEFG"))


class DataError(ValueError):
    """Raised for malformed containers and impossible split requests."""


@dataclass(frozen=True)
class Sample:
    sar: np.ndarray
    ms: np.ndarray
    label: int

    def __post_init__(self):
        if self.sar.shape != (PATCH_SIZE, PATCH_SIZE, SAR_CHANNELS):
            raise DataError(f"sar patch has shape {self.sar.shape}, expected (32, 32, 8)")
        if self.ms.shape != (PATCH_SIZE, PATCH_SIZE, MS_CHANNELS):
            raise DataError(f"ms patch has shape {self.ms.shape}, expected (32, 32, 10)")
        if not 0 <= int(self.label) < NUM_CLASSES:
            raise DataError(f"label {self.label} outside [0, 16]")


class SampleSet(Sequence):
    """Array-backed sequence of :class:`Sample`.

    ``ids`` are the row indices in the source container, so two sets drawn
    from the same source can be checked for overlap.
    """

    def __init__(self, sar, ms, labels, ids=None):
        self.sar = np.ascontiguousarray(sar, dtype=np.float32)
        self.ms = np.ascontiguousarray(ms, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        n = len(self.labels)
        self.ids = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        if self.sar.shape != (n, PATCH_SIZE, PATCH_SIZE, SAR_CHANNELS):
            raise DataError(f"sen1 has shape {self.sar.shape}, expected ({n}, 32, 32, 8)")
        if self.ms.shape != (n, PATCH_SIZE, PATCH_SIZE, MS_CHANNELS):
            raise DataError(f"sen2 has shape {self.ms.shape}, expected ({n}, 32, 32, 10)")
        if self.ids.shape != (n,):
            raise DataError("ids must have one entry per sample")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self.subset(np.arange(len(self))[i])
        return Sample(self.sar[i], self.ms[i], int(self.labels[i]))

    def subset(self, indices) -> "SampleSet":
        indices = np.asarray(indices, dtype=np.int64)
        return SampleSet(self.sar[indices], self.ms[indices], self.labels[indices], self.ids[indices])

    def class_counts(self, class_count: int = NUM_CLASSES) -> np.ndarray:
        return np.bincount(self.labels, minlength=class_count)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.sar, self.ms, self.labels, self.ids):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


@dataclass
class DatasetSplit:
    train: SampleSet
    test: SampleSet
    class_count: int = NUM_CLASSES
    provenance: dict = field(default_factory=dict)

    def channel_stats(self):
        """Per-channel (mean, std) of the training split, as stored in provenance."""
        p = self.provenance
        return tuple(
            np.array([float(v) for v in p[key].split(",")], dtype=np.float32)
            for key in ("sar_mean", "sar_std", "ms_mean", "ms_std")
        )


def _channel_stats(x: np.ndarray):
    flat = x.reshape(-1, x.shape[-1]).astype(np.float64)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def _fmt_floats(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def load_so2sat(path) -> SampleSet:
    """Read a So2Sat LCZ42 HDF5 container (``sen1``, ``sen2``, one-hot ``label``)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    try:
        f = h5py.File(path, "r")
    except OSError as exc:
        raise DataError(f"{path}: not a readable HDF5 container ({exc})") from exc
    with f:
        for name in ("sen1", "sen2", "label"):
            if name not in f:
                raise DataError(f"{path}: missing array '{name}'")
        sen1 = np.asarray(f["sen1"])
        sen2 = np.asarray(f["sen2"])
        onehot = np.asarray(f["label"])

    n = sen1.shape[0] if sen1.ndim else 0
    expected = {
        "sen1": (sen1, (n, PATCH_SIZE, PATCH_SIZE, SAR_CHANNELS)),
        "sen2": (sen2, (n, PATCH_SIZE, PATCH_SIZE, MS_CHANNELS)),
        "label": (onehot, (n, NUM_CLASSES)),
    }
    for name, (arr, shape) in expected.items():
        if arr.shape != shape:
            raise DataError(f"{path}: array '{name}' has shape {arr.shape}, expected {shape}")

    sums = onehot.sum(axis=1)
    binary = np.all((onehot == 0) | (onehot == 1), axis=1)
    bad = np.flatnonzero((sums != 1) | ~binary)
    if bad.size:
        row = int(bad[0])
        raise DataError(
            f"{path}: array 'label' row {row} is not one-hot (row sum {sums[row]:g})"
        )
    for name, arr in (("sen1", sen1), ("sen2", sen2)):
        finite = np.isfinite(arr).reshape(n, -1).all(axis=1)
        if not finite.all():
            raise DataError(f"{path}: array '{name}' row {int(np.flatnonzero(~finite)[0])} has non-finite values")

    return SampleSet(sen1, sen2, onehot.argmax(axis=1))


def write_so2sat(samples: SampleSet, path) -> Path:
    """Write ``samples`` in the So2Sat container layout."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    onehot = np.zeros((len(samples), NUM_CLASSES), dtype=np.float64)
    onehot[np.arange(len(samples)), samples.labels] = 1.0
    with h5py.File(path, "w") as f:
        f.create_dataset("sen1", data=samples.sar.astype(np.float64))
        f.create_dataset("sen2", data=samples.ms.astype(np.float64))
        f.create_dataset("label", data=onehot)
    return path


def balanced_subsample(
    dataset: SampleSet,
    per_class: int,
    test_size: int,
    seed: int,
    class_count: int = NUM_CLASSES,
    source: str = "<memory>",
) -> DatasetSplit:
    """Draw ``per_class`` training samples per class and ``test_size`` test samples.

    Training indices come from a seeded shuffle within each class; the test
    set is a uniform draw from everything left over, without class balancing.
    Per-channel normalization statistics of the training split are recorded
    in the provenance.
    """
    if per_class < 1 or test_size < 0:
        raise DataError("per_class must be >= 1 and test_size >= 0")
    labels = dataset.labels
    counts = np.bincount(labels, minlength=class_count)
    for c in range(class_count):
        if counts[c] < per_class:
            raise DataError(
                f"class {c} (LCZ {LCZ_CODES[c]}) has {counts[c]} samples, needs {per_class}"
            )

    rng = np.random.default_rng(seed)
    train_idx = []
    for c in range(class_count):
        members = np.flatnonzero(labels == c)
        train_idx.append(rng.permutation(members)[:per_class])
    train_idx = np.concatenate(train_idx)

    remaining = np.setdiff1d(np.arange(len(dataset)), train_idx)
    if remaining.size < test_size:
        raise DataError(f"only {remaining.size} samples left for a test set of {test_size}")
    test_idx = np.sort(rng.permutation(remaining)[:test_size])

    train = dataset.subset(train_idx)
    test = dataset.subset(test_idx)
    sar_mean, sar_std = _channel_stats(train.sar)
    ms_mean, ms_std = _channel_stats(train.ms)
    provenance = {
        "source": source,
        "seed": str(seed),
        "per_class": str(per_class),
        "test_size": str(test_size),
        "class_count": str(class_count),
        "train_size": str(len(train)),
        "sar_mean": _fmt_floats(sar_mean),
        "sar_std": _fmt_floats(sar_std),
        "ms_mean": _fmt_floats(ms_mean),
        "ms_std": _fmt_floats(ms_std),
    }
    return DatasetSplit(train, test, class_count, provenance)


def synthetic_means(class_count: int = NUM_CLASSES) -> np.ndarray:
    """Per-class, per-channel mean levels, shape ``[class_count, 18]``.

    Level for class k, channel c is ``((7 (k+1) (c+1)) mod 17) / 8 - 1``. Since
    7 is invertible mod 17, the first channel alone already separates all
    17 classes.
    """
    k = np.arange(1, class_count + 1)[:, None]
    c = np.arange(1, SAR_CHANNELS + MS_CHANNELS + 1)[None, :]
    return ((7 * k * c) % 17) / 8.0 - 1.0


def make_synthetic(class_count: int, per_class: int, noise_scale: float, seed: int) -> SampleSet:
    """Class-separable desk-scale dataset: fixed per-class channel means plus Gaussian noise."""
    if not 2 <= class_count <= NUM_CLASSES:
        raise ValueError(f"class_count must be in [2, 17], got {class_count}")
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    if not noise_scale >= 0:
        raise ValueError(f"noise_scale must be >= 0, got {noise_scale}")

    means = synthetic_means(class_count)
    labels = np.repeat(np.arange(class_count), per_class)
    n = len(labels)
    rng = np.random.default_rng(seed)
    shape = (n, PATCH_SIZE, PATCH_SIZE)
    sar = means[labels, None, None, :SAR_CHANNELS] + noise_scale * rng.standard_normal(shape + (SAR_CHANNELS,))
    ms = means[labels, None, None, SAR_CHANNELS:] + noise_scale * rng.standard_normal(shape + (MS_CHANNELS,))
    return SampleSet(sar, ms, labels)


def save_split(split: DatasetSplit, path) -> Path:
    """Cache a split as ``<path>.npz`` plus a ``key=value`` provenance sidecar ``<path>.txt``."""
    path = Path(path).with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for part in ("train", "test"):
        s = getattr(split, part)
        arrays.update({f"{part}_sar": s.sar, f"{part}_ms": s.ms, f"{part}_labels": s.labels, f"{part}_ids": s.ids})
    np.savez(path, class_count=np.int64(split.class_count), **arrays)
    lines = [f"{k}={v}" for k, v in split.provenance.items()]
    path.with_suffix(".txt").write_text("\n".join(lines) + "\n")
    return path


def read_provenance(path) -> dict:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"{path}:{n}: expected key=value")
        out[key.strip()] = value.strip()
    return out


def load_split(path) -> DatasetSplit:
    path = Path(path).with_suffix(".npz")
    if not path.exists():
        raise DataError(f"{path}: no such split file")
    with np.load(path) as z:
        parts = {
            part: SampleSet(z[f"{part}_sar"], z[f"{part}_ms"], z[f"{part}_labels"], z[f"{part}_ids"])
            for part in ("train", "test")
        }
        class_count = int(z["class_count"])
    sidecar = path.with_suffix(".txt")
    provenance = read_provenance(sidecar) if sidecar.exists() else {}
    return DatasetSplit(parts["train"], parts["test"], class_count, provenance)
