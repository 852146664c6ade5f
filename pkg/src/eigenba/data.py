"""Datasets: synthetic blobs, CSV files and IDX image files.

All features live in [0, 1], the valid input range of the attacks.
"""

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DataError
from .linalg import dct_matrix


@dataclass
class Dataset:
    X: np.ndarray  # (N, n) float64 in [0, 1]
    y: np.ndarray  # (N,) int64
    input_shape: tuple
    name: str = "dataset"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(len(self.y), -1)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.input_shape = tuple(int(s) for s in self.input_shape)
        if self.X.shape[1] != int(np.prod(self.input_shape)):
            raise DataError(f"feature count {self.X.shape[1]} does not match shape {self.input_shape}")

    def __len__(self):
        return len(self.y)

    @property
    def class_count(self):
        return int(self.y.max()) + 1 if len(self.y) else 0

    def subset(self, idx, name=None):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.input_shape, name or self.name)

    def split(self, fractions, seed=0):
        """Disjoint random splits with the given size fractions (summing to <= 1)."""
        if sum(fractions) > 1 + 1e-12:
            raise ArgumentError("split fractions sum past 1")
        order = np.random.default_rng(seed).permutation(len(self))
        out, start = [], 0
        for i, frac in enumerate(fractions):
            stop = start + int(round(frac * len(self)))
            out.append(self.subset(np.sort(order[start:stop]), f"{self.name}[{i}]"))
            start = stop
        return out


def _rescale(X):
    lo, hi = X.min(), X.max()
    if hi == lo:
        return np.zeros_like(X)
    return (X - lo) / (hi - lo)


def make_blob_dataset(classes, dim, n_per_class, separation=4.0, seed=0, spread=1.0, input_shape=None):
    """Gaussian blobs, one per class, with centres roughly ``separation`` apart.

    Features are affinely rescaled (one shared map) into [0, 1].
    """
    if n_per_class < 1 or classes < 1:
        raise DataError("empty dataset requested")
    rng = np.random.default_rng(seed)
    centres = rng.standard_normal((classes, dim)) * (separation / np.sqrt(2 * dim))
    y = np.repeat(np.arange(classes), n_per_class)
    X = centres[y] + spread / np.sqrt(dim) * rng.standard_normal((len(y), dim))
    order = rng.permutation(len(y))
    return Dataset(_rescale(X[order]), y[order], input_shape or (dim,), name=f"blobs-{seed}")


def make_pattern_dataset(classes, side, n_per_class, noise=0.15, seed=0, smooth=3):
    """Single-channel ``side`` x ``side`` images: a smooth random prototype per
    class, randomly shifted in intensity and corrupted with pixel noise."""
    if n_per_class < 1 or classes < 1:
        raise DataError("empty dataset requested")
    rng = np.random.default_rng(seed)
    freq = np.zeros((classes, side, side))
    freq[:, :smooth, :smooth] = rng.standard_normal((classes, smooth, smooth))
    C = dct_matrix(side)
    protos = np.einsum("ui,cuv,vj->cij", C, freq, C)
    protos /= np.abs(protos).max(axis=(1, 2), keepdims=True)
    y = np.repeat(np.arange(classes), n_per_class)
    X = 0.5 + 0.3 * protos[y] + noise * rng.standard_normal((len(y), side, side))
    X += 0.05 * rng.standard_normal((len(y), 1, 1))
    order = rng.permutation(len(y))
    return Dataset(np.clip(X[order], 0.0, 1.0), y[order], (1, side, side), name=f"patterns-{seed}")


# ------------------------------------------------------------------- files


def save_csv_dataset(dataset, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"x{i}" for i in range(dataset.X.shape[1])])
        for label, row in zip(dataset.y, dataset.X):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def load_csv_dataset(path, input_shape=None):
    """Rows of ``label, feature...``; a header row is skipped if present.

    Features outside [0, 1] trigger one shared min-max rescale.
    """
    labels, rows = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                label = int(row[0])
                values = [float(v) for v in row[1:]]
            except ValueError:
                if lineno == 1:
                    continue
                raise DataError(f"{path}:{lineno}: non-numeric field") from None
            labels.append(label)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no samples")
    if len({len(r) for r in rows}) != 1:
        raise DataError(f"{path}: rows have differing feature counts")
    X = np.array(rows)
    if X.min() < 0 or X.max() > 1:
        X = _rescale(X)
    return Dataset(X, np.array(labels), input_shape or (X.shape[1],), name=Path(path).stem)


_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def read_idx(path):
    """Array from an IDX file (the MNIST container format)."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0 or raw[2] not in _IDX_TYPES:
        raise DataError(f"{path}: not an IDX file")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = np.dtype(_IDX_TYPES[raw[2]])
    count = int(np.prod(dims)) if dims else 1
    if len(raw) - header != count * dtype.itemsize:
        raise DataError(f"{path}: IDX payload size does not match its header")
    return np.frombuffer(raw, dtype=dtype, offset=header).reshape(dims)


def write_idx(array, path):
    codes = {np.dtype(v).newbyteorder("="): k for k, v in _IDX_TYPES.items()}
    array = np.asarray(array)
    code = codes.get(array.dtype.newbyteorder("="))
    if code is None:
        raise ArgumentError(f"unsupported IDX dtype {array.dtype}")
    header = bytes([0, 0, code, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.astype(_IDX_TYPES[code]).tobytes())


def load_idx_dataset(images_path, labels_path):
    """Images (N, H, W) or (N, C, H, W) plus labels; uint8 pixels scaled by 1/255."""
    images = read_idx(images_path)
    labels = read_idx(labels_path).astype(np.int64).ravel()
    if len(images) != len(labels):
        raise DataError("image and label counts differ")
    X = images.astype(np.float64)
    X = X / 255.0 if images.dtype == np.uint8 else _rescale(X)
    shape = images.shape[1:]
    if len(shape) == 2:
        shape = (1,) + shape
    return Dataset(X.reshape(len(labels), -1), labels, shape, name=Path(images_path).stem)
