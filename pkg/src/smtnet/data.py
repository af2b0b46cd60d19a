"""Datasets, PCA and per-class accuracy.

PCA is fit in floating point and then frozen to exact rationals; projecting
and reconstructing with the frozen transform is exact, like the rest of the
inference path.
"""

from __future__ import annotations

import csv
import gzip
import json
import random
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .network import DimensionError, Network, classify, forward
from .rationals import format_rational, parse_rational

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: tuple  # N rows of Fraction tuples
    labels: tuple
    label_names: Optional[tuple] = None

    def __post_init__(self):
        if len(self.features) < 1:
            raise ValueError("dataset has no rows")
        if len(self.features) != len(self.labels):
            raise ValueError(f"{len(self.features)} feature rows but {len(self.labels)} labels")
        d = len(self.features[0])
        if any(len(row) != d for row in self.features):
            raise ValueError("feature rows have different lengths")
        if any(l < 0 for l in self.labels):
            raise ValueError("negative class label")
        if self.label_names is not None and max(self.labels) >= len(self.label_names):
            raise ValueError("class label outside label_names")

    @property
    def dim(self) -> int:
        return len(self.features[0])

    def __len__(self):
        return len(self.labels)

    def as_array(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.features])

    def subset(self, indices) -> "Dataset":
        return Dataset(
            tuple(self.features[i] for i in indices),
            tuple(self.labels[i] for i in indices),
            self.label_names,
        )


def load_csv(path, label_names=None) -> Dataset:
    """``label,f0,f1,...`` rows; a header line is detected and skipped."""
    features, labels = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            try:
                label = int(row[0])
            except ValueError:
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: bad label {row[0]!r}") from None
            try:
                features.append(tuple(parse_rational(v) for v in row[1:]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            labels.append(label)
    return Dataset(tuple(features), tuple(labels), label_names)


def save_csv(data: Dataset, path, header=True) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(["label"] + [f"f{j}" for j in range(data.dim)])
        for label, row in zip(data.labels, data.features):
            writer.writerow([label] + [_csv_number(v) for v in row])


def _csv_number(q: Fraction) -> str:
    # Terminating decimals stay readable; everything else is written as p/q.
    d = q.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d != 1:
        return format_rational(q)
    if q.denominator == 1:
        return str(q.numerator)
    digits = 0
    scaled = q
    while scaled.denominator != 1:
        scaled *= 10
        digits += 1
    sign = "-" if scaled < 0 else ""
    text = str(abs(scaled.numerator)).rjust(digits + 1, "0")
    return f"{sign}{text[:-digits]}.{text[-digits:]}"


def _open_maybe_gz(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx_images(path, limit=None) -> list:
    with _open_maybe_gz(path) as fh:
        magic, count, rows, cols = struct.unpack(">IIII", fh.read(16))
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(f"{path}: bad IDX image magic {magic:#010x}")
        if limit is not None:
            count = min(count, limit)
        raw = np.frombuffer(fh.read(count * rows * cols), dtype=np.uint8)
    if raw.size != count * rows * cols:
        raise ValueError(f"{path}: truncated image data")
    pixels = raw.reshape(count, rows * cols)
    scale = [Fraction(v, 255) for v in range(256)]
    return [tuple(scale[v] for v in img) for img in pixels]


def read_idx_labels(path, limit=None) -> list:
    with _open_maybe_gz(path) as fh:
        magic, count = struct.unpack(">II", fh.read(8))
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(f"{path}: bad IDX label magic {magic:#010x}")
        if limit is not None:
            count = min(count, limit)
        raw = fh.read(count)
    if len(raw) != count:
        raise ValueError(f"{path}: truncated label data")
    return list(raw)


def load_idx(images_path, labels_path, limit=None, label_names=None) -> Dataset:
    images = read_idx_images(images_path, limit)
    labels = read_idx_labels(labels_path, limit)
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    return Dataset(tuple(images), tuple(labels), label_names)


def write_idx(images, labels, images_path, labels_path, shape) -> None:
    """Write uint8 images (N x rows*cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    rows, cols = shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, len(images), rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(bytes(int(l) for l in labels))


def train_test_split(data: Dataset, test_fraction=0.25, seed=0):
    """Deterministic shuffle-and-split; returns ``(train, test)``."""
    order = list(range(len(data)))
    random.Random(seed).shuffle(order)
    n_test = int(round(len(order) * test_fraction))
    return data.subset(sorted(order[n_test:])), data.subset(sorted(order[:n_test]))


# -- PCA --------------------------------------------------------------------------


@dataclass(frozen=True)
class PcaTransform:
    mean: tuple
    components: tuple  # k rows of length d
    rank: Optional[int] = None  # rows beyond the data rank are zero padding

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(Fraction(v) for v in self.mean))
        object.__setattr__(
            self, "components", tuple(tuple(Fraction(v) for v in row) for row in self.components)
        )
        if any(len(row) != len(self.mean) for row in self.components):
            raise ValueError("component rows must match the mean length")
        if self.k > self.d:
            raise ValueError("more components than input dimensions")

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def d(self) -> int:
        return len(self.mean)

    @property
    def padded(self) -> bool:
        return self.rank is not None and self.rank < self.k


def _sign_convention(v: np.ndarray) -> np.ndarray:
    # largest-magnitude entry made positive; first such index on ties,
    # with a few ulps of slack so float noise cannot pick the tie
    mags = np.abs(v)
    i = int(np.flatnonzero(mags >= mags.max() * (1 - 1e-12))[0])
    return -v if v[i] < 0 else v


def pca_fit(data: Dataset, k: int) -> PcaTransform:
    """Top-``k`` principal directions by descending explained variance."""
    X = data.as_array()
    n, d = X.shape
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    if n < 2:
        raise ValueError("PCA needs at least two rows")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    tol = (s[0] if s.size else 0.0) * max(n, d) * np.finfo(float).eps
    rank = int(np.sum(s > tol))
    rows = []
    for i in range(k):
        if i < rank:
            rows.append(_sign_convention(vt[i]))
        else:
            rows.append(np.zeros(d))
    return PcaTransform(
        tuple(Fraction(float(v)) for v in mean),
        tuple(tuple(Fraction(float(v)) for v in row) for row in rows),
        rank=min(rank, k),
    )


def pca_project(t: PcaTransform, x: Sequence) -> tuple:
    if len(x) != t.d:
        raise DimensionError(f"vector has length {len(x)}, transform expects {t.d}")
    centered = [Fraction(v) - m for v, m in zip(x, t.mean)]
    return tuple(sum((c * v for c, v in zip(row, centered)), Fraction(0)) for row in t.components)


def pca_reconstruct(t: PcaTransform, z: Sequence) -> tuple:
    if len(z) != t.k:
        raise DimensionError(f"vector has length {len(z)}, transform expects {t.k}")
    z = [Fraction(v) for v in z]
    return tuple(
        m + sum((zi * row[j] for zi, row in zip(z, t.components)), Fraction(0))
        for j, m in enumerate(t.mean)
    )


def project_dataset(t: PcaTransform, data: Dataset) -> Dataset:
    return Dataset(
        tuple(pca_project(t, row) for row in data.features), data.labels, data.label_names
    )


def pca_to_dict(t: PcaTransform) -> dict:
    doc = {
        "k": t.k,
        "mean": [format_rational(v) for v in t.mean],
        "components": [[format_rational(v) for v in row] for row in t.components],
    }
    if t.rank is not None:
        doc["rank"] = t.rank
    return doc


def pca_from_dict(doc) -> PcaTransform:
    t = PcaTransform(
        tuple(parse_rational(v) for v in doc["mean"]),
        tuple(tuple(parse_rational(v) for v in row) for row in doc["components"]),
        doc.get("rank"),
    )
    if "k" in doc and doc["k"] != t.k:
        raise ValueError(f"declared k={doc['k']} but {t.k} component rows")
    return t


def save_pca(t: PcaTransform, path) -> None:
    Path(path).write_text(json.dumps(pca_to_dict(t), indent=1) + "\n")


def load_pca(path) -> PcaTransform:
    return pca_from_dict(json.loads(Path(path).read_text()))


# -- accuracy -------------------------------------------------------------------


@dataclass(frozen=True)
class AccuracyTable:
    class_names: tuple
    counts: tuple
    correct: tuple

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def total_correct(self) -> int:
        return sum(self.correct)

    @property
    def overall(self) -> float:
        return 100.0 * self.total_correct / self.total

    def accuracy(self, c: int) -> Optional[float]:
        return None if self.counts[c] == 0 else 100.0 * self.correct[c] / self.counts[c]

    def rows(self):
        """``(name, accuracy or None, correct, count)`` per class."""
        return [
            (name, self.accuracy(c), self.correct[c], self.counts[c])
            for c, name in enumerate(self.class_names)
        ]


def evaluate_accuracy(net: Network, data: Dataset, order=None) -> AccuracyTable:
    """Exact forward plus argmax on every row.

    ``order`` lists class indices in display order (default: label order of
    the network, or index order).
    """
    if data.dim != net.input_dim:
        raise DimensionError(f"dataset has {data.dim} features, network expects {net.input_dim}")
    m = net.output_dim
    if max(data.labels) >= m:
        raise ValueError(f"dataset label {max(data.labels)} outside {m} network outputs")
    counts = [0] * m
    correct = [0] * m
    for x, label in zip(data.features, data.labels):
        counts[label] += 1
        if classify(forward(net, x)) == label:
            correct[label] += 1
    names = [net.label_of(c) for c in range(m)]
    order = list(range(m)) if order is None else list(order)
    return AccuracyTable(
        tuple(names[c] for c in order),
        tuple(counts[c] for c in order),
        tuple(correct[c] for c in order),
    )


def format_accuracy_table(tables: dict) -> str:
    """Plain-text table, one column per named network (Original, Modified...)."""
    names = list(tables)
    first = tables[names[0]]
    width = max(8, *(len(n) + 2 for n in names))
    if any(c == 0 for t in tables.values() for c in t.counts):
        width = max(width, 17)
    rule = "-" * (8 + width * len(names))
    lines = ["Class".ljust(8) + "".join(n.rjust(width) for n in names), rule]

    def cell(value):
        return "n/a (0 samples)" if value is None else f"{value:.1f}"

    for c, cname in enumerate(first.class_names):
        lines.append(
            f"'{cname}'".ljust(8) + "".join(cell(tables[n].accuracy(c)).rjust(width) for n in names)
        )
    lines.append(rule)
    lines.append("Overall".ljust(8) + "".join(f"{tables[n].overall:.1f}".rjust(width) for n in names))
    return "\n".join(lines)


def write_accuracy_csv(tables: dict, path) -> None:
    names = list(tables)
    first = tables[names[0]]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["class"]
        for n in names:
            header += [f"{n}_accuracy", f"{n}_correct", f"{n}_count"]
        writer.writerow(header)
        for c, cname in enumerate(first.class_names):
            row = [cname]
            for n in names:
                acc = tables[n].accuracy(c)
                row += ["n/a" if acc is None else f"{acc:.1f}", tables[n].correct[c], tables[n].counts[c]]
            writer.writerow(row)
        row = ["overall"]
        for n in names:
            t = tables[n]
            row += [f"{t.overall:.1f}", t.total_correct, t.total]
        writer.writerow(row)
