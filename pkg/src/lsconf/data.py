"""Labeled feature datasets: synthetic blobs and CSV ingestion."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ParseError


class Split(str, enum.Enum):
    TRAIN = "Train"
    EVAL = "Eval"


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int = field(default=-1)
    split: Split = Split.TRAIN

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels).reshape(-1)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ConfigurationError("features must be a non-empty 2-D array")
        if x.shape[0] != y.shape[0]:
            raise ConfigurationError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(x)):
            raise ConfigurationError("features must be finite")
        y = y.astype(np.int64)
        n_classes = self.n_classes if self.n_classes >= 0 else int(y.max()) + 1
        if y.min() < 0 or y.max() >= n_classes:
            raise ConfigurationError(f"labels must lie in [0, {n_classes})")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "n_classes", int(n_classes))
        object.__setattr__(self, "split", Split(self.split))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes_present(self) -> int:
        return int(len(np.unique(self.labels)))

    def select(self, mask_or_idx) -> "LabeledDataset":
        return LabeledDataset(self.features[mask_or_idx], self.labels[mask_or_idx], self.n_classes, self.split)

    def with_classes(self, classes) -> "LabeledDataset":
        return self.select(np.isin(self.labels, np.asarray(classes)))

    def relabeled(self, n_classes: int) -> "LabeledDataset":
        return LabeledDataset(self.features, self.labels, n_classes, self.split)


def concat(*parts: LabeledDataset) -> LabeledDataset:
    parts = [p for p in parts if p is not None and len(p)]
    if not parts:
        raise ConfigurationError("nothing to concatenate")
    return LabeledDataset(
        np.concatenate([p.features for p in parts]),
        np.concatenate([p.labels for p in parts]),
        max(p.n_classes for p in parts),
        parts[0].split,
    )


def gen_blobs(
    k: int,
    d: int,
    per_class: int,
    spread: float = 0.5,
    seed: int = 0,
    *,
    min_separation: float | None = None,
    anchor_norm: float = 10.0,
    split: Split = Split.TRAIN,
) -> LabeledDataset:
    """Isotropic Gaussian blobs around k random anchors of norm ``anchor_norm``.

    Anchors are seeded random directions; a draw closer than
    ``min_separation`` (default ``6 * spread``) to an earlier anchor is
    redrawn so low-dimensional blobs do not collide.  Rows are grouped by
    class, ``per_class`` rows each.
    """
    if k < 1 or d < 1 or per_class < 1:
        raise ConfigurationError("k, d and per_class must be positive")
    if spread < 0:
        raise ConfigurationError("spread must be non-negative")
    if min_separation is None:
        min_separation = 6.0 * spread
    rng = np.random.default_rng(seed)
    anchors = np.empty((k, d))
    for c in range(k):
        for _ in range(10_000):
            v = rng.standard_normal(d)
            norm = np.linalg.norm(v)
            if norm == 0:
                continue
            v *= anchor_norm / norm
            if c == 0 or np.min(np.linalg.norm(anchors[:c] - v, axis=1)) >= min_separation:
                break
        else:
            raise ConfigurationError(
                f"could not place {k} anchors {min_separation} apart in {d} dimensions"
            )
        anchors[c] = v
    noise = rng.standard_normal((k, per_class, d)) * spread
    x = (anchors[:, None, :] + noise).reshape(k * per_class, d)
    y = np.repeat(np.arange(k), per_class)
    return LabeledDataset(x, y, k, split)


def unique_label_expand(ds: LabeledDataset) -> LabeledDataset:
    """Give every row its own class: labels become 0..m-1 in row order."""
    m = len(ds)
    return LabeledDataset(ds.features, np.arange(m), m, ds.split)


def train_eval_split(ds: LabeledDataset, eval_fraction: float, seed: int = 0):
    """Seeded stratified hold-out split."""
    rng = np.random.default_rng(seed)
    train_idx, eval_idx = [], []
    for c in np.unique(ds.labels):
        idx = np.flatnonzero(ds.labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_eval = int(round(len(idx) * eval_fraction))
        eval_idx.append(idx[:n_eval])
        train_idx.append(idx[n_eval:])
    tr = np.sort(np.concatenate(train_idx))
    ev = np.sort(np.concatenate(eval_idx))
    return (
        LabeledDataset(ds.features[tr], ds.labels[tr], ds.n_classes, Split.TRAIN),
        LabeledDataset(ds.features[ev], ds.labels[ev], ds.n_classes, Split.EVAL),
    )


def save_csv(ds: LabeledDataset, path, header: bool = False) -> None:
    """Rows ``label,f0,f1,...``; features written with float32 round-trip precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["label"] + [f"f{i}" for i in range(ds.dim)])
        feats = ds.features.astype(np.float32)
        for label, row in zip(ds.labels, feats):
            w.writerow([int(label)] + [f"{v:.9g}" for v in row.tolist()])


def load_csv(path, header: bool = False, n_classes: int | None = None, split: Split = Split.TRAIN) -> LabeledDataset:
    labels, rows = [], []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if header and lineno == 1:
                continue
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) < 2:
                raise ParseError(f"{path}:{lineno}: expected a label and at least one feature")
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} fields, got {len(rec)}")
            try:
                label = int(rec[0])
                feats = [float(f) for f in rec[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            labels.append(label)
            rows.append(feats)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    x = np.array(rows, dtype=np.float32).astype(np.float64)
    y = np.array(labels, dtype=np.int64)
    if y.min() < 0:
        raise ParseError(f"{path}: negative label {y.min()}")
    try:
        return LabeledDataset(x, y, -1 if n_classes is None else n_classes, split)
    except ConfigurationError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def load_features_csv(path, header: bool = False) -> np.ndarray:
    """Unlabeled feature rows (``f0,f1,...``); an empty file gives a 0-row array."""
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if header and lineno == 1:
                continue
            if not rec or all(not f.strip() for f in rec):
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} fields, got {len(rec)}")
            try:
                rows.append([float(f) for f in rec])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        return np.empty((0, 0))
    return np.array(rows, dtype=np.float64)
