"""Synthetic blob datasets, forget/retain splitting and erasure-set assembly."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInputError, InvalidLabelError, InvalidSplitError, ShapeError


@dataclass
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int_)
        if self.inputs.ndim != 2 or self.labels.shape != (self.inputs.shape[0],):
            raise ShapeError(f"inputs {self.inputs.shape} and labels {self.labels.shape} disagree")
        if self.labels.size == 0:
            raise EmptyInputError("a dataset needs at least one sample")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise InvalidLabelError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int_)
        return LabeledDataset(self.inputs[idx], self.labels[idx], self.num_classes)

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes)

    def classes(self):
        return sorted(set(self.labels.tolist()))


def class_centers(num_classes, dim, separation, rotation_seed=12345):
    """Deterministic centers with every pairwise distance at least ``separation``.

    With ``K <= d`` the centers form a centered regular simplex (all distances
    exactly ``separation``) under a fixed random rotation, so no class lines
    up with a coordinate axis. Otherwise they sit on a circle in the first two
    coordinates with adjacent chords equal to ``separation``.
    """
    centers = np.zeros((num_classes, dim))
    if num_classes <= dim:
        simplex = np.eye(num_classes) - 1.0 / num_classes
        centers[:, :num_classes] = simplex * (separation / math.sqrt(2.0))
        q, r = np.linalg.qr(np.random.default_rng(rotation_seed).standard_normal((dim, dim)))
        centers = centers @ (q * np.sign(np.diag(r)))
    else:
        radius = separation / (2.0 * math.sin(math.pi / num_classes))
        ang = 2.0 * math.pi * np.arange(num_classes) / num_classes
        centers[:, 0] = radius * np.cos(ang)
        centers[:, 1] = radius * np.sin(ang)
    return centers


def make_blobs(num_classes, dim, n_per_class, separation=8.0, noise_sigma=1.0, seed=0) -> LabeledDataset:
    if num_classes < 2 or dim < 2:
        raise ValueError("make_blobs needs at least 2 classes and 2 dimensions")
    rng = np.random.default_rng(seed)
    centers = class_centers(num_classes, dim, separation)
    labels = np.repeat(np.arange(num_classes), n_per_class)
    inputs = centers[labels] + noise_sigma * rng.standard_normal((labels.size, dim))
    return LabeledDataset(inputs, labels, num_classes)


def round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SplitSpec:
    forget_labels: tuple
    retain_fraction: float = 0.10
    seed: int = 0
    test_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "forget_labels", tuple(sorted(int(c) for c in self.forget_labels)))
        if not 0 < self.retain_fraction <= 1:
            raise InvalidSplitError("retain_fraction must lie in (0, 1]")
        if not 0 <= self.test_fraction < 1:
            raise InvalidSplitError("test_fraction must lie in [0, 1)")


@dataclass
class DatasetSplit:
    forget: LabeledDataset
    retain: LabeledDataset
    retain_subset: LabeledDataset
    test_forget: Optional[LabeledDataset]
    test_retain: Optional[LabeledDataset]
    forget_labels: tuple
    retain_labels: tuple
    indices: dict = field(default_factory=dict)

    @property
    def num_classes(self):
        return self.retain.num_classes

    def manifest(self):
        out = {"forget_labels": list(self.forget_labels), "retain_labels": list(self.retain_labels)}
        out["indices"] = {k: [int(i) for i in v] for k, v in self.indices.items()}
        return out


def _per_class_permutation(labels, classes, rng):
    return {c: rng.permutation(np.flatnonzero(labels == c)) for c in classes}


def split_forget(data: LabeledDataset, spec: SplitSpec) -> DatasetSplit:
    """Partition ``data`` into forget, retain, few-shot retain and test splits.

    A stratified test holdout of ``spec.test_fraction`` is taken first. The
    few-shot subset keeps ``round_half_up(e * n_c)`` (at least 1) samples of
    every retained class.
    """
    k = data.num_classes
    yf = set(spec.forget_labels)
    if not yf or not yf.issubset(range(k)) or len(yf) >= k:
        raise InvalidSplitError("forget labels must be a non-empty strict subset of the classes")
    yr = tuple(c for c in range(k) if c not in yf)
    rng = np.random.default_rng(spec.seed)
    perm = _per_class_permutation(data.labels, range(k), rng)

    train_idx, test_idx = [], []
    for c in range(k):
        n_test = round_half_up(spec.test_fraction * perm[c].size) if spec.test_fraction else 0
        test_idx.append(perm[c][:n_test])
        train_idx.append(perm[c][n_test:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))

    in_f = np.isin(data.labels, spec.forget_labels)
    f_idx = train_idx[in_f[train_idx]]
    r_idx = train_idx[~in_f[train_idx]]
    rs_idx = []
    for c in yr:
        members = r_idx[data.labels[r_idx] == c]
        n_keep = max(1, round_half_up(spec.retain_fraction * members.size))
        rs_idx.append(np.sort(rng.permutation(members)[:n_keep]))
    rs_idx = np.sort(np.concatenate(rs_idx))
    tf_idx = test_idx[in_f[test_idx]]
    tr_idx = test_idx[~in_f[test_idx]]

    def maybe(idx):
        return data.subset(idx) if idx.size else None

    return DatasetSplit(
        forget=data.subset(f_idx),
        retain=data.subset(r_idx),
        retain_subset=data.subset(rs_idx),
        test_forget=maybe(tf_idx),
        test_retain=maybe(tr_idx),
        forget_labels=spec.forget_labels,
        retain_labels=yr,
        indices={"forget": f_idx, "retain": r_idx, "retain_subset": rs_idx,
                 "test_forget": tf_idx, "test_retain": tr_idx},
    )


def round_robin_labels(n, forget_labels):
    labels = np.asarray(sorted(forget_labels), dtype=np.int_)
    return labels[np.arange(n) % labels.size]


def assemble_erasure_set(oes_inputs, oes_labels, retain_subset: LabeledDataset,
                         forget_labels: Sequence[int], seed=0) -> LabeledDataset:
    """Concatenate labelled erasure samples with ``retain_subset`` and shuffle."""
    oes_inputs = np.asarray(oes_inputs, dtype=np.float64)
    oes_labels = np.asarray(oes_labels, dtype=np.int_)
    if oes_inputs.ndim != 2 or oes_inputs.shape[0] == 0:
        raise EmptyInputError("at least one erasure sample is required")
    if oes_labels.shape != (oes_inputs.shape[0],):
        raise ShapeError("one label per erasure sample is required")
    if oes_inputs.shape[1] != retain_subset.dim:
        raise ShapeError("erasure samples and retained data have different widths")
    if not np.all(np.isin(oes_labels, list(forget_labels))):
        raise InvalidLabelError("every erasure sample must carry a forgotten label")
    inputs = np.concatenate([oes_inputs, retain_subset.inputs])
    labels = np.concatenate([oes_labels, retain_subset.labels])
    order = np.random.default_rng(seed).permutation(labels.size)
    return LabeledDataset(inputs[order], labels[order], retain_subset.num_classes)


# ---------------------------------------------------------------- files

def save_dataset_csv(path, data: LabeledDataset):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"] + [f"x{i}" for i in range(data.dim)])
        for y, row in zip(data.labels, data.inputs):
            w.writerow([int(y)] + [repr(float(v)) for v in row])


def load_dataset_csv(path, num_classes=None) -> LabeledDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[0] != "y":
        raise ValueError(f"{path}: first column must be 'y'")
    labels = np.array([int(r[0]) for r in body])
    inputs = np.array([[float(v) for v in r[1:]] for r in body])
    k = num_classes if num_classes is not None else int(labels.max()) + 1
    return LabeledDataset(inputs, labels, k)


def save_manifest(path, split: DatasetSplit):
    Path(path).write_text(json.dumps(split.manifest(), indent=2, sort_keys=True) + "\n")
