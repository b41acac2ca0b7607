"""Accuracy, weight-distance and feature-space metrics for unlearned models."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .audit import record_access
from .data import LabeledDataset
from .errors import EmptyInputError, InsufficientSamplesError, InvalidSplitError
from .models import PARTS, ClassifierModel, classifier_forward, param_distance


def predict(model: ClassifierModel, inputs):
    """Argmax class per row; ties go to the lowest class index."""
    _, logits = classifier_forward(model, inputs)
    return np.argmax(logits, axis=1)


def accuracy(model: ClassifierModel, dataset: Optional[LabeledDataset]) -> float:
    if dataset is None or len(dataset) == 0:
        raise EmptyInputError("accuracy of an empty dataset is undefined")
    record_access("eval", dataset.inputs)
    return float(np.mean(predict(model, dataset.inputs) == dataset.labels))


def per_class_accuracy(model: ClassifierModel, dataset: LabeledDataset):
    if len(dataset) == 0:
        raise EmptyInputError("empty dataset")
    record_access("eval", dataset.inputs)
    hit = predict(model, dataset.inputs) == dataset.labels
    return {int(c): float(hit[dataset.labels == c].mean()) for c in dataset.classes()}


def forget_retain_report(model: ClassifierModel, test_forget: LabeledDataset, test_retain: LabeledDataset,
                         forget_labels: Optional[Sequence[int]] = None):
    """``(AD_f, AD_r)``: accuracy on forgotten-class and retained-class test data."""
    if forget_labels is not None:
        yf = set(int(c) for c in forget_labels)
        if not set(test_forget.classes()) <= yf:
            raise InvalidSplitError("forget test set contains retained classes")
        if set(test_retain.classes()) & yf:
            raise InvalidSplitError("retain test set contains forgotten classes")
    return accuracy(model, test_forget), accuracy(model, test_retain)


def weight_distance_report(before: ClassifierModel, after: ClassifierModel):
    return {part: param_distance(before.params, after.params, part) for part in PARTS}


# ---------------------------------------------------------------- representation

@dataclass
class ClassGeometry:
    label: int
    count: int
    centroid: list
    intra: Optional[float]
    nearest_other: float
    ratio: Optional[float]


def intra_class_distance(features):
    """Mean Euclidean distance of the rows of ``features`` to their centroid."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < 2:
        raise InsufficientSamplesError("intra-class spread needs at least 2 samples")
    return float(np.linalg.norm(features - features.mean(axis=0), axis=1).mean())


def class_geometry(features, labels):
    """Per-class centroid, spread, nearest other centroid and their ratio."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise InsufficientSamplesError("feature geometry needs at least two classes")
    centroids = np.stack([features[labels == c].mean(axis=0) for c in classes])
    dists = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
    np.fill_diagonal(dists, np.inf)
    out, missing = {}, []
    for i, c in enumerate(classes):
        rows = features[labels == c]
        try:
            intra = intra_class_distance(rows)
        except InsufficientSamplesError:
            intra = None
            missing.append(int(c))
        near = float(dists[i].min())
        ratio = None if intra is None else (intra / near if near > 0 else float("inf"))
        out[int(c)] = ClassGeometry(int(c), int(rows.shape[0]), centroids[i].tolist(), intra, near, ratio)
    return out, missing


@dataclass
class RepresentationReport:
    classes: dict
    forget_labels: list
    insufficient: list = field(default_factory=list)

    def ratio(self, label):
        return self.classes[int(label)].ratio

    def to_dict(self):
        return {
            "metric": "dispersion_ratio = mean distance to own centroid / distance to nearest other centroid",
            "forget_labels": list(self.forget_labels),
            "insufficient_samples": list(self.insufficient),
            "classes": {str(k): asdict(v) for k, v in sorted(self.classes.items())},
        }


def representation_report(model: ClassifierModel, dataset: LabeledDataset, forget_labels: Sequence[int],
                          export_path=None):
    """Feature-space geometry of ``dataset`` under ``model``.

    Returns ``(report, features)``; the feature matrix is also written to
    ``export_path`` as ``y,f0,...`` when given.
    """
    if len(dataset) == 0:
        raise EmptyInputError("empty dataset")
    record_access("eval", dataset.inputs)
    feats, _ = classifier_forward(model, dataset.inputs)
    classes, missing = class_geometry(feats, dataset.labels)
    if export_path is not None:
        export_features(export_path, feats, dataset.labels)
    return RepresentationReport(classes, sorted(int(c) for c in forget_labels), missing), feats


def export_features(path, features, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"] + [f"f{i}" for i in range(features.shape[1])])
        for y, row in zip(labels, features):
            w.writerow([int(y)] + [repr(float(v)) for v in row])


def dispersion_change(before: RepresentationReport, after: RepresentationReport):
    """Ratio after / ratio before for every class present in both reports."""
    out = {}
    for c, geo in before.classes.items():
        if c in after.classes and geo.ratio and after.classes[c].ratio is not None:
            out[c] = after.classes[c].ratio / geo.ratio
    return out


# ---------------------------------------------------------------- reports

@dataclass
class MetricsReport:
    method: str
    ad_f: float
    ad_r: float
    per_class: dict
    weight_distance: dict
    representation: Optional[dict] = None

    def __post_init__(self):
        if not (0.0 <= self.ad_f <= 1.0 and 0.0 <= self.ad_r <= 1.0):
            raise ValueError("accuracies must lie in [0, 1]")
        if any(v < 0 for v in self.weight_distance.values()):
            raise ValueError("distances must be non-negative")

    def to_dict(self):
        out = {
            "method": self.method,
            "AD_f": self.ad_f,
            "AD_r": self.ad_r,
            "per_class_accuracy": {str(k): v for k, v in sorted(self.per_class.items())},
            "weight_distance": dict(sorted(self.weight_distance.items())),
        }
        if self.representation is not None:
            out["representation"] = self.representation
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def evaluate(method, model: ClassifierModel, theta0: ClassifierModel, test_forget: LabeledDataset,
             test_retain: LabeledDataset, forget_labels, feature_path=None) -> MetricsReport:
    ad_f, ad_r = forget_retain_report(model, test_forget, test_retain, forget_labels)
    test = LabeledDataset(np.concatenate([test_forget.inputs, test_retain.inputs]),
                          np.concatenate([test_forget.labels, test_retain.labels]), test_retain.num_classes)
    rep, _ = representation_report(model, test, forget_labels, feature_path)
    return MetricsReport(method, ad_f, ad_r, per_class_accuracy(model, test),
                         weight_distance_report(theta0, model), rep.to_dict())
