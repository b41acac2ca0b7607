"""Comparison methods run under the same few-shot, zero-glance harness.

None of them sees forget-set rows. Where a method needs forgotten-class
inputs, uniform noise over the retained data range stands in for them,
labelled with the forgotten classes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .audit import record_access
from .data import LabeledDataset, assemble_erasure_set, round_robin_labels
from .errors import ConfigError, EmptyInputError, InsufficientSamplesError
from .models import ClassifierModel, ModelSpec, classifier_graph, data_range, init_model
from .training import TrainProtocol, fit
from .unlearn import _check_retained

METHODS = ("retrain", "neggrad", "random_label", "noise_impair_repair")


@dataclass(frozen=True)
class BaselineConfig:
    method: str
    learning_rate: float = 4e-3
    epochs: int = 1
    batch_size: int = 32
    weight_decay: float = 1e-4
    clip_norm: Optional[float] = 0.1
    noise_per_class: Optional[int] = None
    range_expand: float = 0.1
    noise_steps: int = 50
    noise_rate: float = 0.1
    repair_lr: float = 4e-4
    repair_epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown baseline {self.method!r}; expected one of {METHODS}")
        if not self.learning_rate > 0 or not self.repair_lr > 0 or self.noise_rate < 0:
            raise ConfigError("baseline rates must be positive")
        if self.epochs < 0 or self.repair_epochs < 0 or self.noise_steps < 0 or self.batch_size < 1:
            raise ConfigError("epochs, steps and batch_size must be non-negative (batch_size >= 1)")
        if self.noise_per_class is not None and self.noise_per_class < 1:
            raise ConfigError("noise_per_class must be at least 1")

    def protocol(self):
        return TrainProtocol(self.learning_rate, self.epochs, self.batch_size, self.weight_decay, self.clip_norm)

    def repair_protocol(self):
        return TrainProtocol(self.repair_lr, self.repair_epochs, self.batch_size, self.weight_decay,
                             self.clip_norm)

    def to_dict(self):
        return asdict(self)


def _noise_count(retain: LabeledDataset, forget_labels, cfg: BaselineConfig):
    if not len(forget_labels):
        raise EmptyInputError("at least one forgotten label is required")
    per_class = cfg.noise_per_class
    if per_class is None:
        counts = retain.class_counts()
        per_class = int(counts[counts > 0].max())
    return per_class * len(forget_labels)


def proxy_noise(retain: LabeledDataset, count, seed, expand=0.1):
    """Uniform samples over the (expanded) bounding box of ``retain``."""
    if count < 1:
        raise InsufficientSamplesError("proxy-noise count must be at least 1")
    center, scale = data_range(retain.inputs, expand)
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(count, retain.dim))
    return center + scale * u


def _proxy_set(retain, forget_labels, cfg, labels=None):
    count = _noise_count(retain, forget_labels, cfg)
    x = proxy_noise(retain, count, [cfg.seed, 11], cfg.range_expand)
    y = round_robin_labels(count, forget_labels) if labels is None else labels(count)
    return LabeledDataset(x, y, retain.num_classes)


def retrain(model_spec: ModelSpec, retain: LabeledDataset, cfg: BaselineConfig,
            forget_labels: Sequence[int] = ()) -> ClassifierModel:
    """Train a fresh model on the retained subset only."""
    if len(retain) == 0:
        raise EmptyInputError("retained subset is empty")
    _check_retained(retain, forget_labels)
    record_access("retrain", retain.inputs)
    model = init_model(model_spec)
    if cfg.epochs == 0:
        return model
    return fit(model, retain, cfg.protocol(), seed=[cfg.seed, 12])


def neggrad(theta0: ClassifierModel, retain: LabeledDataset, forget_labels: Sequence[int],
            cfg: BaselineConfig) -> ClassifierModel:
    """Gradient ascent on noise proxies labelled with the forgotten classes."""
    _check_retained(retain, forget_labels)
    record_access("neggrad", retain.inputs)
    proxy = _proxy_set(retain, forget_labels, cfg)
    if cfg.epochs == 0:
        return theta0.copy()
    return fit(theta0, proxy, cfg.protocol(), seed=[cfg.seed, 13], ascent=True)


def uniform_labels(count, num_classes, seed):
    return np.random.default_rng(seed).integers(0, num_classes, size=count)


def random_label(theta0: ClassifierModel, retain: LabeledDataset, forget_labels: Sequence[int],
                 cfg: BaselineConfig) -> ClassifierModel:
    """Descent on noise proxies whose labels are drawn uniformly from all classes."""
    _check_retained(retain, forget_labels)
    record_access("random_label", retain.inputs)
    k = theta0.spec.num_classes
    proxy = _proxy_set(retain, forget_labels, cfg,
                       labels=lambda n: uniform_labels(n, k, [cfg.seed, 14]))
    if cfg.epochs == 0:
        return theta0.copy()
    return fit(theta0, proxy, cfg.protocol(), seed=[cfg.seed, 15])


def optimize_noise(theta0: ClassifierModel, noise, labels, steps, rate, lo=None, hi=None):
    """Input-space gradient ascent of the per-sample loss under ``theta0``.

    Each row moves along the gradient of its own cross-entropy (the summed
    loss), so the step does not shrink with the batch size. Rows are kept
    inside ``[lo, hi]`` when bounds are given.
    """
    x = np.array(noise, dtype=np.float64)
    theta = ad.leaves(theta0.params, requires_grad=False)
    n = x.shape[0]
    for _ in range(steps):
        leaf = ad.Tensor(x, requires_grad=True)
        _, logits = classifier_graph(theta, leaf, theta0.n_feature_layers)
        loss = ad.cross_entropy_loss(logits, labels)
        (g,) = ad.grad(loss, [leaf])
        x = x + rate * n * g.value
        if lo is not None:
            x = np.clip(x, lo, hi)
    return x


def noise_impair_repair(theta0: ClassifierModel, retain: LabeledDataset, forget_labels: Sequence[int],
                        cfg: BaselineConfig) -> ClassifierModel:
    """Learn loss-maximising noise, fine-tune on noise plus retained data, then repair."""
    _check_retained(retain, forget_labels)
    record_access("noise_impair_repair", retain.inputs)
    count = _noise_count(retain, forget_labels, cfg)
    center, scale = data_range(retain.inputs, cfg.range_expand)
    labels = round_robin_labels(count, forget_labels)
    noise = proxy_noise(retain, count, [cfg.seed, 11], cfg.range_expand)
    noise = optimize_noise(theta0, noise, labels, cfg.noise_steps, cfg.noise_rate,
                           center - scale, center + scale)
    impair_set = assemble_erasure_set(noise, labels, retain, forget_labels, seed=[cfg.seed, 16])
    model = theta0.copy()
    if cfg.epochs:
        model = fit(model, impair_set, cfg.protocol(), seed=[cfg.seed, 17])
    if cfg.repair_epochs:
        model = fit(model, retain, cfg.repair_protocol(), seed=[cfg.seed, 18])
    return model


def run_baseline(theta0: ClassifierModel, retain: LabeledDataset, forget_labels: Sequence[int],
                 cfg: BaselineConfig) -> ClassifierModel:
    if cfg.method == "retrain":
        return retrain(theta0.spec, retain, cfg, forget_labels)
    fn = {"neggrad": neggrad, "random_label": random_label, "noise_impair_repair": noise_impair_repair}
    return fn[cfg.method](theta0, retain, forget_labels, cfg)
