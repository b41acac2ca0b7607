"""Two-phase fine-tuning: an aggressive erasure pass, then a gentle recovery pass."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .audit import record_access
from .data import LabeledDataset, assemble_erasure_set, round_robin_labels
from .errors import ZeroGlanceViolation
from .gfn import GfnConfig, train_gfn
from .models import ClassifierModel, Generator, generator_forward
from .training import TrainProtocol, fit


@dataclass(frozen=True)
class UnlearnConfig:
    erase_lr: float = 4e-3
    recover_lr: float = 4e-4
    erase_epochs: int = 1
    recover_epochs: int = 1
    batch_size: int = 32
    weight_decay: float = 1e-4
    clip_norm: Optional[float] = 0.1
    oes_count: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.erase_lr < 0 or self.recover_lr < 0:
            raise ValueError("learning rates must be non-negative")
        if self.erase_epochs < 0 or self.recover_epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid epoch or batch settings")

    def erase_protocol(self):
        return TrainProtocol(self.erase_lr, self.erase_epochs, self.batch_size, self.weight_decay, self.clip_norm)

    def recover_protocol(self):
        return TrainProtocol(self.recover_lr, self.recover_epochs, self.batch_size, self.weight_decay,
                             self.clip_norm)


@dataclass
class UnlearnRecord:
    theta0: ClassifierModel
    theta1: ClassifierModel
    theta_star: ClassifierModel
    erase_losses: list
    recover_losses: list
    config: UnlearnConfig
    oes_hash: str
    oes_count: int

    def to_json(self):
        return {
            "config": asdict(self.config),
            "oes_hash": self.oes_hash,
            "oes_count": self.oes_count,
            "erase_losses": [float(v) for v in self.erase_losses],
            "recover_losses": [float(v) for v in self.recover_losses],
        }


def default_oes_count(retain: LabeledDataset, forget_labels):
    """Per-class size of the retained subset times the number of forgotten classes."""
    counts = retain.class_counts()
    per_class = int(counts[counts > 0].max())
    return per_class * len(forget_labels)


def oes_snapshot(gen: Generator, count: int, seed: int):
    """Fixed erasure samples drawn from fresh noise; returns ``(inputs, sha256)``."""
    z = np.random.default_rng([seed, 2]).standard_normal((count, gen.spec.z_dim))
    x = generator_forward(gen, z)
    return x, hashlib.sha256(np.ascontiguousarray(x, dtype="<f8").tobytes()).hexdigest()


def _check_retained(retain: LabeledDataset, forget_labels):
    bad = np.isin(retain.labels, list(forget_labels))
    if bad.any():
        raise ZeroGlanceViolation(f"retained data contains {int(bad.sum())} forgotten-class rows")


def erasure_phase(theta0: ClassifierModel, gen: Optional[Generator], retain: LabeledDataset,
                  forget_labels: Sequence[int], cfg: UnlearnConfig = UnlearnConfig(),
                  include_retain=True, history=None) -> ClassifierModel:
    """Fine-tune on erasure samples (plus the retained subset) at the high rate.

    ``include_retain=False`` uses the erasure samples alone; ``gen=None``
    uses the retained subset alone.
    """
    _check_retained(retain, forget_labels)
    record_access("erasure_phase", retain.inputs)
    if gen is None:
        data = retain
    else:
        count = cfg.oes_count or default_oes_count(retain, forget_labels)
        oes, _ = oes_snapshot(gen, count, cfg.seed)
        labels = round_robin_labels(count, forget_labels)
        if include_retain:
            data = assemble_erasure_set(oes, labels, retain, forget_labels, seed=[cfg.seed, 3])
        else:
            data = LabeledDataset(oes, labels, retain.num_classes)
    if cfg.erase_lr == 0 or cfg.erase_epochs == 0:
        return theta0.copy()
    return fit(theta0, data, cfg.erase_protocol(), seed=[cfg.seed, 4], history=history)


def recovery_phase(theta1: ClassifierModel, retain: LabeledDataset, cfg: UnlearnConfig = UnlearnConfig(),
                   forget_labels: Sequence[int] = (), history=None) -> ClassifierModel:
    """Fine-tune on the retained subset only at the low rate."""
    _check_retained(retain, forget_labels)
    record_access("recovery_phase", retain.inputs)
    if cfg.recover_lr == 0 or cfg.recover_epochs == 0:
        return theta1.copy()
    return fit(theta1, retain, cfg.recover_protocol(), seed=[cfg.seed, 5], history=history)


def gfoes_unlearn(theta0: ClassifierModel, retain: LabeledDataset, forget_labels: Sequence[int],
                  gfn_cfg: GfnConfig = GfnConfig(), cfg: UnlearnConfig = UnlearnConfig()):
    """Generator training, then erasure, then recovery.

    Returns ``(theta_star, record, trace, generator)``.
    """
    gen, trace = train_gfn(theta0, retain, forget_labels, gfn_cfg)
    erase_losses, recover_losses = [], []
    theta1 = erasure_phase(theta0, gen, retain, forget_labels, cfg, history=erase_losses)
    theta_star = recovery_phase(theta1, retain, cfg, forget_labels, history=recover_losses)
    count = cfg.oes_count or default_oes_count(retain, forget_labels)
    _, digest = oes_snapshot(gen, count, cfg.seed)
    record = UnlearnRecord(theta0, theta1, theta_star, erase_losses, recover_losses, cfg, digest, count)
    return theta_star, record, trace, gen
