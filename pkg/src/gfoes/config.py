"""Experiment configuration: TOML (or JSON) files mapped onto frozen dataclasses.

A config file has optional sections ``[dataset]``, ``[model]``, ``[split]``,
``[train]``, ``[gfn]``, ``[unlearn]``, ``[baselines]``, ``[baselines.<method>]``
and ``[ablation]`` plus top-level ``seed`` and ``output_dir``. Missing keys
take the desk-scale defaults below; unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python 3.10
    import tomli

from .baselines import METHODS, BaselineConfig
from .errors import ConfigError
from .gfn import GfnConfig
from .models import ModelSpec
from .training import TrainProtocol
from .unlearn import UnlearnConfig

# Base rates of the full-size protocol. Desk-scale defaults multiply them
# (see DESK_*_SCALE), which keeps the erase/recover ratio intact.
BASE_TRAIN_LR = 4e-4
BASE_GFN_LR = 4e-3
BASE_ERASE_LR = 4e-3
BASE_RECOVER_LR = 4e-4
BASE_CLIP = 0.1

DESK_TRAIN_SCALE = 100.0
DESK_UNLEARN_SCALE = 400.0
DESK_CLIP = 15.0

ABLATION_CELLS = (
    "OES+D_r+R_ls", "OES+D_r+R_l", "OES+D_r+R_s",
    "OES+R_ls", "OES+R_l", "OES+R_s",
    "D_r+R_ls", "D_r+R_l", "D_r+R_s",
)


def derive_seed(master: int, method: str, cell: str = "") -> int:
    """Stable 64-bit child seed for ``(master, method, cell)``."""
    key = f"{int(master)}\x1f{method}\x1f{cell}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class DatasetConfig:
    num_classes: int = 5
    dim: int = 16
    n_per_class: int = 625
    separation: float = 8.0
    noise_sigma: float = 1.0

    def __post_init__(self):
        if self.num_classes < 2 or self.dim < 2 or self.n_per_class < 2:
            raise ConfigError("dataset needs >= 2 classes, dims and samples per class")
        if not self.separation > 0 or not self.noise_sigma > 0:
            raise ConfigError("separation and noise_sigma must be positive")


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (64, 64)
    z_dim: int = 16
    gen_hidden: tuple = (64, 64)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "gen_hidden", tuple(self.gen_hidden))


@dataclass(frozen=True)
class SplitConfig:
    forget_labels: tuple = (0,)
    retain_fraction: float = 0.10
    test_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "forget_labels", tuple(int(c) for c in self.forget_labels))
        if not self.forget_labels:
            raise ConfigError("split.forget_labels must not be empty")
        if not 0 < self.retain_fraction <= 1 or not 0 < self.test_fraction < 1:
            raise ConfigError("split fractions out of range")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = BASE_TRAIN_LR * DESK_TRAIN_SCALE
    epochs: int = 20
    batch_size: int = 32
    weight_decay: float = 1e-4
    clip_norm: Optional[float] = DESK_CLIP

    def __post_init__(self):
        if not self.learning_rate > 0 or self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("invalid train section")

    def protocol(self):
        return TrainProtocol(self.learning_rate, self.epochs, self.batch_size, self.weight_decay, self.clip_norm)


def desk_gfn(**kw):
    base = dict(inner_lr=BASE_GFN_LR * DESK_TRAIN_SCALE, generator_lr=BASE_GFN_LR * DESK_TRAIN_SCALE,
                clip_norm=DESK_CLIP)
    base.update(kw)
    return GfnConfig(**base)


def desk_unlearn(**kw):
    base = dict(erase_lr=BASE_ERASE_LR * DESK_UNLEARN_SCALE, recover_lr=BASE_RECOVER_LR * DESK_UNLEARN_SCALE,
                recover_epochs=10, clip_norm=DESK_CLIP)
    base.update(kw)
    return UnlearnConfig(**base)


def default_baselines(unlearn: UnlearnConfig, train: TrainConfig):
    """Per-method defaults: retrain copies the original protocol, the rest the erasure one."""
    shared = dict(batch_size=unlearn.batch_size, weight_decay=unlearn.weight_decay, clip_norm=unlearn.clip_norm)
    return {
        "retrain": BaselineConfig("retrain", learning_rate=train.learning_rate, epochs=train.epochs,
                                  batch_size=train.batch_size, weight_decay=train.weight_decay,
                                  clip_norm=train.clip_norm),
        "neggrad": BaselineConfig("neggrad", learning_rate=unlearn.erase_lr, epochs=unlearn.erase_epochs, **shared),
        "random_label": BaselineConfig("random_label", learning_rate=unlearn.erase_lr,
                                       epochs=unlearn.erase_epochs, **shared),
        "noise_impair_repair": BaselineConfig("noise_impair_repair", learning_rate=unlearn.erase_lr,
                                              epochs=unlearn.erase_epochs, repair_lr=unlearn.recover_lr,
                                              repair_epochs=unlearn.recover_epochs, **shared),
    }


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = DatasetConfig()
    model: ModelConfig = ModelConfig()
    split: SplitConfig = SplitConfig()
    train: TrainConfig = TrainConfig()
    gfn: GfnConfig = field(default_factory=desk_gfn)
    unlearn: UnlearnConfig = field(default_factory=desk_unlearn)
    baselines: dict = field(default_factory=dict)
    enabled_baselines: tuple = METHODS
    retrain_fraction: float = 0.05
    ablation_cells: tuple = ABLATION_CELLS
    output_dir: str = "runs/default"
    seed: int = 0

    def __post_init__(self):
        if not self.baselines:
            object.__setattr__(self, "baselines", default_baselines(self.unlearn, self.train))
        object.__setattr__(self, "enabled_baselines", tuple(self.enabled_baselines))
        object.__setattr__(self, "ablation_cells", tuple(self.ablation_cells))
        for m in self.enabled_baselines:
            if m not in METHODS:
                raise ConfigError(f"baselines.enabled: unknown method {m!r}")
        for c in self.ablation_cells:
            if c not in ABLATION_CELLS:
                raise ConfigError(f"ablation.cells: unknown cell {c!r}")
        bad = [c for c in self.split.forget_labels if not 0 <= c < self.dataset.num_classes]
        if bad or len(set(self.split.forget_labels)) >= self.dataset.num_classes:
            raise ConfigError("split.forget_labels must be a strict subset of the dataset classes")
        if not 0 < self.retrain_fraction <= 1:
            raise ConfigError("baselines.retrain_fraction out of range")

    def model_spec(self, seed) -> ModelSpec:
        return ModelSpec(self.dataset.dim, self.dataset.num_classes, self.model.hidden, self.model.z_dim,
                         self.model.gen_hidden, seed=int(seed))

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def with_output(self, out):
        return replace(self, output_dir=str(out))

    def to_dict(self):
        d = {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "dataset": asdict(self.dataset),
            "model": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.model).items()},
            "split": {**asdict(self.split), "forget_labels": list(self.split.forget_labels)},
            "train": asdict(self.train),
            "gfn": asdict(self.gfn),
            "unlearn": asdict(self.unlearn),
            "baselines": {"enabled": list(self.enabled_baselines), "retrain_fraction": self.retrain_fraction,
                          **{m: self.baselines[m].to_dict() for m in sorted(self.baselines)}},
            "ablation": {"cells": list(self.ablation_cells)},
        }
        return d


# ---------------------------------------------------------------- parsing

def _section(cls, raw, where, exclude=("seed",)):
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a table")
    names = {f.name for f in fields(cls)} - set(exclude)
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown field")
    return dict(raw)


def _build(cls, kw, where):
    try:
        return cls(**kw)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _nullable(kw, key):
    # TOML has no null; 0 or "none" disables norm clipping.
    if key in kw and kw[key] in (0, "none", None):
        kw[key] = None
    return kw


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    top = {"seed", "output_dir", "dataset", "model", "split", "train", "gfn", "unlearn", "baselines", "ablation"}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown top-level field")
    dataset = _build(DatasetConfig, _section(DatasetConfig, raw.get("dataset"), "dataset"), "dataset")
    model = _build(ModelConfig, _section(ModelConfig, raw.get("model"), "model"), "model")
    split = _build(SplitConfig, _section(SplitConfig, raw.get("split"), "split"), "split")
    train = _build(TrainConfig, _nullable(_section(TrainConfig, raw.get("train"), "train"), "clip_norm"), "train")
    gfn_kw = _nullable(_section(GfnConfig, raw.get("gfn"), "gfn"), "clip_norm")
    gfn = _build(desk_gfn, gfn_kw, "gfn")
    un_kw = _nullable(_section(UnlearnConfig, raw.get("unlearn"), "unlearn"), "clip_norm")
    unlearn = _build(desk_unlearn, un_kw, "unlearn")

    braw = dict(raw.get("baselines") or {})
    enabled = braw.pop("enabled", list(METHODS))
    retrain_fraction = braw.pop("retrain_fraction", 0.05)
    bases = default_baselines(unlearn, train)
    for method, overrides in braw.items():
        if method not in METHODS:
            raise ConfigError(f"baselines.{method}: unknown field")
        kw = _nullable(_section(BaselineConfig, overrides, f"baselines.{method}", ("seed", "method")), "clip_norm")
        bases[method] = _build(lambda **k: replace(bases[method], **k), kw, f"baselines.{method}")

    araw = raw.get("ablation") or {}
    if not isinstance(araw, dict):
        raise ConfigError("ablation: expected a table")
    unknown = sorted(set(araw) - {"cells"})
    if unknown:
        raise ConfigError(f"ablation.{unknown[0]}: unknown field")

    kw = dict(dataset=dataset, model=model, split=split, train=train, gfn=gfn, unlearn=unlearn,
              baselines=bases, enabled_baselines=tuple(enabled), retrain_fraction=retrain_fraction,
              ablation_cells=tuple(araw.get("cells", ABLATION_CELLS)))
    if "output_dir" in raw:
        kw["output_dir"] = str(raw["output_dir"])
    if "seed" in raw:
        if not isinstance(raw["seed"], int) or raw["seed"] < 0:
            raise ConfigError("seed: expected a non-negative integer")
        kw["seed"] = raw["seed"]
    return _build(ExperimentConfig, kw, "config")


def parse_config(text: str, fmt="toml") -> ExperimentConfig:
    if fmt == "json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    else:
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(str(exc)) from None
    return config_from_dict(raw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    fmt = "json" if path.suffix.lower() == ".json" else "toml"
    try:
        return parse_config(text, fmt)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
