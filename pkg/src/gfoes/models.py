"""Dense classifier and generator networks.

Parameters live in plain ordered dicts of float64 arrays. Classifier
parameters are named ``features.<i>.weight`` / ``features.<i>.bias`` for the
feature extractor and ``head.weight`` / ``head.bias`` for the output layer,
which is what :func:`param_distance` splits on.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError

FORMAT_VERSION = 1
PARTS = ("feature_extractor", "head", "all")


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    num_classes: int
    hidden: tuple = (64, 64)
    z_dim: int = 16
    gen_hidden: tuple = (64, 64)
    init: str = "glorot_uniform"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "gen_hidden", tuple(int(h) for h in self.gen_hidden))
        dims = (self.input_dim, self.z_dim) + self.hidden + self.gen_hidden
        if any(d <= 0 for d in dims):
            raise ConfigError("all model dimensions must be positive")
        if not self.hidden:
            raise ConfigError("the feature extractor needs at least one layer")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if self.init != "glorot_uniform":
            raise ConfigError(f"unknown init scheme {self.init!r}")

    @property
    def feature_dim(self):
        return self.hidden[-1]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class ClassifierModel:
    spec: ModelSpec
    params: dict

    @property
    def n_feature_layers(self):
        return len(self.spec.hidden)

    def copy(self):
        return ClassifierModel(self.spec, {k: v.copy() for k, v in self.params.items()})

    def with_params(self, params):
        return ClassifierModel(self.spec, {k: np.array(v, dtype=np.float64) for k, v in params.items()})


@dataclass
class Generator:
    spec: ModelSpec
    params: dict
    center: np.ndarray
    scale: np.ndarray

    def with_params(self, params):
        return Generator(self.spec, {k: np.array(v, dtype=np.float64) for k, v in params.items()},
                         self.center, self.scale)


def _glorot(rng, fan_in, fan_out):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def _dense_stack(rng, prefix, dims):
    params = {}
    for i, (fi, fo) in enumerate(zip(dims[:-1], dims[1:])):
        params[f"{prefix}.{i}.weight"] = _glorot(rng, fi, fo)
        params[f"{prefix}.{i}.bias"] = np.zeros(fo)
    return params


def init_model(spec: ModelSpec) -> ClassifierModel:
    rng = np.random.default_rng(spec.seed)
    params = _dense_stack(rng, "features", (spec.input_dim,) + spec.hidden)
    params["head.weight"] = _glorot(rng, spec.feature_dim, spec.num_classes)
    params["head.bias"] = np.zeros(spec.num_classes)
    return ClassifierModel(spec, params)


def data_range(inputs, expand=0.1):
    """Per-dimension (center, half-width) of ``inputs`` widened by ``expand``."""
    lo, hi = inputs.min(axis=0), inputs.max(axis=0)
    half = 0.5 * (hi - lo) * (1.0 + expand)
    half = np.where(half > 0, half, 1.0)
    return 0.5 * (lo + hi), half


def init_generator(spec: ModelSpec, center, scale, seed=None) -> Generator:
    center = np.asarray(center, dtype=np.float64).reshape(-1)
    scale = np.asarray(scale, dtype=np.float64).reshape(-1)
    if center.shape != (spec.input_dim,) or scale.shape != (spec.input_dim,):
        raise ShapeError("generator range must have one entry per input dimension")
    if np.any(scale <= 0):
        raise ShapeError("generator scale must be positive")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    params = _dense_stack(rng, "gen", (spec.z_dim,) + spec.gen_hidden + (spec.input_dim,))
    return Generator(spec, params, center, scale)


def param_count(params: Mapping[str, np.ndarray]) -> int:
    return int(sum(np.size(v) for v in params.values()))


# ---------------------------------------------------------------- graphs

def classifier_graph(params: Mapping[str, ad.Tensor], x, n_layers: int):
    """Differentiable forward pass; returns ``(features, logits)`` tensors."""
    h = ad.as_tensor(x)
    for i in range(n_layers):
        h = ad.relu(ad.affine(h, params[f"features.{i}.weight"], params[f"features.{i}.bias"]))
    return h, ad.affine(h, params["head.weight"], params["head.bias"])


def generator_graph(params: Mapping[str, ad.Tensor], z, center, scale):
    n_layers = len([k for k in params if k.endswith(".weight")])
    h = ad.as_tensor(z)
    for i in range(n_layers):
        h = ad.affine(h, params[f"gen.{i}.weight"], params[f"gen.{i}.bias"])
        h = ad.relu(h) if i < n_layers - 1 else ad.tanh(h)
    return ad.add(ad.mul(h, ad.Tensor(scale)), ad.Tensor(center))


def _check_width(batch, width, what):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != width:
        raise ShapeError(f"{what} must have shape (b, {width}), got {batch.shape}")
    return batch


def classifier_forward(model: ClassifierModel, batch):
    """Return ``(features, logits)`` arrays for a batch of inputs."""
    batch = _check_width(batch, model.spec.input_dim, "batch")
    with ad.no_grad():
        feats, logits = classifier_graph(ad.leaves(model.params, False), batch, model.n_feature_layers)
    return feats.value, logits.value


def generator_forward(gen: Generator, z):
    z = _check_width(z, gen.spec.z_dim, "z")
    with ad.no_grad():
        out = generator_graph(ad.leaves(gen.params, False), z, gen.center, gen.scale)
    return out.value


# ---------------------------------------------------------------- distances

def _in_part(name, part):
    if part == "all":
        return True
    if part == "feature_extractor":
        return name.startswith("features.")
    if part == "head":
        return name.startswith("head.")
    raise ValueError(f"unknown part {part!r}; expected one of {PARTS}")


def param_distance(a: Mapping[str, np.ndarray], b: Mapping[str, np.ndarray], part="all") -> float:
    """Euclidean distance between two parameter maps restricted to ``part``."""
    if list(a) != list(b):
        raise ShapeError("parameter maps have different layouts")
    total = 0.0
    for k in a:
        if np.shape(a[k]) != np.shape(b[k]):
            raise ShapeError(f"shape mismatch for {k}")
        if _in_part(k, part):
            diff = np.asarray(a[k], dtype=np.float64) - np.asarray(b[k], dtype=np.float64)
            total += float(np.sum(diff * diff))
    return float(np.sqrt(total))


# ---------------------------------------------------------------- model files

def save_model(path, model, extra=None):
    """Write a JSON header line followed by raw little-endian float64 values."""
    header = {
        "format_version": FORMAT_VERSION,
        "kind": "generator" if isinstance(model, Generator) else "classifier",
        "spec": model.spec.to_dict(),
        "seed": model.spec.seed,
        "parameters": [[k, list(np.shape(v))] for k, v in model.params.items()],
    }
    if isinstance(model, Generator):
        header["center"] = model.center.tolist()
        header["scale"] = model.scale.tolist()
    if extra:
        header["extra"] = extra
    blob = b"".join(np.asarray(v, dtype="<f8").tobytes() for v in model.params.values())
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n")
        fh.write(blob)


def load_model(path):
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl])
    if header.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported model file version {header.get('format_version')}")
    spec = ModelSpec.from_dict(header["spec"])
    data = np.frombuffer(raw[nl + 1:], dtype="<f8")
    params, off = {}, 0
    for name, shape in header["parameters"]:
        n = int(np.prod(shape)) if shape else 1
        params[name] = data[off:off + n].reshape(shape).astype(np.float64)
        off += n
    if off != data.size:
        raise ShapeError(f"model file has {data.size} values, header declares {off}")
    if header["kind"] == "generator":
        return Generator(spec, params, np.array(header["center"]), np.array(header["scale"]))
    return ClassifierModel(spec, params)
