"""Plain SGD with coupled L2 weight decay and global-norm gradient clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from . import kernels
from .errors import ShapeError

ParameterVector = dict  # name -> ndarray, insertion-ordered
GradientMap = dict


@dataclass(frozen=True)
class OptimStep:
    learning_rate: float
    weight_decay: float = 0.0
    clip_norm: Optional[float] = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive or None")


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(kernels.sq_norm(np.ravel(g)) for g in grads.values()))


def clip_scale(norm: float, clip_norm: Optional[float]) -> float:
    if clip_norm is None or norm <= clip_norm:
        return 1.0
    return clip_norm / norm


def sgd_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], step: OptimStep) -> ParameterVector:
    """Return updated parameters; inputs are left untouched.

    Gradients are rescaled to ``clip_norm`` when their global L2 norm exceeds
    it, then ``weight_decay * param`` is added before the step.
    """
    missing = [k for k in params if k not in grads]
    if missing:
        raise ShapeError(f"no gradient for parameters {missing}")
    for k, p in params.items():
        if np.shape(grads[k]) != np.shape(p):
            raise ShapeError(f"gradient shape {np.shape(grads[k])} != parameter shape {np.shape(p)} for {k}")
    scale = clip_scale(global_norm({k: grads[k] for k in params}), step.clip_norm)
    out = {}
    for k, p in params.items():
        p = np.asarray(p, dtype=np.float64)
        new = kernels.sgd_update(p.ravel(), np.ravel(grads[k]), step.learning_rate, step.weight_decay, scale)
        out[k] = new.reshape(p.shape)
    return out
