"""Generator training against a frozen classifier and its one-step update.

Each iteration draws a noise batch, scores the generated samples under the
original classifier (the loss to be maximised), takes one differentiable
full-batch SGD step of the classifier on generated samples plus the
retained subset, scores the stepped classifier on the retained subset (the
loss to be minimised), and descends the generator on

    J = lam / L_max + (1 - lam) * L_min

while ``lam`` follows projected gradient ascent on the same objective.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .audit import record_access
from .data import LabeledDataset, round_robin_labels
from .errors import EmptyInputError, GfnAbort
from .models import (ClassifierModel, Generator, classifier_graph, data_range,
                     generator_graph, init_generator)
from .optim import OptimStep, global_norm, sgd_step


@dataclass(frozen=True)
class GfnConfig:
    inner_lr: float = 4e-3
    generator_lr: float = 4e-3
    lambda_lr: float = 0.01
    lambda0: float = 0.5
    epochs: int = 20
    batch_size: int = 32
    lambda_margin: float = 1e-3
    loss_floor: float = 1e-6
    weight_decay: float = 1e-4
    clip_norm: Optional[float] = 0.1
    first_order: bool = False
    range_expand: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.inner_lr < 0 or self.generator_lr < 0 or not self.lambda_lr > 0:
            raise ValueError("rates must be non-negative (lambda_lr positive)")
        if not 0 < self.lambda_margin < 0.5:
            raise ValueError("lambda_margin must lie in (0, 0.5)")
        if not self.lambda_margin < self.lambda0 < 1 - self.lambda_margin:
            raise ValueError("lambda0 must lie strictly inside the clamp interval")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")


@dataclass(frozen=True)
class TraceRecord:
    t: int
    lam: float
    l_max: float
    l_min: float
    j: float
    grad_phi_norm: float
    grad_lambda_norm: float


@dataclass
class GfnTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path):
        write_trace_csv(path, self)


TRACE_COLUMNS = ("t", "lambda", "l_max", "l_min", "j", "grad_phi_norm", "grad_lambda_norm")


def write_trace_csv(path, trace: GfnTrace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in trace.records:
            w.writerow([r.t] + [repr(float(v)) for v in
                                (r.lam, r.l_max, r.l_min, r.j, r.grad_phi_norm, r.grad_lambda_norm)])


def read_trace_csv(path) -> GfnTrace:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return GfnTrace([TraceRecord(int(r["t"]), float(r["lambda"]), float(r["l_max"]), float(r["l_min"]),
                                 float(r["j"]), float(r["grad_phi_norm"]), float(r["grad_lambda_norm"]))
                     for r in rows])


# ---------------------------------------------------------------- branches

def _forgotten_targets(n, forget_labels):
    if not len(forget_labels):
        raise EmptyInputError("at least one forgotten label is required")
    return round_robin_labels(n, forget_labels)


def loss_max(generated, theta0: ClassifierModel, forget_labels,
             loss_floor=1e-6, theta0_params=None):
    """Cross-entropy of the original model on generated samples vs. forgotten labels.

    ``generated`` may be an array or a tensor produced by the generator graph;
    the result is floored at ``loss_floor``.
    """
    generated = ad.as_tensor(generated)
    params = theta0_params if theta0_params is not None else ad.leaves(theta0.params, False)
    _, logits = classifier_graph(params, generated, theta0.n_feature_layers)
    targets = _forgotten_targets(generated.shape[0], forget_labels)
    return ad.floor_at(ad.cross_entropy_loss(logits, targets), loss_floor)


def inner_update(theta0: ClassifierModel, generated, generated_labels, retain: LabeledDataset,
                 inner_lr, create_graph=True, theta0_params=None):
    """One full-batch SGD step of the classifier on generated samples plus ``retain``.

    Returns the stepped parameters as tensors. With ``create_graph`` they stay
    differentiable with respect to whatever produced ``generated``.
    """
    generated = ad.as_tensor(generated)
    if generated.shape[0] + len(retain) == 0:
        raise EmptyInputError("inner update over an empty batch")
    params = theta0_params if theta0_params is not None else ad.leaves(theta0.params)
    x = ad.concat([generated, ad.Tensor(retain.inputs)])
    y = np.concatenate([np.asarray(generated_labels, dtype=np.int_), retain.labels])
    _, logits = classifier_graph(params, x, theta0.n_feature_layers)
    loss = ad.cross_entropy_loss(logits, y)
    names = list(params)
    grads = ad.grad(loss, [params[k] for k in names], create_graph=create_graph)
    if inner_lr == 0:
        return {k: params[k] for k in names}
    return {k: ad.sub(params[k], ad.mul(g, inner_lr)) for k, g in zip(names, grads)}


def loss_min(theta_prime, theta0: ClassifierModel, retain: LabeledDataset):
    """Mean cross-entropy of the stepped classifier on the retained subset."""
    if len(retain) == 0:
        raise EmptyInputError("retained subset is empty")
    _, logits = classifier_graph(theta_prime, retain.inputs, theta0.n_feature_layers)
    return ad.cross_entropy_loss(logits, retain.labels)


def gfn_objective(l_max, l_min, lam, loss_floor=1e-6):
    """``lam / max(L_max, floor) + (1 - lam) * L_min``; tensors or floats."""
    if isinstance(l_max, ad.Tensor) or isinstance(l_min, ad.Tensor):
        l_max = ad.floor_at(l_max, loss_floor)
        return ad.add(ad.mul(ad.reciprocal(l_max), lam), ad.mul(l_min, 1.0 - lam))
    return lam / max(l_max, loss_floor) + (1.0 - lam) * l_min


def lambda_gradient(l_max, l_min, loss_floor=1e-6):
    return 1.0 / max(l_max, loss_floor) - l_min


def lambda_step(lam, l_max, l_min, lambda_lr, margin=1e-3, loss_floor=1e-6):
    """Projected gradient ascent on the trade-off coefficient."""
    step = lambda_lr * lambda_gradient(l_max, l_min, loss_floor)
    return min(max(lam + step, margin), 1.0 - margin)


# ---------------------------------------------------------------- training loop

def make_generator(theta0: ClassifierModel, retain: LabeledDataset, cfg: GfnConfig) -> Generator:
    center, scale = data_range(retain.inputs, cfg.range_expand)
    return init_generator(theta0.spec, center, scale, seed=cfg.seed)


def gfn_step(gen_params, theta0: ClassifierModel, retain: LabeledDataset, forget_labels, z, lam,
             cfg: GfnConfig, center, scale):
    """Forward and backward of one iteration. Returns (record values, grad map)."""
    phi = ad.leaves(gen_params)
    theta = ad.leaves(theta0.params)
    x_gen = generator_graph(phi, z, center, scale)
    targets = _forgotten_targets(z.shape[0], forget_labels)
    l_max = loss_max(x_gen, theta0, forget_labels, cfg.loss_floor, theta0_params=theta)
    theta_prime = inner_update(theta0, x_gen, targets, retain, cfg.inner_lr,
                               create_graph=not cfg.first_order, theta0_params=theta)
    l_min = loss_min(theta_prime, theta0, retain)
    j = gfn_objective(l_max, l_min, lam, cfg.loss_floor)
    names = list(phi)
    grads = ad.grad(j, [phi[k] for k in names])
    grads = {k: g.value for k, g in zip(names, grads)}
    return l_max.item(), l_min.item(), j.item(), grads


def train_gfn(theta0: ClassifierModel, retain: LabeledDataset, forget_labels: Sequence[int],
              cfg: GfnConfig = GfnConfig(), generator: Optional[Generator] = None):
    """Train a generator of erasure samples; returns ``(generator, trace)``."""
    if len(retain) == 0:
        raise EmptyInputError("retained subset is empty")
    record_access("train_gfn", retain.inputs)
    gen = generator if generator is not None else make_generator(theta0, retain, cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    step = OptimStep(cfg.generator_lr, cfg.weight_decay, cfg.clip_norm) if cfg.generator_lr > 0 else None
    params = {k: v.copy() for k, v in gen.params.items()}
    lam = cfg.lambda0
    trace = GfnTrace()
    for t in range(1, cfg.epochs + 1):
        z = rng.standard_normal((cfg.batch_size, gen.spec.z_dim))
        l_max, l_min, j, grads = gfn_step(params, theta0, retain, forget_labels, z, lam, cfg,
                                          gen.center, gen.scale)
        gnorm = global_norm(grads)
        if not all(math.isfinite(v) for v in (l_max, l_min, j, gnorm)):
            raise GfnAbort("non-finite generator objective", t, trace)
        dlam = lambda_gradient(l_max, l_min, cfg.loss_floor)
        trace.records.append(TraceRecord(t, lam, l_max, l_min, j, gnorm, abs(dlam)))
        if step is not None:
            params = sgd_step(params, grads, step)
        lam = lambda_step(lam, l_max, l_min, cfg.lambda_lr, cfg.lambda_margin, cfg.loss_floor)
    return gen.with_params(params), trace


# ---------------------------------------------------------------- diagnostics

def convergence_report(trace: GfnTrace, loss_floor=1e-6):
    """Runtime checks of the stationarity, lower-bound and positivity properties."""
    if not len(trace):
        raise EmptyInputError("empty trace")
    lam = trace.column("lam")
    l_max = trace.column("l_max")
    j = trace.column("j")
    stationarity = trace.column("grad_phi_norm") ** 2 + trace.column("grad_lambda_norm") ** 2
    running_min = np.minimum.accumulate(stationarity)
    bound = lam / l_max.max()
    gap = np.abs(1.0 / l_max - trace.column("l_min"))
    return {
        "iterations": int(len(trace)),
        "stationarity": stationarity.tolist(),
        "running_min": running_min.tolist(),
        "running_min_non_increasing": bool(np.all(np.diff(running_min) <= 0)),
        "running_min_ratio": float(running_min[-1] / running_min[0]) if running_min[0] > 0 else 0.0,
        "objective_positive": bool(np.all(j > 0)),
        "lower_bound_holds": bool(np.all(j >= bound)),
        "lower_bound_slack": float(np.min(j - bound)),
        "l_max_floor_holds": bool(np.all(l_max >= loss_floor)),
        "equilibrium_gap_initial": float(gap[0]),
        "equilibrium_gap_final": float(gap[-1]),
        "lambda_range": [float(lam.min()), float(lam.max())],
    }
