"""Mini-batch SGD loops shared by original training, unlearning and baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .data import LabeledDataset
from .errors import NumericError
from .models import ClassifierModel, classifier_graph
from .optim import OptimStep, sgd_step


@dataclass(frozen=True)
class TrainProtocol:
    learning_rate: float
    epochs: int = 1
    batch_size: int = 32
    weight_decay: float = 1e-4
    clip_norm: Optional[float] = 0.1

    def step(self):
        return OptimStep(self.learning_rate, self.weight_decay, self.clip_norm)


def minibatches(n, batch_size, rng):
    order = rng.permutation(n)
    for lo in range(0, n, batch_size):
        yield order[lo:lo + batch_size]


def loss_and_grads(model: ClassifierModel, inputs, labels):
    params = ad.leaves(model.params)
    _, logits = classifier_graph(params, inputs, model.n_feature_layers)
    loss = ad.cross_entropy_loss(logits, labels)
    return loss.item(), ad.backward(loss, params)


def fit(model: ClassifierModel, data: LabeledDataset, protocol: TrainProtocol, seed,
        ascent=False, history=None) -> ClassifierModel:
    """Run ``protocol.epochs`` shuffled passes of SGD over ``data``.

    With ``ascent`` the gradient is negated (loss is increased). Mean batch
    losses are appended to ``history`` when given.
    """
    rng = np.random.default_rng(seed)
    step = protocol.step()
    params = {k: v.copy() for k, v in model.params.items()}
    for _ in range(protocol.epochs):
        for idx in minibatches(len(data), protocol.batch_size, rng):
            loss, grads = loss_and_grads(model.with_params(params), data.inputs[idx], data.labels[idx])
            if not math.isfinite(loss):
                raise NumericError("training loss became non-finite")
            if ascent:
                grads = {k: -g for k, g in grads.items()}
            params = sgd_step(params, grads, step)
            if history is not None:
                history.append(loss)
    return model.with_params(params)
