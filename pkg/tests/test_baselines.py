import math

import numpy as np
import pytest

from gfoes.audit import ZeroGlanceAuditor
from gfoes.baselines import (METHODS, BaselineConfig, neggrad, noise_impair_repair, optimize_noise, proxy_noise,
                             retrain, run_baseline, uniform_labels)
from gfoes.data import LabeledDataset, assemble_erasure_set, round_robin_labels
from gfoes.errors import ConfigError, ZeroGlanceViolation
from gfoes.models import ModelSpec, classifier_forward, data_range, init_model
from gfoes.optim import OptimStep, sgd_step
from gfoes.training import TrainProtocol, fit, loss_and_grads


def small(seed=0):
    rng = np.random.default_rng(seed)
    theta0 = init_model(ModelSpec(3, 3, hidden=(4,), seed=seed))
    retain = LabeledDataset(rng.standard_normal((6, 3)), [1, 2, 1, 2, 1, 2], 3)
    return theta0, retain


def same(a, b):
    return all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


@pytest.mark.parametrize("method", ["neggrad", "random_label"])
def test_zero_epochs_is_identity(method):
    theta0, retain = small()
    out = run_baseline(theta0, retain, (0,), BaselineConfig(method, epochs=0))
    assert same(out, theta0)


def test_retrain_zero_epochs_is_fresh_init():
    theta0, retain = small()
    out = retrain(theta0.spec, retain, BaselineConfig("retrain", epochs=0))
    assert same(out, init_model(theta0.spec))


def test_single_neggrad_step_is_negated_sgd():
    theta0, retain = small(1)
    cfg = BaselineConfig("neggrad", learning_rate=0.2, batch_size=64, clip_norm=None, seed=3)
    count = 3  # max retained class count times one forgotten label
    x = proxy_noise(retain, count, [3, 11], cfg.range_expand)
    _, g = loss_and_grads(theta0, x, np.zeros(count, dtype=int))
    want = sgd_step(theta0.params, {k: -v for k, v in g.items()}, OptimStep(0.2, cfg.weight_decay))
    got = neggrad(theta0, retain, (0,), cfg)
    assert all(np.allclose(got.params[k], want[k], atol=1e-14) for k in want)


def test_proxy_noise_inside_expanded_range():
    _, retain = small()
    x = proxy_noise(retain, 500, 0, 0.1)
    c, s = data_range(retain.inputs, 0.1)
    assert np.all(np.abs(x - c) <= s)


def test_uniform_labels_within_three_sigma():
    n, k = 10_000, 5
    counts = np.bincount(uniform_labels(n, k, 0), minlength=k)
    sigma = math.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(counts - n / k) <= 3 * sigma)


@pytest.mark.parametrize("method", METHODS)
def test_deterministic(method):
    theta0, retain = small(2)
    cfg = BaselineConfig(method, learning_rate=0.1, noise_steps=3, seed=4)
    assert same(run_baseline(theta0, retain, (0,), cfg), run_baseline(theta0, retain, (0,), cfg))


def test_nir_without_noise_steps_is_plain_noise_finetune():
    theta0, retain = small(3)
    cfg = BaselineConfig("noise_impair_repair", learning_rate=0.1, noise_steps=0, repair_lr=0.05, seed=2)
    labels = round_robin_labels(3, (0,))
    noise = proxy_noise(retain, 3, [2, 11], cfg.range_expand)
    impair = assemble_erasure_set(noise, labels, retain, (0,), seed=[2, 16])
    m = fit(theta0, impair, cfg.protocol(), seed=[2, 17])
    m = fit(m, retain, TrainProtocol(0.05, 1, 32, cfg.weight_decay, cfg.clip_norm), seed=[2, 18])
    assert same(noise_impair_repair(theta0, retain, (0,), cfg), m)


def test_optimized_noise_raises_loss_and_stays_in_box():
    theta0, retain = small(4)
    c, s = data_range(retain.inputs, 0.1)
    x0 = proxy_noise(retain, 8, 0, 0.1)
    y = np.zeros(8, dtype=int)
    x1 = optimize_noise(theta0, x0, y, 20, 0.05, c - s, c + s)

    def ce(x):
        logits = classifier_forward(theta0, x)[1]
        m = logits.max(1, keepdims=True)
        return float(np.mean(m[:, 0] + np.log(np.exp(logits - m).sum(1)) - logits[:, 0]))

    assert ce(x1) > ce(x0)
    assert np.all(x1 >= c - s - 1e-12) and np.all(x1 <= c + s + 1e-12)


@pytest.mark.parametrize("kw", [dict(method="finetune"), dict(method="neggrad", learning_rate=0.0),
                                dict(method="neggrad", epochs=-1), dict(method="neggrad", noise_per_class=0),
                                dict(method="neggrad", batch_size=0)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        BaselineConfig(**kw)


@pytest.mark.parametrize("method", METHODS)
def test_forgotten_rows_rejected(method):
    theta0, retain = small()
    bad = LabeledDataset(retain.inputs, [0, 2, 1, 2, 1, 2], 3)
    with pytest.raises(ZeroGlanceViolation):
        run_baseline(theta0, bad, (0,), BaselineConfig(method))


@pytest.mark.parametrize("method", METHODS)
def test_baselines_never_touch_forget_rows(method):
    theta0, retain = small(5)
    forget = np.random.default_rng(9).standard_normal((4, 3)) + 10
    with ZeroGlanceAuditor(forget) as aud:
        run_baseline(theta0, retain, (0,), BaselineConfig(method, noise_steps=2))
    assert aud.violations == 0 and aud.accesses[method] == len(retain)


def test_auditor_flags_forget_rows():
    theta0, retain = small(5)
    with ZeroGlanceAuditor(retain.inputs[:2]) as aud:
        run_baseline(theta0, retain, (0,), BaselineConfig("neggrad"))
    assert aud.violations == 2
