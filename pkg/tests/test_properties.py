import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gfoes import autodiff as ad
from gfoes.data import LabeledDataset, SplitSpec, make_blobs, split_forget
from gfoes.eval import accuracy
from gfoes.gfn import GfnTrace, TraceRecord, convergence_report, lambda_step
from gfoes.models import ModelSpec, generator_forward, init_generator, init_model
from gfoes.optim import OptimStep, global_norm, sgd_step

finite = st.floats(-50, 50, allow_nan=False)
settings.register_profile("lab", max_examples=60, deadline=None)
settings.load_profile("lab")


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 5)), elements=finite), st.data())
def test_cross_entropy_non_negative(logits, data):
    labels = data.draw(st.lists(st.integers(0, logits.shape[1] - 1), min_size=len(logits), max_size=len(logits)))
    assert ad.cross_entropy_loss(ad.Tensor(logits), labels).item() >= -1e-12


@given(st.integers(1, 8), st.integers(2, 9), finite)
def test_cross_entropy_equal_logits_is_log_k(n, k, c):
    loss = ad.cross_entropy_loss(ad.Tensor(np.full((n, k), c)), [0] * n).item()
    assert abs(loss - math.log(k)) < 1e-12


@given(arrays(np.float64, 7, elements=finite), st.floats(1e-3, 10), st.floats(1e-4, 1.0))
def test_clipped_step_is_bounded(g, clip, lr):
    p = {"w": np.zeros(7)}
    out = sgd_step(p, {"w": g}, OptimStep(lr, 0.0, clip))
    assert global_norm(out) <= lr * clip * (1 + 1e-12)


@given(st.integers(2, 6), st.integers(4, 30), st.floats(0.01, 1.0), st.integers(0, 10_000))
def test_split_is_a_partition_with_balanced_subset(k, n, frac, seed):
    data = make_blobs(k, 3, n, seed=seed)
    s = split_forget(data, SplitSpec((seed % k,), frac, seed=seed))
    idx = s.indices
    parts = [idx[name] for name in ("forget", "retain", "test_forget", "test_retain")]
    allidx = np.concatenate(parts)
    assert sorted(allidx.tolist()) == list(range(len(data)))
    counts = s.retain_subset.class_counts()
    kept = [c for c in range(k) if c != seed % k]
    assert counts[seed % k] == 0
    assert len({int(counts[c]) for c in kept}) == 1


@given(st.floats(1e-3, 1 - 1e-3), st.floats(0, 1e6), st.floats(0, 1e6), st.floats(0, 100))
def test_lambda_stays_in_bounds(lam, lmax, lmin, rate):
    out = lambda_step(lam, lmax, lmin, rate)
    assert 1e-3 <= out <= 1 - 1e-3


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=30))
def test_running_min_non_increasing(js):
    trace = GfnTrace([TraceRecord(t, 0.5, 1.0, 0.5, j, 0.0, 0.0) for t, j in enumerate(js, 1)])
    rm = convergence_report(trace)["running_min"]
    assert all(b <= a for a, b in zip(rm, rm[1:]))


@given(st.integers(0, 1000), st.integers(3, 40))
def test_accuracy_permutation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    m = init_model(ModelSpec(4, 3, hidden=(5,), seed=seed))
    data = LabeledDataset(rng.standard_normal((n, 4)), rng.integers(0, 3, n), 3)
    perm = rng.permutation(n)
    shuffled = LabeledDataset(data.inputs[perm], data.labels[perm], 3)
    assert accuracy(m, data) == accuracy(m, shuffled)


@given(st.integers(0, 1000), st.floats(0.1, 100))
def test_generator_outputs_inside_box(seed, gain):
    rng = np.random.default_rng(seed)
    spec = ModelSpec(4, 3, hidden=(4,), z_dim=2, gen_hidden=(5,), seed=seed)
    g = init_generator(spec, rng.standard_normal(4), rng.uniform(0.1, 3.0, 4))
    g = g.with_params({k: v * gain for k, v in g.params.items()})
    out = generator_forward(g, rng.standard_normal((16, 2)) * gain)
    assert np.all(np.abs(out - g.center) <= g.scale * (1 + 1e-12))
