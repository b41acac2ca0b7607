import math

import numpy as np
import pytest

from gfoes import autodiff as ad
from gfoes.errors import ConfigError, ShapeError
from gfoes.models import (ClassifierModel, Generator, ModelSpec, classifier_forward, generator_forward,
                          generator_graph, init_generator, init_model, load_model, param_count,
                          param_distance, save_model)


def relu(x):
    return np.maximum(x, 0.0)


def test_init_is_deterministic():
    a = init_model(ModelSpec(16, 5, seed=3))
    b = init_model(ModelSpec(16, 5, seed=3))
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_param_count_example():
    assert param_count(init_model(ModelSpec(16, 5, hidden=(32,))).params) == 709


def test_glorot_bounds_and_mean():
    spec = ModelSpec(200, 2, hidden=(300,), seed=0)
    w = init_model(spec).params["features.0.weight"]
    a = math.sqrt(6.0 / (200 + 300))
    assert np.abs(w).max() <= a
    # standard error of the mean of U(-a, a) is a / sqrt(3n)
    assert abs(w.mean()) <= 3 * a / math.sqrt(3 * w.size)
    assert np.array_equal(init_model(spec).params["features.0.bias"], np.zeros(300))


def test_invalid_spec():
    with pytest.raises(ConfigError):
        ModelSpec(4, 1)
    with pytest.raises(ConfigError):
        ModelSpec(4, 3, hidden=())


def test_zero_weights_zero_logits():
    m = init_model(ModelSpec(4, 3, hidden=(5,)))
    m = m.with_params({k: np.zeros_like(v) for k, v in m.params.items()})
    _, logits = classifier_forward(m, np.random.default_rng(0).standard_normal((6, 4)))
    assert np.array_equal(logits, np.zeros((6, 3)))


def test_identity_layer_features_are_relu():
    m = init_model(ModelSpec(3, 2, hidden=(3,)))
    params = dict(m.params)
    params["features.0.weight"] = np.eye(3)
    params["features.0.bias"] = np.zeros(3)
    x = np.array([[1.0, -2.0, 0.5], [-1.0, 3.0, 0.0]])
    feats, _ = classifier_forward(m.with_params(params), x)
    assert np.array_equal(feats, relu(x))


def test_forward_matches_matrix_arithmetic():
    m = init_model(ModelSpec(6, 4, hidden=(8, 5), seed=2))
    x = np.random.default_rng(1).standard_normal((9, 6))
    p = m.params
    h = relu(x @ p["features.0.weight"] + p["features.0.bias"])
    h = relu(h @ p["features.1.weight"] + p["features.1.bias"])
    logits = h @ p["head.weight"] + p["head.bias"]
    feats, got = classifier_forward(m, x)
    assert np.allclose(feats, h, atol=1e-14) and np.allclose(got, logits, atol=1e-14)


def test_forward_width_mismatch():
    with pytest.raises(ShapeError):
        classifier_forward(init_model(ModelSpec(6, 4)), np.zeros((2, 5)))


def _gen(seed=0):
    spec = ModelSpec(5, 3, hidden=(4,), z_dim=3, gen_hidden=(6,), seed=seed)
    return init_generator(spec, np.array([0.0, 1.0, -1.0, 2.0, 0.5]), np.array([1.0, 2.0, 0.5, 3.0, 1.0]))


def test_generator_zero_weights_outputs_center():
    g = _gen()
    g = g.with_params({k: np.zeros_like(v) for k, v in g.params.items()})
    out = generator_forward(g, np.random.default_rng(0).standard_normal((4, 3)))
    assert np.array_equal(out, np.tile(g.center, (4, 1)))


def test_generator_outputs_bounded():
    g = _gen(1)
    g = g.with_params({k: v * 50 for k, v in g.params.items()})
    out = generator_forward(g, 10 * np.random.default_rng(2).standard_normal((200, 3)))
    assert np.all(np.abs(out - g.center) <= g.scale)


def test_generator_width_mismatch():
    with pytest.raises(ShapeError):
        generator_forward(_gen(), np.zeros((2, 4)))


def test_generator_gradient_matches_fd():
    g = _gen(3)
    z = np.random.default_rng(4).standard_normal((5, 3))
    w = np.random.default_rng(5).standard_normal((5, 5))

    def obj(p):
        return float(np.sum(generator_forward(g.with_params(p), z) * w))

    leaves = ad.leaves(g.params)
    out = ad.sum(ad.mul(generator_graph(leaves, z, g.center, g.scale), w))
    got = ad.backward(out, leaves)
    ref = ad.finite_diff_grad(obj, g.params, 1e-6)
    for k in got:
        assert np.max(np.abs(got[k] - ref[k])) <= 1e-6 * max(1.0, np.max(np.abs(ref[k])))


def test_param_distance_examples():
    m = init_model(ModelSpec(4, 3, hidden=(5,), seed=0))
    assert param_distance(m.params, m.params, "all") == 0.0
    p = {k: v.copy() for k, v in m.params.items()}
    p["head.weight"][1, 2] += 3.0
    assert param_distance(m.params, p, "head") == 3.0
    assert param_distance(m.params, p, "feature_extractor") == 0.0


def test_param_distance_scalar_oracle():
    a = init_model(ModelSpec(4, 3, hidden=(5,), seed=0)).params
    b = init_model(ModelSpec(4, 3, hidden=(5,), seed=1)).params
    total = 0.0
    for k in a:
        for u, v in zip(a[k].ravel(), b[k].ravel()):
            total += (u - v) ** 2
    assert abs(param_distance(a, b) - math.sqrt(total)) < 1e-12


def test_param_distance_shape_mismatch():
    a = init_model(ModelSpec(4, 3, hidden=(5,))).params
    b = init_model(ModelSpec(4, 3, hidden=(6,))).params
    with pytest.raises(ShapeError):
        param_distance(a, b)


def test_param_distance_unknown_part():
    a = init_model(ModelSpec(4, 3)).params
    with pytest.raises(ValueError):
        param_distance(a, a, "body")


def test_model_file_round_trip(tmp_path):
    m = init_model(ModelSpec(4, 3, hidden=(5,), seed=9))
    save_model(tmp_path / "m.bin", m)
    back = load_model(tmp_path / "m.bin")
    assert isinstance(back, ClassifierModel) and back.spec == m.spec
    assert all(np.array_equal(back.params[k], m.params[k]) for k in m.params)
    g = _gen(2)
    save_model(tmp_path / "g.bin", g)
    gb = load_model(tmp_path / "g.bin")
    assert isinstance(gb, Generator) and np.array_equal(gb.scale, g.scale)


def test_model_file_layout(tmp_path):
    m = init_model(ModelSpec(4, 3, hidden=(5,), seed=9))
    save_model(tmp_path / "m.bin", m)
    raw = (tmp_path / "m.bin").read_bytes()
    header, body = raw.split(b"\n", 1)
    assert len(body) == 8 * param_count(m.params)
    first = np.frombuffer(body[:8 * 20], dtype="<f8")
    assert np.array_equal(first, m.params["features.0.weight"].ravel())
    assert b'"format_version":1' in header
