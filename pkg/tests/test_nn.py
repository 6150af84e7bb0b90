import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import linear_model
from ldaucid.exceptions import ShapeError, ValidationError
from ldaucid.nn import (
    Dense,
    ModelParams,
    adam_init,
    adam_step,
    backward,
    classifier_forward,
    classify_from_embedding,
    cross_entropy,
    forward,
    init_model,
    softmax,
)


def test_zero_weights_give_uniform_softmax():
    model = init_model(3, (4,), 5, seed=0)
    model = model.with_arrays([np.zeros_like(a) for a in model.arrays()])
    _, logits, _ = forward(model, np.random.default_rng(0).normal(size=(6, 3)))
    assert np.all(logits == 0.0)
    np.testing.assert_allclose(softmax(logits), 0.2)


def test_identity_layer_passes_input_through():
    model = linear_model(np.eye(2), np.zeros(2))
    emb, _, _ = forward(model, np.array([[1.0, 2.0]]))
    np.testing.assert_array_equal(emb, [[1.0, 2.0]])


def test_relu_hand_evaluation():
    model = linear_model([[1.0, -1.0]], [0.0], classifier_weight=[[1.0]], activation="relu")
    emb, _, cache = forward(model, np.array([[2.0, 3.0]]))
    assert cache.pre[0][0, 0] == -1.0
    assert emb[0, 0] == 0.0


def test_forward_rejects_wrong_width(small_model):
    with pytest.raises(ShapeError):
        forward(small_model, np.zeros((3, 5)))


def test_layers_must_chain():
    with pytest.raises(ShapeError):
        ModelParams([Dense(np.zeros((4, 2)), np.zeros(4))], [Dense(np.zeros((2, 3)), np.zeros(2))])


def test_softmax_two_logits():
    p = softmax(np.array([[2.0, 0.0]]))
    e2 = math.exp(2.0)
    np.testing.assert_allclose(p[0], [e2 / (e2 + 1), 1 / (e2 + 1)], rtol=1e-15)
    assert abs(p[0, 0] - 0.8808) < 1e-4


def test_classifier_head_only(small_model):
    z = np.zeros((1, 8))
    z[0, 3] = 1.0
    logits = classify_from_embedding(small_model, z)
    _, full_logits, _ = forward(small_model, np.zeros((1, 2)))
    assert logits.shape == (1, 2)
    with pytest.raises(ShapeError):
        classify_from_embedding(small_model, np.zeros((1, 2)))


def test_large_margin_argmax():
    model = linear_model(np.eye(3), np.zeros(3))
    z = np.array([[0.0, 50.0, 0.0]])
    assert classify_from_embedding(model, z).argmax() == 1


def test_cross_entropy_uniform_is_ln2():
    loss, _ = cross_entropy(np.zeros((1, 2)), np.array([0]))
    assert loss == pytest.approx(math.log(2), abs=1e-15)


def test_cross_entropy_confident():
    loss, _ = cross_entropy(np.array([[10.0, -10.0]]), np.array([0]))
    expected = math.log1p(math.exp(-20.0))
    assert loss == pytest.approx(expected, rel=1e-9)
    assert loss == pytest.approx(2.06e-9, rel=1e-3)


def test_cross_entropy_rejects_bad_labels():
    with pytest.raises(ValidationError):
        cross_entropy(np.zeros((2, 2)), np.array([0, 2]))
    with pytest.raises(ValidationError):
        cross_entropy(np.zeros((1, 2)), np.array([-1]))


def test_cross_entropy_gradient_finite_differences(rng):
    logits = rng.normal(size=(5, 4))
    labels = rng.integers(0, 4, 5)
    _, grad = cross_entropy(logits, labels)
    h = 1e-5
    num = np.zeros_like(logits)
    for idx in np.ndindex(logits.shape):
        up, dn = logits.copy(), logits.copy()
        up[idx] += h
        dn[idx] -= h
        num[idx] = (cross_entropy(up, labels)[0] - cross_entropy(dn, labels)[0]) / (2 * h)
    rel = np.abs(grad - num).max() / np.abs(num).max()
    assert rel < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(2, 5), st.floats(0.1, 30.0), st.integers(0, 2**31 - 1))
def test_softmax_rows_sum_to_one_and_ce_nonnegative(n, k, scale, seed):
    r = np.random.default_rng(seed)
    logits = scale * r.normal(size=(n, k))
    np.testing.assert_allclose(softmax(logits).sum(axis=1), 1.0, atol=1e-12)
    loss, _ = cross_entropy(logits, r.integers(0, k, n))
    assert loss >= 0.0


def test_forward_is_deterministic(small_model, rng):
    x = rng.normal(size=(10, 2))
    a = forward(small_model, x)
    b = forward(small_model, x)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_zero_upstream_gives_zero_grads(small_model, rng):
    _, logits, cache = forward(small_model, rng.normal(size=(4, 2)))
    g = backward(small_model, cache, np.zeros_like(logits), np.zeros((4, 8)))
    assert all(np.all(a == 0) for a in g.arrays())


def test_embedding_only_path_leaves_classifier_grads_zero(small_model, rng):
    _, _, cache = forward(small_model, rng.normal(size=(4, 2)))
    g = backward(small_model, cache, None, rng.normal(size=(4, 8)))
    for layer in g.classifier:
        assert np.all(layer.weight == 0) and np.all(layer.bias == 0)
    assert any(np.any(layer.weight != 0) for layer in g.encoder)


def test_stale_cache_is_rejected(small_model, rng):
    _, _, cache = forward(small_model, rng.normal(size=(4, 2)))
    other = init_model(2, (16, 8), 3, seed=1)
    with pytest.raises(ShapeError):
        backward(other, cache, np.zeros((4, 3)))
    _, cache_cls = classifier_forward(small_model, rng.normal(size=(4, 8)))
    with pytest.raises(ShapeError):
        backward(small_model, cache_cls, np.zeros((4, 2)), np.zeros((4, 8)))


@pytest.mark.parametrize("activation", ["relu", "tanh", "identity"])
def test_total_gradient_finite_differences(activation, rng):
    model = init_model(3, (6, 4), 3, classifier_hidden=(5,), activation=activation, seed=3)
    model = model.from_flat(model.flat() + 0.05 * rng.normal(size=model.flat().size))
    x = rng.normal(size=(7, 3))
    y = rng.integers(0, 3, 7)
    w_emb = rng.normal(size=(7, 4))

    def loss(m):
        emb, logits, _ = forward(m, x)
        return cross_entropy(logits, y)[0] + float(np.sum(w_emb * emb ** 2))

    emb, logits, cache = forward(model, x)
    _, dlogits = cross_entropy(logits, y)
    g = backward(model, cache, dlogits, 2 * w_emb * emb).flat()
    theta = model.flat()
    h = 1e-5
    num = np.array([(loss(model.from_flat(theta + h * e)) - loss(model.from_flat(theta - h * e))) / (2 * h) for e in np.eye(theta.size)])
    assert np.abs(g - num).max() / np.abs(num).max() < 1e-4


def test_adam_zero_gradient_keeps_params(small_model):
    state = adam_init(small_model)
    state.first_moment[0][:] = 1.0
    new, st2 = adam_step(small_model, small_model.zeros_like(), state)
    # a nonzero first moment still moves params; with fresh state nothing moves
    fresh, st3 = adam_step(small_model, small_model.zeros_like(), adam_init(small_model))
    assert all(np.array_equal(a, b) for a, b in zip(fresh.arrays(), small_model.arrays()))
    assert st3.step_count == 1
    assert np.all(st2.first_moment[0] == pytest.approx(0.9))


def test_adam_first_step_magnitude_is_learning_rate(small_model):
    grads = small_model.with_arrays([np.full_like(a, 0.37) for a in small_model.arrays()])
    new, st = adam_step(small_model, grads, adam_init(small_model, learning_rate=1e-2))
    for a, b in zip(new.arrays(), small_model.arrays()):
        np.testing.assert_allclose(b - a, 1e-2, rtol=1e-6)
    assert st.step_count == 1


def test_adam_symmetry():
    layer = Dense(np.ones((2, 2)), np.zeros(2), "identity")
    model = ModelParams([layer], [Dense(np.ones((2, 2)), np.zeros(2), "identity")])
    grads = model.with_arrays([np.full_like(a, 0.5) for a in model.arrays()])
    state = adam_init(model)
    for _ in range(3):
        model, state = adam_step(model, grads, state)
    assert np.array_equal(model.encoder[0].weight, model.classifier[0].weight)


def test_adam_shape_mismatch(small_model):
    other = init_model(2, (4,), 2, seed=0)
    with pytest.raises(ShapeError):
        adam_step(small_model, other, adam_init(small_model))
