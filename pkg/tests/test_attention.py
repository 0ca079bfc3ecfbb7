from __future__ import annotations

import numpy as np
import pytest

from chainvqa import tensor as T
from chainvqa.attention import ProductFusion, TopDownAttention, soft_count
from chainvqa.errors import DatasetError, ShapeError
from chainvqa.nn import ParamStore
from chainvqa.tensor import Tape, Tensor, backward, finite_difference, relative_error


def test_top_down_attention_weights_form_a_distribution():
    attention = TopDownAttention(ParamStore(0), "att", d_v=6, d_q=4, hidden=5)
    rng = np.random.default_rng(0)
    v, q = Tensor(rng.normal(size=(3, 6))), Tensor(rng.normal(size=4))
    pooled, weights = attention.pool(v, q)
    assert weights.numpy().sum() == pytest.approx(1.0)
    assert np.allclose(pooled.numpy(), weights.numpy() @ v.numpy())


def test_attention_rejects_bad_inputs():
    attention = TopDownAttention(ParamStore(0), "att", d_v=6, d_q=4, hidden=5)
    with pytest.raises(ShapeError):
        attention.weights(Tensor(np.zeros((3, 5))), Tensor(np.zeros(4)))
    with pytest.raises(DatasetError):
        attention.weights(Tensor(np.zeros(6)), Tensor(np.zeros(4)))


def test_fusion_is_a_product_of_two_relu_projections():
    store = ParamStore(1)
    fusion = ProductFusion(store, "fusion", d_v=6, d_q=4, hidden=5)
    rng = np.random.default_rng(1)
    v, q = Tensor(rng.normal(size=(3, 6))), Tensor(rng.normal(size=4))
    out = fusion(v, q)
    pooled = out.weights.numpy() @ v.numpy()
    visual = np.maximum(pooled @ fusion.v_net.weight().numpy() + fusion.v_net.b.data, 0)
    question = np.maximum(q.numpy() @ fusion.q_net.weight().numpy() + fusion.q_net.b.data, 0)
    assert np.allclose(out.joint.numpy(), visual * question)
    assert out.attention.shape == (3,)


def test_fusion_gradient_check():
    store = ParamStore(2)
    fusion = ProductFusion(store, "fusion", d_v=4, d_q=3, hidden=4)
    rng = np.random.default_rng(2)
    v = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    q = Tensor(rng.normal(size=3), requires_grad=True)
    weights = Tensor(rng.normal(size=4))

    def build():
        return T.sum_(T.mul(fusion(v, q).joint, weights))

    with Tape() as tape:
        loss = build()
    grads = backward(tape, loss)
    for param in [v, q, *(p for _, p in store.items())]:
        assert relative_error(grads[param], finite_difference(build, param)) < 1e-3


def test_soft_count_bins_are_triangular():
    # sigmoid(+-50) saturates, so the count is exactly the number of positive logits
    logits = Tensor([50.0, 50.0, -50.0, 50.0])
    assert np.allclose(soft_count(logits, 5).numpy(), [0, 0, 0, 1, 0])
    half = Tensor([50.0, 0.0])
    assert np.allclose(soft_count(half, 3).numpy(), [0, 0.5, 0.5])
    assert np.allclose(soft_count(Tensor([-50.0] * 3), 2).numpy(), [1, 0])


def test_glimpses_and_count_widen_the_pooled_vector():
    store = ParamStore(3)
    fusion = ProductFusion(store, "fusion", d_v=4, d_q=3, hidden=5, glimpses=2, count_bins=3)
    assert fusion.v_net.weight().shape == (2 * 4 + 3, 5)
    assert "fusion.att1.score.b" in dict(store.items())
    rng = np.random.default_rng(3)
    v, q = Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=3))
    out = fusion(v, q)
    first = fusion.attention.weights(v, q).numpy()
    second = fusion.extra[0].weights(v, q).numpy()
    count = soft_count(fusion.attention.logits(v, q), 3).numpy()
    pooled = np.concatenate([first @ v.numpy(), second @ v.numpy(), count])
    visual = np.maximum(pooled @ fusion.v_net.weight().numpy() + fusion.v_net.b.data, 0)
    question = np.maximum(q.numpy() @ fusion.q_net.weight().numpy() + fusion.q_net.b.data, 0)
    assert np.allclose(out.joint.numpy(), visual * question)
    assert np.allclose(out.attention, first)
    with pytest.raises(ShapeError):
        ProductFusion(ParamStore(0), "bad", d_v=4, d_q=3, hidden=5, glimpses=0)


def test_counting_fusion_gradient_check():
    store = ParamStore(4)
    fusion = ProductFusion(store, "fusion", d_v=4, d_q=3, hidden=4, glimpses=2, count_bins=4)
    rng = np.random.default_rng(4)
    v = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    q = Tensor(rng.normal(size=3), requires_grad=True)
    weights = Tensor(rng.normal(size=4))

    def build():
        return T.sum_(T.mul(fusion(v, q).joint, weights))

    with Tape() as tape:
        loss = build()
    grads = backward(tape, loss)
    for param in [v, q, *(p for _, p in store.items())]:
        assert relative_error(grads[param], finite_difference(build, param)) < 1e-3
