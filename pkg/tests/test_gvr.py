from __future__ import annotations

import math

import numpy as np
import pytest

from chainvqa.config import GvrConfig
from chainvqa.errors import GeometryError, NumericError, ShapeError
from chainvqa.gvr import (
    BoundingBox,
    GvrParams,
    box_weight,
    edge_logits,
    gvr_attend,
    gvr_forward,
    relative_geometry,
    sin_embed,
    topk_neighborhood,
)
from chainvqa.nn import ParamStore
from chainvqa.tensor import Tensor

CONFIG = GvrConfig(d_q=16, d_v=16, heads=2, k=3)


def _reference_embed(g, d_h, base):
    n = d_h // 8
    out = np.zeros(d_h)
    for c in range(4):
        for k in range(n):
            wavelength = base ** ((k + 1) / n)
            out[c * (d_h // 4) + 2 * k] = math.sin(g[c] / wavelength)
            out[c * (d_h // 4) + 2 * k + 1] = math.cos(g[c] / wavelength)
    return out


def _reference_gvr(v, q, boxes, params, config):
    """Double-loop GVR with no vectorization and no masking shortcuts.

    Returns None when some attention row has no finite logit.
    """

    m = v.shape[0]
    w = params.w.data
    nodes = [w @ np.concatenate([v[i], q]) for i in range(m)]
    heads = []
    for h in range(config.heads):
        wq, wk, wv, wb = (params.w_q[h].data, params.w_k[h].data, params.w_v[h].data,
                          params.w_b[h].data)
        out = np.zeros((m, config.d_h))
        for i in range(m):
            logits = []
            for j in range(m):
                visual = float((wq @ nodes[i]) @ (wk @ nodes[j])) / math.sqrt(config.d_h)
                g = relative_geometry(boxes[i], boxes[j], config.geometry_eps)
                weight = max(0.0, float(wb @ _reference_embed(g, config.d_h, config.wave_base)))
                logits.append(visual + (math.log(weight) if weight > 0 else -math.inf))
            ranked = sorted(range(m), key=lambda j: (-logits[j], j))[: min(config.k, m)]
            finite = [j for j in ranked if logits[j] != -math.inf]
            if not finite:
                return None
            top = max(logits[j] for j in finite)
            total = sum(math.exp(logits[j] - top) for j in finite)
            acc = np.zeros(config.d_h)
            for j in finite:
                acc += math.exp(logits[j] - top) / total * (wv @ nodes[j])
            out[i] = np.maximum(acc, 0.0)
        heads.append(out)
    return np.concatenate(heads, axis=1)


def _instance(seed, m=None, config=CONFIG, flip_geometry=False):
    rng = np.random.default_rng(seed)
    m = m or int(rng.integers(1, 7))
    params = GvrParams.create(ParamStore(seed), "gvr", config)
    if flip_geometry:
        for w_b in params.w_b:
            w_b.data *= rng.choice([-1.0, 1.0], size=w_b.shape)
    boxes = [
        BoundingBox(float(rng.uniform(0, 80)), float(rng.uniform(0, 80)),
                    float(rng.uniform(2, 30)), float(rng.uniform(2, 30)))
        for _ in range(m)
    ]
    v = rng.normal(size=(m, config.d_v))
    q = rng.normal(size=config.d_q)
    return v, q, boxes, params


@pytest.mark.parametrize("seed", range(200))
def test_gvr_matches_brute_force_reference(seed):
    v, q, boxes, params = _instance(seed, flip_geometry=seed % 4 == 3)
    expected = _reference_gvr(v, q, boxes, params, CONFIG)
    if expected is None:
        with pytest.raises(NumericError):
            gvr_forward(Tensor(v), Tensor(q), boxes, params, CONFIG)
        return
    out = gvr_attend(Tensor(v), Tensor(q), boxes, params, CONFIG)
    assert out.features.shape == (len(boxes), CONFIG.d_q)
    assert np.max(np.abs(out.features.numpy() - expected)) < 1e-10
    for att in out.attention:
        assert np.all((att > 0).sum(axis=1) <= min(CONFIG.k, len(boxes)))
        assert np.allclose(att.sum(axis=1), 1.0, atol=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_gvr_is_permutation_equivariant(seed):
    v, q, boxes, params = _instance(seed, m=5)
    perm = np.random.default_rng(seed + 100).permutation(5)
    base = gvr_forward(Tensor(v), Tensor(q), boxes, params, CONFIG).numpy()
    permuted = gvr_forward(Tensor(v[perm]), Tensor(q), [boxes[i] for i in perm], params, CONFIG)
    assert np.allclose(permuted.numpy(), base[perm], atol=1e-10)


def test_single_region_attends_to_itself():
    v, q, boxes, params = _instance(0, m=1)
    out = gvr_attend(Tensor(v), Tensor(q), boxes, params, CONFIG)
    assert out.features.shape == (1, CONFIG.d_q)
    assert all(att.tolist() == [[1.0]] for att in out.attention)


def test_sin_embed_layout_matches_reference():
    g = np.array([0.3, -1.2, 2.5, -0.01])
    for d_h in (8, 16, 96):
        assert np.allclose(sin_embed(g, d_h), _reference_embed(g, d_h, 1000.0), atol=1e-14)
    with pytest.raises(GeometryError):
        sin_embed(g, 12)


def test_relative_geometry_values_and_clamp():
    a = BoundingBox(10, 20, 4, 5)
    b = BoundingBox(18, 10, 8, 10)
    expected = [math.log(8 / 4), math.log(10 / 5), math.log(8 / 4), math.log(10 / 5)]
    assert np.allclose(relative_geometry(a, b), expected)
    same = relative_geometry(a, a)
    assert same[0] == pytest.approx(math.log(1e-3 / 4))
    assert same[2] == 0.0


def test_box_weight_clips_negative_products():
    assert box_weight(np.array([1.0, -1.0]), np.array([0.2, 0.5])) == 0.0
    assert box_weight(np.array([1.0, 1.0]), np.array([0.2, 0.5])) == pytest.approx(0.7)
    with pytest.raises(ShapeError):
        box_weight(np.ones(3), np.ones(2))


def test_degenerate_boxes_are_rejected():
    with pytest.raises(GeometryError):
        BoundingBox(0, 0, 0, 4)
    with pytest.raises(GeometryError):
        BoundingBox.from_list([1, 2, 3])


def test_topk_neighborhood_ties_and_infinities():
    assert topk_neighborhood([1.0, 1.0, 0.0], 1) == [0]
    assert topk_neighborhood([0.5, 2.0, -1.0, 3.0], 2) == [1, 3]
    assert topk_neighborhood([-math.inf, -math.inf, 2.0], 2) == [0, 2]
    assert topk_neighborhood([0.1, 0.2], 5) == [0, 1]


def test_all_clipped_geometry_surfaces_a_numeric_error():
    v, q, boxes, params = _instance(1, m=3)
    for w_b in params.w_b:
        w_b.data[...] = 0.0
    with pytest.raises(NumericError):
        gvr_forward(Tensor(v), Tensor(q), boxes, params, CONFIG)


def test_shape_checks():
    v, q, boxes, params = _instance(2, m=3)
    with pytest.raises(ShapeError):
        gvr_forward(Tensor(v), Tensor(q), boxes[:2], params, CONFIG)
    with pytest.raises(ShapeError):
        gvr_forward(Tensor(v[:, :8]), Tensor(q), boxes, params, CONFIG)
    small = GvrParams.create(ParamStore(0), "gvr", GvrConfig(d_q=32, d_v=32, heads=4, k=3))
    with pytest.raises(ShapeError):
        gvr_forward(Tensor(v), Tensor(q), boxes, small, CONFIG)


def test_geometry_params_start_positive():
    params = GvrParams.create(ParamStore(3), "gvr", CONFIG)
    assert all(np.all(w_b.data >= 0) for w_b in params.w_b)


@pytest.mark.parametrize("seed", range(10))
def test_edge_logits_match_pairwise_reference(seed):
    v, q, boxes, params = _instance(seed)
    m = len(boxes)
    nodes = np.stack([params.w.data @ np.concatenate([v[i], q]) for i in range(m)])
    logits = edge_logits(Tensor(nodes), boxes, params, CONFIG)
    assert len(logits) == CONFIG.heads
    for h, head in enumerate(logits):
        wq, wk, wb = params.w_q[h].data, params.w_k[h].data, params.w_b[h].data
        for i in range(m):
            for j in range(m):
                visual = float((wq @ nodes[i]) @ (wk @ nodes[j])) / math.sqrt(CONFIG.d_h)
                g = relative_geometry(boxes[i], boxes[j], CONFIG.geometry_eps)
                raw = float(wb @ _reference_embed(g, CONFIG.d_h, CONFIG.wave_base))
                if abs(raw) < 1e-12:
                    continue
                if raw < 0:
                    assert head.data[i, j] == -math.inf
                else:
                    expected = visual + math.log(raw)
                    assert head.data[i, j] == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_edge_logits_reject_nan_nodes():
    _, _, boxes, params = _instance(4, m=3)
    nodes = Tensor(np.ones((3, CONFIG.d_v)))
    nodes.data[1, 2] = math.nan
    with pytest.raises(NumericError):
        edge_logits(nodes, boxes, params, CONFIG)
