from __future__ import annotations

import numpy as np
import pytest

from chainvqa import tensor as T
from chainvqa.answerer import (
    ENCODER_PREFIX,
    Answerer,
    encode_question,
    fuse,
    spr_step,
    sub_classify,
    sub_target,
    total_loss,
)
from chainvqa.config import AnswererConfig, EncoderConfig, GvrConfig
from chainvqa.errors import DatasetError, ShapeError
from chainvqa.gvr import GvrParams
from chainvqa.nn import ParamStore
from chainvqa.tensor import Tape, Tensor, backward, finite_difference, relative_error
from chainvqa.vocab import AnswerVocab, Vocab

QUESTION = "is the cup on the table"
SQS = [("Is there any cup?", "yes"), ("Is there any cup on the table?", "no")]


def _answerer(k=3, fixed_lr=None, seed=0):
    vocab = Vocab.build([QUESTION, *(sq for sq, _ in SQS), "yes no"])
    answers = AnswerVocab(["yes", "no", "red", "2"])
    return Answerer(
        vocab,
        answers,
        GvrConfig(d_q=16, d_v=16, heads=2, k=k),
        EncoderConfig(layers=1, heads=2, ffn=16, fixed_lr=fixed_lr),
        AnswererConfig(classifier_hidden=16, sub_hidden=8, att_hidden=16),
        feature_width=10,
        seed=seed,
    )


@pytest.mark.parametrize("seed", range(100))
def test_residual_chain_telescopes(seed, random_regions):
    config = GvrConfig(d_q=16, d_v=16, heads=2, k=3)
    rng = np.random.default_rng(seed)
    m, steps = int(rng.integers(1, 6)), int(rng.integers(0, 5))
    params = GvrParams.create(ParamStore(seed), "spr", config)
    regions = random_regions(m, 16, seed)
    v0 = regions.tensor()
    v, residuals = v0, []
    for _ in range(steps):
        v, residual = spr_step(v, Tensor(rng.normal(size=16)), regions.boxes, params, config)
        residuals.append(residual)
    expected = v0.numpy()
    for residual in residuals:
        expected = expected + residual.numpy()
    assert np.array_equal(v.numpy(), expected)


def test_no_sub_questions_is_the_plain_fusion_pathway(random_regions):
    answerer = _answerer()
    regions = random_regions(4, 10)
    logits, trace = answerer.forward(QUESTION, [], regions)
    assert len(trace.states) == 1
    assert trace.sub_logits == []

    pooled = encode_question(answerer.encoder, answerer.token_ids(QUESTION))
    fused = fuse(answerer.initial_state(regions), pooled, regions.boxes, answerer.fusion_gvr,
                 answerer.gvr, answerer.fusion)
    assert np.array_equal(logits.numpy(), answerer.classifier(fused.joint).numpy())


def test_forward_trace_shapes(random_regions):
    answerer = _answerer()
    regions = random_regions(5, 10)
    logits, trace = answerer.forward(QUESTION, SQS, regions)
    assert logits.shape == (4,)
    assert len(trace.states) == 3
    assert len(trace.residuals) == len(trace.sub_logits) == len(trace.attention) == 2
    assert all(s.shape == (5, 16) for s in trace.states)
    assert all(s.shape == (2,) for s in trace.sub_logits)
    assert np.array_equal(trace.states[2].numpy(),
                          trace.states[0].numpy() + trace.residuals[0].numpy()
                          + trace.residuals[1].numpy())


def test_prediction_trace_record(random_regions):
    answerer = _answerer()
    regions = random_regions(4, 10)
    prediction = answerer.predict(QUESTION, SQS, regions)
    assert prediction.answer in answerer.answers.to_list()
    record = prediction.to_trace_record("img", QUESTION, [sq for sq, _ in SQS])
    assert [step.sq for step in record.steps] == [sq for sq, _ in SQS]
    for step in record.steps:
        assert len(step.top_regions) == 2
        assert len(step.in_degree) == 4
        assert sum(step.in_degree) == pytest.approx(4.0)
    assert sum(record.fusion_attention) == pytest.approx(1.0)


def test_full_forward_gradient_check(random_regions):
    answerer = _answerer(k=4, seed=3)
    regions = random_regions(4, 10, seed=3)
    gold = ["red", "red", "2"]

    def build():
        return answerer.loss(QUESTION, SQS, regions, gold)

    with Tape() as tape:
        loss = build()
    grads = backward(tape, loss)
    names = [
        "answerer.spr.w_b.0",
        "answerer.spr.w_q.1",
        "answerer.fusion_gvr.w_b.1",
        "answerer.region_map.b",
        "answerer.sub.fc2.b",
        "answerer.classifier.fc2.g",
        "answerer.fusion.q_net.b",
        f"{ENCODER_PREFIX}.layer0.ln2.b",
    ]
    for name in names:
        param = answerer.store[name]
        assert relative_error(grads[param], finite_difference(build, param)) < 1e-3, name


def test_total_loss_terms():
    final = Tensor([0.2, -1.0, 0.5])
    targets = np.array([1.0, 0.0, 0.3])
    sub = [Tensor([1.0, -1.0]), Tensor([0.0, 2.0])]
    full = total_loss(final, targets, sub, [0, 1]).item()
    bce = T.bce_with_logits(final, targets).item()
    ce = sum(T.cross_entropy(s, t).item() for s, t in zip(sub, [0, 1]))
    assert full == pytest.approx(bce + ce)
    assert total_loss(final, targets, sub, [0, 1], use_sub_loss=False).item() == pytest.approx(bce)
    assert total_loss(final, targets, [], []).item() == pytest.approx(bce)
    with pytest.raises(ShapeError):
        total_loss(final, targets, sub, [0])


def test_sub_loss_switch_changes_the_loss(random_regions):
    answerer = _answerer()
    regions = random_regions(3, 10)
    with_sub = answerer.loss(QUESTION, SQS, regions, ["red"]).item()
    without = answerer.loss(QUESTION, SQS, regions, ["red"], use_sub_loss=False).item()
    assert with_sub > without


def test_sub_target_and_sq_text():
    assert sub_target("yes") == 0
    assert sub_target("no") == 1
    with pytest.raises(DatasetError):
        sub_target("maybe")
    assert Answerer.sq_text("Is there any cup?", "yes") == "Is there any cup? yes"


def test_encoder_learning_rate_override():
    assert _answerer().lr_overrides == {}
    answerer = _answerer(fixed_lr=5e-5)
    assert answerer.lr_overrides == {ENCODER_PREFIX: 5e-5}
    encoder_params = [name for name in answerer.store if name.startswith(ENCODER_PREFIX)]
    assert encoder_params


def test_save_load_round_trip(tmp_path, random_regions):
    answerer = _answerer(seed=4)
    regions = random_regions(3, 10)
    path = answerer.save(tmp_path / "answerer.json")
    restored = Answerer.load(path)
    a = answerer.predict(QUESTION, SQS, regions)
    b = restored.predict(QUESTION, SQS, regions)
    assert a.answer == b.answer
    assert np.array_equal(a.logits, b.logits)


def test_empty_question_is_rejected(random_regions):
    answerer = _answerer()
    with pytest.raises(DatasetError):
        answerer.forward("", [], random_regions(3, 10))


def test_sub_classify_reads_the_mean_residual(random_regions):
    answerer = _answerer()
    regions = random_regions(4, 10)
    _, trace = answerer.forward(QUESTION, SQS, regions)
    for residual, logits in zip(trace.residuals, trace.sub_logits):
        assert np.array_equal(sub_classify(residual, answerer.sub_classifier).numpy(),
                              logits.numpy())
    pooled = Tensor(trace.residuals[0].numpy().mean(axis=0))
    assert np.allclose(answerer.sub_classifier(pooled).numpy(),
                       trace.sub_logits[0].numpy(), atol=1e-12)
