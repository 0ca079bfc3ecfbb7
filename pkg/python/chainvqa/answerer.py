"""Chain visual reasoning answerer.

The region matrix is refined once per sub-question with a shared GVR block
and a residual connection, a shared MLP predicts each sub-answer from the
mean of the residual, and a separate GVR block plus attention-product fusion
produces the final answer logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .attention import FusionOutput, ProductFusion
from .checkpoint import load_checkpoint, save_checkpoint
from .config import AnswererConfig, EncoderConfig, GvrConfig, RunConfig
from .errors import CheckpointError, DatasetError, ShapeError
from .gvr import BoundingBox, GvrOutput, GvrParams, gvr_attend, gvr_forward
from .logger import get_logger
from .nn import EVAL, MLP, Linear, Mode, ParamStore, TransformerEncoder
from .records import TraceRecord, TraceStep
from .scene import RegionSet
from .tensor import Tensor
from .vocab import SUB_ANSWERS, AnswerVocab, Vocab

logger = get_logger(__name__)

ENCODER_PREFIX = "answerer.encoder"

SubQuestion = tuple[str, str]


@dataclass
class EncodedQuestion:
    pooled: Tensor
    sub_questions: list[Tensor] = field(default_factory=list)


@dataclass
class SprTrace:
    """Visual states V_0..V_T, the residuals, per-step sub-logits and attention."""

    states: list[Tensor]
    residuals: list[Tensor] = field(default_factory=list)
    sub_logits: list[Tensor] = field(default_factory=list)
    attention: list[GvrOutput] = field(default_factory=list)
    fusion: FusionOutput | None = None

    def top_regions(self, step: int, n: int = 2) -> list[int]:
        degree = self.attention[step].in_degree()
        return [int(i) for i in np.argsort(-degree, kind="stable")[:n]]

    def steps(self, sqs: Sequence[str]) -> list[TraceStep]:
        return [
            TraceStep(sq=sq, top_regions=self.top_regions(t),
                      in_degree=[float(x) for x in self.attention[t].in_degree()])
            for t, sq in enumerate(sqs)
        ]


@dataclass
class Prediction:
    answer: str
    logits: np.ndarray
    trace: SprTrace

    def to_trace_record(self, image_id: str, question: str, sqs: Sequence[str]) -> TraceRecord:
        attention = self.trace.fusion.attention.tolist() if self.trace.fusion else []
        return TraceRecord(image_id=image_id, question=question, prediction=self.answer,
                           steps=self.trace.steps(sqs), fusion_attention=attention)


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def encode_question(encoder: TransformerEncoder, ids: Sequence[int], mode: Mode = EVAL) -> Tensor:
    """Mean-pooled transformer encoding of the non-pad tokens."""

    return encoder(ids, mode)


def _spr_attend(v_prev: Tensor, se_t: Tensor, boxes: Sequence[BoundingBox], params: GvrParams,
                config: GvrConfig) -> tuple[Tensor, Tensor, GvrOutput]:
    out = gvr_attend(v_prev, se_t, boxes, params, config)
    return T.add(v_prev, out.features), out.features, out


def spr_step(v_prev: Tensor, se_t: Tensor, boxes: Sequence[BoundingBox], params: GvrParams,
             config: GvrConfig) -> tuple[Tensor, Tensor]:
    """V_t = V_{t-1} + GVR(V_{t-1}, SE_t); returns (V_t, V_t^R)."""

    v_t, residual, _ = _spr_attend(v_prev, se_t, boxes, params, config)
    return v_t, residual


def sub_classify(residual: Tensor, mlp: MLP, mode: Mode = EVAL) -> Tensor:
    return mlp(T.mean(residual, axis=0), mode)


def fuse(v_final: Tensor, e: Tensor, boxes: Sequence[BoundingBox], params: GvrParams,
         config: GvrConfig, fusion: ProductFusion, mode: Mode = EVAL) -> FusionOutput:
    """Context-aware GVR without residual, then attention pooling times projected question."""

    context = gvr_forward(v_final, e, boxes, params, config)
    return fusion(context, e, mode)


def total_loss(final_logits: Tensor, target_scores: np.ndarray | Tensor,
               sub_logits: Sequence[Tensor], sub_targets: Sequence[int],
               use_sub_loss: bool = True) -> Tensor:
    """BCE over the answer logits plus the cross-entropy of every sub-answer step."""

    if len(sub_logits) != len(sub_targets):
        raise ShapeError(f"{len(sub_logits)} sub-logit steps for {len(sub_targets)} targets")
    loss = T.bce_with_logits(final_logits, target_scores)
    if use_sub_loss:
        for logits, target in zip(sub_logits, sub_targets):
            loss = T.add(loss, T.cross_entropy(logits, target))
    return loss


def sub_target(answer: str) -> int:
    if answer not in SUB_ANSWERS:
        raise DatasetError(f"sub-answer {answer!r} is not yes/no")
    return SUB_ANSWERS.index(answer)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


class Answerer:
    MODEL = "answerer"

    def __init__(self, vocab: Vocab, answers: AnswerVocab, gvr: GvrConfig,
                 encoder: EncoderConfig, config: AnswererConfig, feature_width: int,
                 seed: int = 0):
        if gvr.d_q != gvr.d_v:
            raise ShapeError("the residual chain needs d_q == d_v")
        self.vocab = vocab
        self.answers = answers
        self.gvr = gvr
        self.encoder_config = encoder
        self.config = config
        self.feature_width = feature_width
        self.store = ParamStore(seed)
        self.region_map = Linear(self.store, "answerer.region_map", feature_width, gvr.d_v)
        self.encoder = TransformerEncoder(
            self.store, ENCODER_PREFIX, len(vocab), gvr.d_q, encoder.layers, encoder.heads,
            encoder.ffn, encoder.max_len, vocab.pad_id, config.dropout,
        )
        self.spr = GvrParams.create(self.store, "answerer.spr", gvr)
        self.fusion_gvr = GvrParams.create(self.store, "answerer.fusion_gvr", gvr)
        self.fusion = ProductFusion(self.store, "answerer.fusion", gvr.d_v, gvr.d_q,
                                    config.att_hidden, config.dropout)
        self.sub_classifier = MLP(self.store, "answerer.sub", gvr.d_v, config.sub_hidden,
                                  len(SUB_ANSWERS), config.dropout)
        self.classifier = MLP(self.store, "answerer.classifier", config.att_hidden,
                              config.classifier_hidden, len(answers), config.classifier_dropout)

    @classmethod
    def from_config(cls, vocab: Vocab, answers: AnswerVocab, config: RunConfig,
                    feature_width: int) -> "Answerer":
        return cls(vocab, answers, config.gvr, config.encoder, config.answerer, feature_width,
                   seed=config.numeric.init_seed)

    @property
    def lr_overrides(self) -> dict[str, float]:
        fixed = self.encoder_config.fixed_lr
        return {ENCODER_PREFIX: fixed} if fixed is not None else {}

    def token_ids(self, text: str) -> list[int]:
        return self.vocab.encode(text, self.encoder_config.max_len, pad=True)

    @staticmethod
    def sq_text(sq: str, answer: str) -> str:
        """A sub-question is encoded together with its answer word."""

        return f"{sq} {answer}"

    def encode(self, question: str | Sequence[int], sqs: Sequence[SubQuestion],
               mode: Mode = EVAL) -> EncodedQuestion:
        ids = self.token_ids(question) if isinstance(question, str) else list(question)
        pooled = encode_question(self.encoder, ids, mode)
        subs = [encode_question(self.encoder, self.token_ids(self.sq_text(sq, a)), mode)
                for sq, a in sqs]
        return EncodedQuestion(pooled, subs)

    def initial_state(self, regions: RegionSet) -> Tensor:
        if len(regions) == 0:
            raise DatasetError("cannot answer over an empty region set")
        return self.region_map(regions.tensor())

    def forward(self, question: str | Sequence[int], sqs: Sequence[SubQuestion],
                regions: RegionSet, mode: Mode = EVAL) -> tuple[Tensor, SprTrace]:
        """Final answer logits and the full reasoning trace."""

        encoded = self.encode(question, sqs, mode)
        v = self.initial_state(regions)
        trace = SprTrace(states=[v])
        for se_t in encoded.sub_questions:
            v, residual, attention = _spr_attend(v, se_t, regions.boxes, self.spr, self.gvr)
            trace.states.append(v)
            trace.residuals.append(residual)
            trace.attention.append(attention)
            trace.sub_logits.append(sub_classify(residual, self.sub_classifier, mode))
        trace.fusion = fuse(v, encoded.pooled, regions.boxes, self.fusion_gvr, self.gvr,
                            self.fusion, mode)
        return self.classifier(trace.fusion.joint, mode), trace

    def loss(self, question: str, sqs: Sequence[SubQuestion], regions: RegionSet,
             gold: Sequence[str], mode: Mode = EVAL, use_sub_loss: bool | None = None) -> Tensor:
        logits, trace = self.forward(question, sqs, regions, mode)
        use_sub = self.config.use_sub_loss if use_sub_loss is None else use_sub_loss
        return total_loss(logits, self.answers.targets(gold), trace.sub_logits,
                          [sub_target(a) for _, a in sqs], use_sub)

    def predict(self, question: str, sqs: Sequence[SubQuestion], regions: RegionSet) -> Prediction:
        logits, trace = self.forward(question, sqs, regions)
        scores = logits.numpy()
        return Prediction(self.answers.answer(int(np.argmax(scores))), scores, trace)

    def save(self, path: str | Path) -> Path:
        return save_checkpoint(
            path,
            self.store.state_dict(),
            model=self.MODEL,
            metadata={
                "vocab": self.vocab.to_list(),
                "answers": self.answers.to_list(),
                "gvr": self.gvr.model_dump(),
                "encoder": self.encoder_config.model_dump(),
                "config": self.config.model_dump(),
                "feature_width": self.feature_width,
            },
        )

    @classmethod
    def load(cls, path: str | Path) -> "Answerer":
        state, header = load_checkpoint(path, model=cls.MODEL)
        meta = header.metadata
        try:
            model = cls(
                Vocab.from_list(meta["vocab"]),
                AnswerVocab(meta["answers"]),
                GvrConfig(**meta["gvr"]),
                EncoderConfig(**meta["encoder"]),
                AnswererConfig(**meta["config"]),
                int(meta["feature_width"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"answerer checkpoint {path} has bad metadata: {exc}") from exc
        model.store.load_state_dict(state)
        return model
