"""Sub-question oracles: a rule-based scene oracle and a learned attention classifier.

Both answer yes/no sub-questions through the same ``Oracle`` protocol, so the
dialogue loop does not care which one it talks to.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np
from pydantic import BaseModel

from . import tensor as T
from .attention import ProductFusion
from .checkpoint import load_checkpoint, save_checkpoint
from .config import OracleConfig
from .errors import DatasetError, OracleError, ParseError
from .logger import get_logger
from .nn import EVAL, GRU, MLP, Embedding, Mode, ParamStore
from .records import SqType
from .scene import RegionSet, Scene, horizontal_third, is_in, is_on
from .tagging import get_singular
from .tensor import Tensor
from .vocab import SUB_ANSWERS, Vocab, tokenize

logger = get_logger(__name__)

ERROR_ANSWER = "<error>"


@dataclass(frozen=True)
class OracleAnswer:
    answer: str
    confidence: float
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class ParsedSq:
    sq_type: SqType
    entity: str
    attribute: str | None = None
    count: int | None = None
    preposition: str | None = None
    other: str | None = None
    position: str | None = None


_W = r"(?P<{}>[a-z0-9]+)"

_TEMPLATES: list[tuple[SqType, re.Pattern[str]]] = [
    (SqType.POSITION, re.compile(
        rf"is the {_W.format('entity')} (?:on the (?P<side>left|right)|in the (?P<middle>middle))")),
    (SqType.PREP, re.compile(
        rf"is there any {_W.format('entity')} (?P<prep>on|in) the {_W.format('other')}")),
    (SqType.EXISTENCE, re.compile(rf"is there any {_W.format('entity')}")),
    (SqType.NUMBER, re.compile(rf"is there only one {_W.format('entity')}")),
    (SqType.NUMBER, re.compile(rf"are there (?P<count>\d+) {_W.format('plural')}")),
    (SqType.EXISTENCE, re.compile(rf"are there {_W.format('plural')}")),
    (SqType.ATTRIBUTE, re.compile(rf"is the {_W.format('entity')} {_W.format('attribute')}")),
]


def parse_sq(text: str) -> ParsedSq:
    """Parse a templated yes/no sub-question; raises ``ParseError`` otherwise."""

    normalized = " ".join(tokenize(text))
    for sq_type, pattern in _TEMPLATES:
        match = pattern.fullmatch(normalized)
        if match is None:
            continue
        groups = match.groupdict()
        entity = groups.get("entity") or get_singular(groups["plural"])
        if sq_type is SqType.NUMBER:
            count = int(groups["count"]) if groups.get("count") else 1
            return ParsedSq(sq_type, entity, count=count)
        if sq_type is SqType.PREP:
            return ParsedSq(sq_type, entity, preposition=groups["prep"], other=groups["other"])
        if sq_type is SqType.POSITION:
            return ParsedSq(sq_type, entity, position=groups["side"] or groups["middle"])
        if sq_type is SqType.ATTRIBUTE:
            return ParsedSq(sq_type, entity, attribute=groups["attribute"])
        return ParsedSq(sq_type, entity)
    raise ParseError(f"not a known sub-question template: {text!r}")


def _holds(sq: ParsedSq, scene: Scene, threshold: float) -> bool:
    objects = scene.with_label(sq.entity)
    if sq.sq_type is SqType.EXISTENCE:
        return bool(objects)
    if sq.sq_type is SqType.ATTRIBUTE:
        return any(obj.has_attribute(sq.attribute) for obj in objects)
    if sq.sq_type is SqType.NUMBER:
        return len(objects) == sq.count
    if sq.sq_type is SqType.POSITION:
        return any(horizontal_third(obj.box, scene.width) == sq.position for obj in objects)
    relation = is_on if sq.preposition == "on" else is_in
    return any(
        relation(a.box, b.box, threshold)
        for a in objects
        for b in scene.with_label(sq.other)
        if a is not b
    )


def gt_answer(sq: ParsedSq | str, scene: Scene, threshold: float = 0.5) -> OracleAnswer:
    """Answer from scene truth; unparseable text yields an error answer with confidence 0."""

    if isinstance(sq, str):
        try:
            sq = parse_sq(sq)
        except ParseError as exc:
            return OracleAnswer(ERROR_ANSWER, 0.0, str(exc))
    return OracleAnswer("yes" if _holds(sq, scene, threshold) else "no", 1.0)


class Oracle(Protocol):
    def answer(self, sq: str, scene: Scene | None, regions: RegionSet) -> OracleAnswer:
        ...


class GroundTruthOracle:
    """Reads answers off annotated scenes."""

    def __init__(self, overlap_threshold: float = 0.5):
        self.overlap_threshold = overlap_threshold

    def answer(self, sq: str, scene: Scene | None, regions: RegionSet) -> OracleAnswer:
        if scene is None:
            raise OracleError("the ground-truth oracle needs scene annotations")
        return gt_answer(sq, scene, self.overlap_threshold)


def answer_from_logits(logits: Sequence[float], answers: Sequence[str] = SUB_ANSWERS) -> OracleAnswer:
    """Argmax answer with its softmax probability as confidence."""

    x = np.asarray(logits, dtype=np.float64)
    probs = np.exp(x - x.max())
    probs /= probs.sum()
    best = int(np.argmax(probs))
    return OracleAnswer(answers[best], float(probs[best]))


class LearnedOracle:
    """GRU sub-question encoder, multi-glimpse fusion with a soft count, yes/no classifier."""

    MODEL = "oracle"

    def __init__(self, vocab: Vocab, config: OracleConfig, feature_width: int, seed: int = 0):
        self.vocab = vocab
        self.config = config
        self.feature_width = feature_width
        self.store = ParamStore(seed)
        self.embed = Embedding(self.store, "oracle.embed", len(vocab), config.embed_dim)
        self.encoder = GRU(self.store, "oracle.gru", config.embed_dim, config.hidden)
        self.fusion = ProductFusion(self.store, "oracle.fusion", feature_width, config.hidden,
                                    config.att_hidden, config.dropout, glimpses=config.glimpses,
                                    count_bins=config.count_bins)
        self.classifier = MLP(self.store, "oracle.classifier", config.att_hidden, config.hidden,
                              len(SUB_ANSWERS), config.classifier_dropout)

    def encode(self, sq: str | Sequence[int]) -> list[int]:
        ids = self.vocab.encode(sq) if isinstance(sq, str) else list(sq)
        ids = [i for i in ids if i != self.vocab.pad_id]
        if not ids:
            raise DatasetError("cannot answer an empty sub-question")
        return ids

    def logits(self, sq: str | Sequence[int], regions: RegionSet, mode: Mode = EVAL) -> Tensor:
        ids = self.encode(sq)
        q = self.encoder.run(self.embed(ids))
        fused = self.fusion(regions.tensor(), q, mode)
        return self.classifier(fused.joint, mode)

    def loss(self, sq: str | Sequence[int], regions: RegionSet, answer: str,
             mode: Mode = EVAL) -> Tensor:
        if answer not in SUB_ANSWERS:
            raise DatasetError(f"sub-answer {answer!r} is not yes/no")
        return T.cross_entropy(self.logits(sq, regions, mode), SUB_ANSWERS.index(answer))

    def learned_answer(self, sq: str | Sequence[int], regions: RegionSet) -> OracleAnswer:
        return answer_from_logits(self.logits(sq, regions).numpy())

    def answer(self, sq: str, scene: Scene | None, regions: RegionSet) -> OracleAnswer:
        return self.learned_answer(sq, regions)

    def save(self, path: str | Path) -> Path:
        return save_checkpoint(
            path,
            self.store.state_dict(),
            model=self.MODEL,
            metadata={
                "vocab": self.vocab.to_list(),
                "config": self.config.model_dump(),
                "feature_width": self.feature_width,
            },
        )

    @classmethod
    def load(cls, path: str | Path) -> "LearnedOracle":
        state, header = load_checkpoint(path, model=cls.MODEL)
        meta = header.metadata
        oracle = cls(Vocab.from_list(meta["vocab"]), OracleConfig(**meta["config"]),
                     int(meta["feature_width"]))
        oracle.store.load_state_dict(state)
        return oracle


class TypeScore(BaseModel):
    count: int
    accuracy: float
    macro_f: float


class OracleReport(BaseModel):
    count: int
    accuracy: float
    macro_f: float
    f_definition: str = "macro average of per-class F1 over {yes, no}"
    per_type: dict[str, TypeScore]


def _macro_f(pairs: Sequence[tuple[str, str]]) -> float:
    scores = []
    for cls in SUB_ANSWERS:
        gold_n = sum(1 for gold, _ in pairs if gold == cls)
        pred_n = sum(1 for _, pred in pairs if pred == cls)
        if gold_n == 0 and pred_n == 0:
            continue
        tp = sum(1 for gold, pred in pairs if gold == pred == cls)
        precision = tp / pred_n if pred_n else 0.0
        recall = tp / gold_n if gold_n else 0.0
        total = precision + recall
        scores.append(2 * precision * recall / total if total else 0.0)
    return float(np.mean(scores)) if scores else 0.0


def _score(pairs: Sequence[tuple[str, str]]) -> TypeScore:
    correct = sum(1 for gold, pred in pairs if gold == pred)
    return TypeScore(count=len(pairs), accuracy=correct / len(pairs) if pairs else 0.0,
                     macro_f=_macro_f(pairs))


def oracle_report(results: Iterable[tuple[str, str, str]]) -> OracleReport:
    """Aggregate (sq_type, gold, predicted) triples into accuracy and macro F."""

    by_type: dict[str, list[tuple[str, str]]] = defaultdict(list)
    everything: list[tuple[str, str]] = []
    for sq_type, gold, predicted in results:
        key = sq_type.value if isinstance(sq_type, SqType) else str(sq_type)
        by_type[key].append((gold, predicted))
        everything.append((gold, predicted))
    overall = _score(everything)
    return OracleReport(
        count=overall.count,
        accuracy=overall.accuracy,
        macro_f=overall.macro_f,
        per_type={key: _score(pairs) for key, pairs in sorted(by_type.items())},
    )
