"""Corpus building, the ask-answer-reason inference protocol, evaluation and ablations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .answerer import Answerer, Prediction
from .config import RunConfig, SyntheticConfig
from .errors import ConfigError, DatasetError
from .logger import get_logger
from .metrics import EvalReport, build_report, dialogue_bleu, majority_answer, sq_frequencies, vqa_accuracy
from .oracle import GroundTruthOracle, Oracle, oracle_report
from .questioner import Questioner
from .records import (
    DialogueRecord,
    OverrideRecord,
    PredictionRecord,
    QuestionRecord,
    SceneRecord,
    SqsRecord,
    TraceRecord,
    index_scenes,
)
from .sqsgen import build_sqs, merge_overrides
from .synthetic import gen_questions, gen_scene
from .tagging import from_triples
from .training import Sample, train_answerer, train_oracle, train_questioner
from .vocab import SUB_ANSWERS, AnswerVocab, Vocab

logger = get_logger(__name__)

FULL = "full"
WO_SUB_LOSS = "wo-sub-loss"
WO_SQS = "wo-SQS"
SHUFFLE = "shuffle"
RANDOM_DROP = "random-drop-50"
VARIANTS = (FULL, WO_SUB_LOSS, WO_SQS, SHUFFLE, RANDOM_DROP)


@dataclass
class Corpus:
    scenes: list[SceneRecord]
    train: list[QuestionRecord]
    test: list[QuestionRecord]


def scene_seed(base: int, index: int) -> int:
    return base * 1_000_003 + index


def generate_corpus(config: SyntheticConfig) -> Corpus:
    """``config.scenes`` seeded scenes; the first ``train_scenes`` form the training split."""

    scenes, train, test = [], [], []
    for index in range(config.scenes):
        scene, regions = gen_scene(config, scene_seed(config.seed, index), f"syn-{index:06d}")
        scenes.append(SceneRecord.from_scene(scene, regions))
        target = train if index < config.train_scenes else test
        for q in gen_questions(scene, config):
            target.append(QuestionRecord(image_id=scene.image_id, question=q.question,
                                         answers=[q.answer], question_type=q.question_type))
    logger.info("Generated %d scenes, %d train and %d test questions",
                len(scenes), len(train), len(test))
    return Corpus(scenes, train, test)


def build_sqs_records(
    questions: Iterable[QuestionRecord],
    scenes: Sequence[SceneRecord],
    config: RunConfig,
    overrides: Iterable[OverrideRecord] = (),
) -> list[SqsRecord]:
    """Run the rule engine over every question, then apply manual overrides."""

    index = index_scenes(scenes)
    records = []
    for q in questions:
        scene_record = index.get(q.image_id)
        if scene_record is None:
            raise DatasetError(f"question refers to unknown image {q.image_id!r}")
        tagged = None
        if q.tokens is not None:
            tagged = from_triples((t.word, t.pos, t.head, t.dep) for t in q.tokens)
        records.append(build_sqs(
            q.question, scene_record.to_scene(), image_id=q.image_id, answers=q.answers,
            question_type=q.question_type, tagged=tagged, config=config.sqs,
        ))
    records = merge_overrides(records, overrides)
    logger.info("Built %d SQS records (%d non-empty)", len(records), sum(1 for r in records if r.sqs))
    return records


def make_samples(records: Iterable[SqsRecord], scenes: Sequence[SceneRecord]) -> list[Sample]:
    index = index_scenes(scenes)
    samples = []
    for record in records:
        scene_record = index.get(record.image_id)
        if scene_record is None:
            raise DatasetError(f"SQS record refers to unknown image {record.image_id!r}")
        samples.append(Sample(record, scene_record.to_regions(), scene_record.to_scene()))
    return samples


def build_vocab(records: Iterable[SqsRecord]) -> Vocab:
    texts: list[str] = list(SUB_ANSWERS)
    for record in records:
        texts.append(record.question)
        texts.extend(item.sq for item in record.sqs)
    return Vocab.build(texts)


def build_answers(records: Iterable[SqsRecord]) -> AnswerVocab:
    return AnswerVocab.from_annotations(r.answers for r in records)


def feature_width_of(samples: Sequence[Sample]) -> int:
    widths = {s.regions.width for s in samples}
    if len(widths) != 1:
        raise DatasetError(f"region features have mixed widths {sorted(widths)}")
    return widths.pop()


@dataclass
class Models:
    questioner: Questioner
    oracle: Oracle
    answerer: Answerer

    @property
    def vocab(self) -> Vocab:
        return self.answerer.vocab


def train_all(samples: Sequence[Sample], config: RunConfig, *, learned_oracle: bool = True) -> Models:
    vocab = build_vocab(s.record for s in samples)
    answers = build_answers(s.record for s in samples)
    width = feature_width_of(samples)
    questioner, _ = train_questioner(samples, config, vocab, width)
    if learned_oracle:
        oracle, _ = train_oracle(samples, config, vocab, width)
    else:
        oracle = GroundTruthOracle(config.sqs.overlap_threshold)
    answerer, _ = train_answerer(samples, config, vocab, answers, width)
    return Models(questioner, oracle, answerer)


def apply_variant(variant: str, sqs: Sequence[tuple[str, str]], rng: np.random.Generator
                  ) -> list[tuple[str, str]]:
    """Inference-time SQS transform of an ablation variant."""

    if variant in (FULL, WO_SUB_LOSS):
        return list(sqs)
    if variant == WO_SQS:
        return []
    if variant == SHUFFLE:
        return [sqs[i] for i in rng.permutation(len(sqs))]
    if variant == RANDOM_DROP:
        return [pair for pair in sqs if rng.random() >= 0.5]
    raise ConfigError(f"Unknown ablation variant {variant!r}; choose one of {list(VARIANTS)}")


@dataclass
class Inference:
    prediction: PredictionRecord
    result: Prediction
    sqs: list[tuple[str, str]]
    dialogue: DialogueRecord | None = None

    def trace(self) -> TraceRecord:
        record = self.prediction
        return self.result.to_trace_record(record.image_id, record.question,
                                           [sq for sq, _ in self.sqs])


def infer(sample: Sample, models: Models, *, sqs_source: str = "generated", variant: str = FULL,
          rng: np.random.Generator | None = None) -> Inference:
    """Questioner and oracle build the SQS (or the gold one is used), then the answerer predicts."""

    record = sample.record
    dialogue = None
    if sqs_source == "gold":
        sqs = [(item.sq, item.answer) for item in record.sqs]
    elif sqs_source == "generated":
        generated = models.questioner.generate_sqs(record.question, sample.regions, models.oracle,
                                                   sample.scene)
        dialogue = generated.to_record(record.image_id, record.question)
        sqs = generated.sqs
    else:
        raise ConfigError(f"sqs_source must be 'generated' or 'gold', got {sqs_source!r}")
    sqs = apply_variant(variant, sqs, rng if rng is not None else np.random.default_rng(0))
    result = models.answerer.predict(record.question, sqs, sample.regions)
    prediction = PredictionRecord(
        image_id=record.image_id,
        question=record.question,
        question_type=record.question_type,
        prediction=result.answer,
        answers=list(record.answers),
        score=vqa_accuracy(result.answer, record.answers) if record.answers else 0.0,
        sqs=[sq for sq, _ in sqs],
    )
    return Inference(prediction, result, sqs, dialogue)


@dataclass
class Evaluation:
    report: EvalReport
    inferences: list[Inference] = field(default_factory=list)

    @property
    def predictions(self) -> list[PredictionRecord]:
        return [i.prediction for i in self.inferences]

    @property
    def dialogues(self) -> list[DialogueRecord]:
        return [i.dialogue for i in self.inferences if i.dialogue is not None]


def evaluate(test: Sequence[Sample], train_records: Sequence[SqsRecord], models: Models,
             config: RunConfig, *, variant: str = FULL, sqs_source: str | None = None) -> Evaluation:
    source = sqs_source or config.train.sqs_source
    rng = np.random.default_rng(config.train.seed)
    inferences = [infer(s, models, sqs_source=source, variant=variant, rng=rng) for s in test]
    dialogues = [i.dialogue for i in inferences if i.dialogue is not None]
    oracle = None
    if not isinstance(models.oracle, GroundTruthOracle):
        triples = [
            (item.sq_type, item.answer, models.oracle.answer(item.sq, s.scene, s.regions).answer)
            for s in test for item in s.record.sqs
        ]
        oracle = oracle_report(triples) if triples else None
    report = build_report(
        [i.prediction for i in inferences],
        variant=variant,
        seed=config.train.seed,
        config_hash=config.config_hash(),
        majority=majority_answer(train_records),
        frequencies=sq_frequencies(train_records),
        bleu_scores=dialogue_bleu(dialogues, [s.record for s in test]),
        oracle=oracle,
    )
    logger.info("Evaluated %s on %d questions: accuracy %.4f", variant, report.count, report.accuracy)
    return Evaluation(report, inferences)


def ablation_evaluation(variant: str, train: Sequence[Sample], test: Sequence[Sample],
                        config: RunConfig, models: Models, *,
                        sqs_source: str | None = None) -> Evaluation:
    """Evaluate one variant; wo-sub-loss and wo-SQS retrain the answerer their own way."""

    if variant not in VARIANTS:
        raise ConfigError(f"Unknown ablation variant {variant!r}; choose one of {list(VARIANTS)}")
    answerer = models.answerer
    if variant in (WO_SUB_LOSS, WO_SQS):
        samples = list(train)
        if variant == WO_SQS:
            samples = [Sample(s.record.model_copy(update={"sqs": []}), s.regions, s.scene)
                       for s in samples]
        answerer, _ = train_answerer(samples, config, answerer.vocab, answerer.answers,
                                     answerer.feature_width, use_sub_loss=variant != WO_SUB_LOSS)
    variant_models = Models(models.questioner, models.oracle, answerer)
    train_records = [s.record for s in train]
    return evaluate(test, train_records, variant_models, config, variant=variant,
                    sqs_source=sqs_source)


def run_ablation(variant: str, train: Sequence[Sample], test: Sequence[Sample], config: RunConfig,
                 models: Models, *, sqs_source: str | None = None) -> EvalReport:
    return ablation_evaluation(variant, train, test, config, models, sqs_source=sqs_source).report
