"""VQA consensus accuracy, corpus BLEU and the evaluation report."""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Mapping, Sequence

from pydantic import BaseModel

from .errors import DatasetError
from .oracle import OracleReport
from .records import DialogueRecord, PredictionRecord, SqsRecord
from .vocab import consensus_score, normalize_answer, tokenize

BUCKETS = ("SQS-0", "SQS-1", "SQS-2", "SQS-3&4")


def vqa_accuracy(prediction: str, gold: Sequence[str]) -> float:
    """min(#matching annotations / 3, 1); a lone annotation scores as exact match."""

    if not gold:
        raise DatasetError("VQA accuracy needs at least one gold answer")
    predicted = normalize_answer(prediction)
    matches = sum(1 for answer in gold if normalize_answer(answer) == predicted)
    return consensus_score(matches, len(gold))


def _ngrams(words: Sequence[str], n: int) -> Counter[tuple[str, ...]]:
    return Counter(tuple(words[i:i + n]) for i in range(len(words) - n + 1))


def bleu(candidates: Sequence[str], references: Sequence[str], max_n: int = 3) -> dict[int, float]:
    """Corpus BLEU-1..max_n in percent, one reference per candidate.

    Clipped n-gram precisions are pooled over the corpus, BLEU-n is the
    geometric mean of p_1..p_n times the brevity penalty, and any zero
    precision gives 0 (no smoothing).
    """

    if not 1 <= max_n <= 3:
        raise DatasetError(f"max_n must be 1, 2 or 3, got {max_n}")
    if not candidates or len(candidates) != len(references):
        raise DatasetError(
            f"BLEU needs a non-empty aligned corpus ({len(candidates)} vs {len(references)})"
        )
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = ref_len = 0
    for candidate, reference in zip(candidates, references):
        cand, ref = tokenize(candidate), tokenize(reference)
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            cand_counts, ref_counts = _ngrams(cand, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
            totals[n - 1] += max(len(cand) - n + 1, 0)
    if cand_len == 0:
        return {n: 0.0 for n in range(1, max_n + 1)}
    penalty = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    scores: dict[int, float] = {}
    log_sum = 0.0
    for n in range(1, max_n + 1):
        if matches[n - 1] == 0 or totals[n - 1] == 0:
            scores.update({k: 0.0 for k in range(n, max_n + 1)})
            break
        log_sum += math.log(matches[n - 1] / totals[n - 1])
        scores[n] = 100.0 * penalty * math.exp(log_sum / n)
    return scores


def dialogue_bleu(dialogues: Iterable[DialogueRecord], gold: Iterable[SqsRecord],
                  max_n: int = 3) -> dict[int, float]:
    """BLEU of generated against gold SQS, one sentence per dialogue.

    Only questions whose gold SQS is non-empty take part; an empty selection
    yields an empty dict.
    """

    reference = {(r.image_id, r.question): " ".join(i.sq for i in r.sqs) for r in gold if r.sqs}
    candidates, references = [], []
    for dialogue in dialogues:
        key = (dialogue.image_id, dialogue.question)
        if key in reference:
            candidates.append(" ".join(r.sq for r in dialogue.rounds))
            references.append(reference[key])
    if not candidates:
        return {}
    return bleu(candidates, references, max_n)


def sq_frequencies(records: Iterable[SqsRecord]) -> Counter[str]:
    return Counter(item.sq for record in records for item in record.sqs)


def bucket_of(length: int) -> str:
    return BUCKETS[min(length, 3)]


def majority_answer(records: Iterable[SqsRecord]) -> str:
    counts = Counter(normalize_answer(a) for r in records for a in r.answers)
    if not counts:
        raise DatasetError("no training answers to pick a majority class from")
    return min(counts, key=lambda a: (-counts[a], a))


class Score(BaseModel):
    count: int
    accuracy: float


class BucketScore(Score):
    sqs_frequency: float


class EvalReport(BaseModel):
    variant: str
    seed: int
    config_hash: str
    count: int
    accuracy: float
    majority_answer: str
    majority_baseline: float
    per_type: dict[str, Score]
    per_bucket: dict[str, BucketScore]
    bleu: dict[str, float] = {}
    oracle: OracleReport | None = None


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def build_report(
    predictions: Sequence[PredictionRecord],
    *,
    variant: str,
    seed: int,
    config_hash: str,
    majority: str,
    frequencies: Mapping[str, int] | None = None,
    bleu_scores: Mapping[int, float] | None = None,
    oracle: OracleReport | None = None,
) -> EvalReport:
    """Aggregate per-prediction scores; bucket counts always add up to ``count``."""

    frequencies = frequencies or {}
    by_type: dict[str, list[float]] = {}
    by_bucket: dict[str, list[float]] = {name: [] for name in BUCKETS}
    bucket_freq: dict[str, list[float]] = {name: [] for name in BUCKETS}
    for p in predictions:
        by_type.setdefault(p.question_type, []).append(p.score)
        bucket = bucket_of(len(p.sqs))
        by_bucket[bucket].append(p.score)
        bucket_freq[bucket].extend(float(frequencies.get(sq, 0)) for sq in p.sqs)
    return EvalReport(
        variant=variant,
        seed=seed,
        config_hash=config_hash,
        count=len(predictions),
        accuracy=_mean([p.score for p in predictions]),
        majority_answer=majority,
        majority_baseline=_mean([vqa_accuracy(majority, p.answers) for p in predictions if p.answers]),
        per_type={k: Score(count=len(v), accuracy=_mean(v)) for k, v in sorted(by_type.items())},
        per_bucket={
            name: BucketScore(count=len(by_bucket[name]), accuracy=_mean(by_bucket[name]),
                              sqs_frequency=_mean(bucket_freq[name]))
            for name in BUCKETS
        },
        bleu={f"bleu_{n}": round(score, 6) for n, score in sorted((bleu_scores or {}).items())},
        oracle=oracle,
    )
