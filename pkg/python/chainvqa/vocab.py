"""Word and answer vocabularies."""

from __future__ import annotations

import re
from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from .errors import DatasetError, ShapeError
from .logger import get_logger

logger = get_logger(__name__)

PAD = "<pad>"
UNK = "<unk>"
BOS = "<bos>"
EOS = "<eos>"
STOP = "<stop>"
SPECIALS = (PAD, UNK, BOS, EOS, STOP)

# Sub-questions are always yes/no; index 0 is "yes".
SUB_ANSWERS = ("yes", "no")

_WORD = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; punctuation is dropped."""

    return _WORD.findall(text.lower())


def normalize_answer(answer: str) -> str:
    return " ".join(tokenize(answer))


def consensus_score(matches: int, annotations: int) -> float:
    """min(matches / 3, 1); a single annotation scores as exact match."""

    if annotations == 1:
        return float(matches >= 1)
    return min(matches / 3.0, 1.0)


class Vocab:
    """Token <-> id map with the five reserved tokens at ids 0..4."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._tokens: list[str] = list(SPECIALS)
        self._index = {tok: i for i, tok in enumerate(self._tokens)}
        for token in tokens:
            if token not in self._index:
                self._index[token] = len(self._tokens)
                self._tokens.append(token)

    @classmethod
    def build(cls, texts: Iterable[str], min_count: int = 1) -> "Vocab":
        counts = Counter(tok for text in texts for tok in tokenize(text))
        words = sorted(tok for tok, n in counts.items() if n >= min_count)
        if not words:
            raise DatasetError("cannot build a vocabulary from an empty corpus")
        vocab = cls(list(SUB_ANSWERS) + words)
        logger.info("Built vocabulary with %d tokens", len(vocab))
        return vocab

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @property
    def pad_id(self) -> int:
        return self._index[PAD]

    @property
    def unk_id(self) -> int:
        return self._index[UNK]

    @property
    def bos_id(self) -> int:
        return self._index[BOS]

    @property
    def eos_id(self) -> int:
        return self._index[EOS]

    @property
    def stop_id(self) -> int:
        return self._index[STOP]

    def id(self, token: str) -> int:
        return self._index.get(token, self.unk_id)

    def token(self, token_id: int) -> str:
        if not 0 <= token_id < len(self._tokens):
            raise ShapeError(f"token id {token_id} outside vocabulary of {len(self)}")
        return self._tokens[token_id]

    def encode(self, text: str | Sequence[str], max_len: int | None = None,
               *, pad: bool = False) -> list[int]:
        """Ids for ``text``; unknown words become ``<unk>``.

        With ``max_len`` the ids are truncated, and with ``pad`` also padded to it.
        """

        words = tokenize(text) if isinstance(text, str) else list(text)
        ids = [self.id(word) for word in words]
        if max_len is not None:
            if len(ids) > max_len:
                logger.debug("Truncating %d tokens to %d", len(ids), max_len)
                ids = ids[:max_len]
            if pad:
                ids = ids + [self.pad_id] * (max_len - len(ids))
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        words = []
        for token_id in ids:
            token = self.token(token_id)
            if token in (EOS, STOP):
                break
            if token in (PAD, BOS):
                continue
            words.append(token)
        return " ".join(words)

    def unknown_count(self, ids: Iterable[int]) -> int:
        return sum(1 for token_id in ids if token_id == self.unk_id)

    def to_list(self) -> list[str]:
        return list(self._tokens)

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> "Vocab":
        if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
            raise DatasetError("vocabulary does not start with the reserved tokens")
        return cls(tokens[len(SPECIALS):])


class AnswerVocab:
    """Ordered candidate answers; indices are stable across save/load."""

    def __init__(self, answers: Sequence[str]):
        if not answers:
            raise DatasetError("answer vocabulary is empty")
        self.answers = [normalize_answer(a) for a in answers]
        if len(set(self.answers)) != len(self.answers):
            raise DatasetError("answer vocabulary has duplicates")
        self._index = {a: i for i, a in enumerate(self.answers)}

    @classmethod
    def from_annotations(cls, annotations: Iterable[Sequence[str]]) -> "AnswerVocab":
        """Answers ordered by frequency, then alphabetically."""

        counts = Counter(normalize_answer(a) for answers in annotations for a in answers)
        ordered = sorted(counts, key=lambda a: (-counts[a], a))
        return cls(ordered)

    def __len__(self) -> int:
        return len(self.answers)

    def __contains__(self, answer: str) -> bool:
        return normalize_answer(answer) in self._index

    def index(self, answer: str) -> int | None:
        return self._index.get(normalize_answer(answer))

    def answer(self, index: int) -> str:
        return self.answers[index]

    def targets(self, gold: Sequence[str]) -> np.ndarray:
        """Soft targets: per-answer VQA accuracy min(matches / 3, 1)."""

        scores = np.zeros(len(self.answers))
        counts = Counter(normalize_answer(a) for a in gold)
        for answer, n in counts.items():
            idx = self._index.get(answer)
            if idx is not None:
                scores[idx] = consensus_score(n, len(gold))
        return scores

    def to_list(self) -> list[str]:
        return list(self.answers)
