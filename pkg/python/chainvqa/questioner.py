"""Hierarchical encoder-decoder that asks the next sub-question.

The session GRU starts from the whole-question encoding and then reads one
[sub-question encoding || answer embedding] pair per finished round. The
decoder is initialized from the session state and, at every step, attends
over the image regions with [session state || decoder hidden] as the query,
so the glimpse is guided by the question and the rounds asked so far.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .attention import TopDownAttention
from .checkpoint import load_checkpoint, save_checkpoint
from .config import QuestionerConfig
from .errors import CheckpointError, DatasetError, OracleError
from .logger import get_logger
from .nn import EVAL, GRU, Embedding, Linear, Mode, ParamStore
from .oracle import Oracle, OracleAnswer
from .records import DialogueRecord, DialogueRound
from .scene import RegionSet, Scene
from .tensor import Tensor
from .vocab import Vocab

logger = get_logger(__name__)

STOP_TOKEN = "stop-token"
STOP_EMPTY = "empty"
STOP_MAX_ROUNDS = "max-rounds"
STOP_ORACLE_ERROR = "oracle-error"

TokenIds = Sequence[int]


@dataclass
class HistoryEncoding:
    session: Tensor
    pair_features: list[Tensor] = field(default_factory=list)


@dataclass
class DecoderState:
    hidden: Tensor
    guide: Tensor
    step: int = 0
    emitted: list[int] = field(default_factory=list)


@dataclass
class Dialogue:
    rounds: list[tuple[str, OracleAnswer]] = field(default_factory=list)
    stop_reason: str = STOP_MAX_ROUNDS
    error: str | None = None

    @property
    def sqs(self) -> list[tuple[str, str]]:
        return [(sq, answer.answer) for sq, answer in self.rounds]

    def to_record(self, image_id: str, question: str) -> DialogueRecord:
        return DialogueRecord(
            image_id=image_id,
            question=question,
            rounds=[DialogueRound(sq=sq, answer=a.answer, confidence=a.confidence)
                    for sq, a in self.rounds],
            stop_reason=self.stop_reason,
        )


class Questioner:
    MODEL = "questioner"

    def __init__(self, vocab: Vocab, config: QuestionerConfig, feature_width: int, seed: int = 0):
        self.vocab = vocab
        self.config = config
        self.feature_width = feature_width
        self.unknown_tokens = 0
        e, hidden, session = config.embed_dim, config.hidden, config.session_dim
        self.store = ParamStore(seed)
        self.embed = Embedding(self.store, "questioner.embed", len(vocab), e)
        self.gru_q = GRU(self.store, "questioner.gru_q", e, hidden)
        self.gru_Q = GRU(self.store, "questioner.gru_Q", e, session)
        self.gru_s = GRU(self.store, "questioner.gru_s", session, session)
        self.init = Linear(self.store, "questioner.init", session, hidden)
        self.attention = TopDownAttention(self.store, "questioner.att", feature_width,
                                          session + hidden, config.att_hidden)
        self.decoder = GRU(self.store, "questioner.decoder", feature_width + e, hidden)
        self.output = Linear(self.store, "questioner.out", hidden, len(vocab))

    # -- encoding ----------------------------------------------------------

    def ids(self, text: str | TokenIds) -> list[int]:
        ids = self.vocab.encode(text, self.config.max_len) if isinstance(text, str) else list(text)
        unknown = self.vocab.unknown_count(ids)
        if unknown:
            self.unknown_tokens += unknown
            logger.debug("%d unknown tokens mapped to <unk>", unknown)
        return [i for i in ids if i != self.vocab.pad_id]

    def _utterance(self, gru: GRU, ids: TokenIds, mode: Mode) -> Tensor:
        if not ids:
            raise DatasetError("cannot encode an empty utterance")
        x = T.dropout(self.embed(ids), self.config.dropout, mode.rng, mode.training)
        return gru.run(x)

    def answer_id(self, answer: str | int) -> int:
        return answer if isinstance(answer, int) else self.vocab.id(answer)

    def encode_hierarchy(self, question: str | TokenIds,
                         history: Sequence[tuple[str | TokenIds, str | int]] = (),
                         mode: Mode = EVAL) -> HistoryEncoding:
        """Session state after the question and every (sub-question, answer) round."""

        q_ids = self.ids(question)
        if not q_ids:
            raise DatasetError("cannot encode an empty question")
        s = self.gru_s.step(self._utterance(self.gru_Q, q_ids, mode), self.gru_s.zero_state())
        pairs = []
        for sq, answer in history:
            pair = T.concat([self._utterance(self.gru_q, self.ids(sq), mode),
                             self.embed.one(self.answer_id(answer))])
            pairs.append(pair)
            s = self.gru_s.step(pair, s)
        return HistoryEncoding(s, pairs)

    # -- decoding ----------------------------------------------------------

    def init_state(self, encoding: HistoryEncoding) -> DecoderState:
        return DecoderState(T.tanh(self.init(encoding.session)), encoding.session)

    def glimpse(self, state: DecoderState, regions: Tensor, weights: Tensor | None = None
                ) -> Tensor:
        """Question-guided region summary; ``weights`` replaces the learned attention."""

        if regions.ndim != 2 or regions.shape[0] == 0:
            raise DatasetError("decoder attention needs a non-empty region matrix")
        if weights is None:
            pooled, _ = self.attention.pool(regions, T.concat([state.guide, state.hidden]))
            return pooled
        return T.vecmat(weights, regions)

    def step_logits(self, state: DecoderState, prev: int, regions: Tensor,
                    mode: Mode = EVAL, weights: Tensor | None = None) -> tuple[Tensor, DecoderState]:
        v_t = self.glimpse(state, regions, weights)
        hidden = self.decoder.step(T.concat([v_t, self.embed.one(prev)]), state.hidden)
        out = T.dropout(hidden, self.config.dropout, mode.rng, mode.training)
        emitted = state.emitted if prev == self.vocab.bos_id else [*state.emitted, prev]
        return self.output(out), DecoderState(hidden, state.guide, state.step + 1, emitted)

    def decode_step(self, state: DecoderState, prev: int, regions: RegionSet | Tensor,
                    weights: Tensor | None = None) -> tuple[np.ndarray, DecoderState]:
        """Next-token distribution and the advanced decoder state."""

        matrix = regions.tensor() if isinstance(regions, RegionSet) else regions
        logits, new_state = self.step_logits(state, prev, matrix, EVAL, weights)
        return T.softmax(logits).numpy(), new_state

    # -- training ----------------------------------------------------------

    def round_targets(self, sq: str | TokenIds | None) -> list[int]:
        """Gold tokens for one round: the SQ plus <eos>, or just <stop> after the last one."""

        if sq is None:
            return [self.vocab.stop_id]
        ids = self.ids(sq)[: self.config.max_len - 1]
        return [*ids, self.vocab.eos_id]

    def nll_loss(self, question: str | TokenIds,
                 sqs: Sequence[tuple[str | TokenIds, str | int]],
                 regions: RegionSet, mode: Mode = EVAL) -> Tensor:
        """Teacher-forced -sum log P over every gold token, including the final stop round."""

        matrix = regions.tensor()
        total: Tensor | None = None
        rounds = min(len(sqs), self.config.max_rounds)
        for t in range(rounds + 1):
            encoding = self.encode_hierarchy(question, sqs[:t], mode)
            state = self.init_state(encoding)
            prev = self.vocab.bos_id
            for target in self.round_targets(sqs[t][0] if t < rounds else None):
                logits, state = self.step_logits(state, prev, matrix, mode)
                term = T.cross_entropy(logits, target)
                total = term if total is None else T.add(total, term)
                prev = target
        return total

    # -- generation --------------------------------------------------------

    def _greedy(self, encoding: HistoryEncoding, matrix: Tensor) -> list[int]:
        state, prev, out = self.init_state(encoding), self.vocab.bos_id, []
        for _ in range(self.config.max_len):
            logits, state = self.step_logits(state, prev, matrix)
            prev = int(np.argmax(logits.data))
            out.append(prev)
            if prev in (self.vocab.eos_id, self.vocab.stop_id):
                break
        return out

    def _beam(self, encoding: HistoryEncoding, matrix: Tensor, width: int) -> list[int]:
        ends = (self.vocab.eos_id, self.vocab.stop_id)
        beams = [(0.0, [], self.init_state(encoding))]
        finished: list[tuple[float, list[int]]] = []
        for _ in range(self.config.max_len):
            grown = []
            for score, tokens, state in beams:
                prev = tokens[-1] if tokens else self.vocab.bos_id
                logits, next_state = self.step_logits(state, prev, matrix)
                x = logits.data
                log_probs = x - (x.max() + math.log(np.exp(x - x.max()).sum()))
                for token in np.argsort(-log_probs, kind="stable")[:width]:
                    grown.append((score + float(log_probs[token]), [*tokens, int(token)], next_state))
            grown.sort(key=lambda b: -b[0])
            beams = []
            for score, tokens, state in grown[:width]:
                if tokens[-1] in ends:
                    finished.append((score, tokens))
                else:
                    beams.append((score, tokens, state))
            if not beams:
                break
        finished.extend((score, tokens) for score, tokens, _ in beams)
        return max(finished, key=lambda b: b[0])[1]

    def decode_round(self, encoding: HistoryEncoding, regions: RegionSet) -> list[int]:
        matrix = regions.tensor()
        if self.config.beam_width > 1:
            return self._beam(encoding, matrix, self.config.beam_width)
        return self._greedy(encoding, matrix)

    def generate_sqs(self, question: str | TokenIds, regions: RegionSet, oracle: Oracle,
                     scene: Scene | None = None, max_rounds: int | None = None) -> Dialogue:
        """Ask, get answered, re-encode; until <stop>, an empty SQ or the round cap."""

        cap = min(max_rounds if max_rounds is not None else self.config.max_rounds,
                  self.config.max_rounds)
        dialogue = Dialogue()
        history: list[tuple[list[int], int]] = []
        for _ in range(cap):
            ids = self.decode_round(self.encode_hierarchy(question, history), regions)
            if ids and ids[0] == self.vocab.stop_id:
                dialogue.stop_reason = STOP_TOKEN
                return dialogue
            text = self.vocab.decode(ids)
            if not text:
                dialogue.stop_reason = STOP_EMPTY
                return dialogue
            try:
                answer = oracle.answer(text, scene, regions)
            except OracleError as exc:
                answer = OracleAnswer("<error>", 0.0, str(exc))
            if not answer.ok:
                logger.warning("Oracle failed on %r: %s", text, answer.error)
                dialogue.stop_reason, dialogue.error = STOP_ORACLE_ERROR, answer.error
                return dialogue
            dialogue.rounds.append((text, answer))
            history.append(([i for i in ids if i not in (self.vocab.eos_id, self.vocab.stop_id)],
                            self.answer_id(answer.answer)))
        dialogue.stop_reason = STOP_MAX_ROUNDS
        return dialogue

    # -- persistence -------------------------------------------------------

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
    def load(cls, path: str | Path) -> "Questioner":
        state, header = load_checkpoint(path, model=cls.MODEL)
        meta = header.metadata
        try:
            model = cls(Vocab.from_list(meta["vocab"]), QuestionerConfig(**meta["config"]),
                        int(meta["feature_width"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"questioner checkpoint {path} has bad metadata: {exc}") from exc
        model.store.load_state_dict(state)
        return model
