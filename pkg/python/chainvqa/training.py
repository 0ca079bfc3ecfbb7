"""Mini-batch training loops for the oracle, the questioner and the answerer.

Every loop runs the same schedule: per-epoch learning rate from ``lr_at``,
gradients accumulated over a batch and averaged, one Adamax step per batch,
validation after each epoch and early stopping that restores the best weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar

import numpy as np

from .answerer import Answerer
from .config import RunConfig
from .errors import DatasetError, NumericError
from .logger import get_logger
from .metrics import vqa_accuracy
from .nn import Mode, ParamStore
from .optim import EarlyStopping, OptimizerState, adamax_step, lr_at
from .oracle import LearnedOracle
from .questioner import Questioner
from .records import SqsRecord
from .scene import RegionSet, Scene
from .tensor import Tape, Tensor, backward
from .vocab import AnswerVocab, Vocab

logger = get_logger(__name__)

E = TypeVar("E")


@dataclass(frozen=True)
class Sample:
    """One question with its SQS, region features and (optional) scene truth."""

    record: SqsRecord
    regions: RegionSet
    scene: Scene | None = None

    @property
    def sub_questions(self) -> list[tuple[str, str]]:
        return [(item.sq, item.answer) for item in self.record.sqs]


@dataclass(frozen=True)
class SubExample:
    sq: str
    answer: str
    sq_type: str
    regions: RegionSet


@dataclass
class EpochLog:
    epoch: int
    lr: float
    loss: float
    metric: float | None


@dataclass
class TrainingHistory:
    epochs: list[EpochLog] = field(default_factory=list)
    best_epoch: int | None = None
    best_metric: float | None = None


def split_validation(items: Sequence[E], fraction: float, rng: np.random.Generator
                     ) -> tuple[list[E], list[E]]:
    order = rng.permutation(len(items))
    n_val = int(len(items) * fraction)
    val = [items[i] for i in sorted(order[:n_val])]
    train = [items[i] for i in sorted(order[n_val:])]
    return train, val


def _run_epoch(train: Sequence[E], params: dict[str, Tensor], state: OptimizerState,
               loss_fn: Callable[[E, Mode], Tensor], lr: float, batch_size: int,
               mode: Mode, rng: np.random.Generator,
               lr_overrides: dict[str, float] | None) -> float:
    order = rng.permutation(len(train))
    total = 0.0
    for start in range(0, len(order), batch_size):
        batch = [train[i] for i in order[start:start + batch_size]]
        grads = {key: np.zeros_like(p.data) for key, p in params.items()}
        for example in batch:
            with Tape() as tape:
                loss = loss_fn(example, mode)
            found = backward(tape, loss)
            total += loss.item()
            for key, param in params.items():
                g = found.get(param)
                if g is not None:
                    grads[key] += g
        for key in grads:
            grads[key] /= len(batch)
        adamax_step(state, params, grads, lr, lr_overrides=lr_overrides)
    return total


def fit(
    name: str,
    store: ParamStore,
    examples: Sequence[E],
    loss_fn: Callable[[E, Mode], Tensor],
    metric_fn: Callable[[Sequence[E]], float],
    config: RunConfig,
    *,
    lr_overrides: dict[str, float] | None = None,
    epochs: int | None = None,
) -> TrainingHistory:
    """Train the parameters in ``store`` on ``examples``; higher metric is better.

    ``epochs`` overrides ``train.epochs`` for this model. Stale epochs during
    the learning-rate warm-up do not count towards the patience.
    """

    if not examples:
        raise DatasetError(f"no training examples for the {name}")
    train_cfg = config.train
    epochs = train_cfg.epochs if epochs is None else epochs
    rng = np.random.default_rng(train_cfg.seed)
    train, val = split_validation(list(examples), train_cfg.val_fraction, rng)
    if not train:
        train, val = list(examples), []
    params = dict(store.items())
    state = OptimizerState.for_params(params, config.numeric)
    stopper = EarlyStopping(train_cfg.patience, grace=config.schedule.warmup_epochs)
    history = TrainingHistory()
    best_state = None
    mode = Mode(training=True, rng=rng)

    for epoch in range(epochs):
        lr = lr_at(config.schedule, epoch)
        try:
            total = _run_epoch(train, params, state, loss_fn, lr, train_cfg.batch_size, mode, rng,
                               lr_overrides)
            metric = metric_fn(val) if val else None
        except NumericError as exc:
            raise NumericError(f"{name} training failed in epoch {epoch}: {exc}") from exc
        history.epochs.append(EpochLog(epoch, lr, total / len(train), metric))
        logger.info("%s epoch %d lr=%.2e loss=%.4f val=%s", name, epoch, lr, total / len(train),
                    "n/a" if metric is None else f"{metric:.4f}")
        if metric is None:
            continue
        if stopper.update(epoch, metric):
            best_state = store.state_dict()
        if stopper.should_stop:
            logger.info("%s early stop after epoch %d (best %d)", name, epoch, stopper.best_epoch)
            break

    if best_state is not None:
        store.load_state_dict(best_state)
        history.best_epoch, history.best_metric = stopper.best_epoch, stopper.best
    return history


# ---------------------------------------------------------------------------
# Model-specific loops
# ---------------------------------------------------------------------------


def sub_examples(samples: Sequence[Sample]) -> list[SubExample]:
    return [
        SubExample(item.sq, item.answer, item.sq_type.value, s.regions)
        for s in samples
        for item in s.record.sqs
    ]


def oracle_accuracy(oracle: LearnedOracle, examples: Sequence[SubExample]) -> float:
    if not examples:
        return 0.0
    hits = sum(1 for ex in examples if oracle.learned_answer(ex.sq, ex.regions).answer == ex.answer)
    return hits / len(examples)


def train_oracle(samples: Sequence[Sample], config: RunConfig, vocab: Vocab,
                 feature_width: int) -> tuple[LearnedOracle, TrainingHistory]:
    oracle = LearnedOracle(vocab, config.oracle, feature_width, seed=config.numeric.init_seed)
    examples = sub_examples(samples)
    history = fit(
        "oracle", oracle.store, examples,
        lambda ex, mode: oracle.loss(ex.sq, ex.regions, ex.answer, mode),
        lambda val: oracle_accuracy(oracle, val),
        config,
        epochs=config.oracle.epochs,
    )
    return oracle, history


def train_questioner(samples: Sequence[Sample], config: RunConfig, vocab: Vocab,
                     feature_width: int) -> tuple[Questioner, TrainingHistory]:
    questioner = Questioner(vocab, config.questioner, feature_width, seed=config.numeric.init_seed)

    def metric(val: Sequence[Sample]) -> float:
        # negated mean NLL so that higher is better
        losses = [questioner.nll_loss(s.record.question, s.sub_questions, s.regions).item()
                  for s in val]
        return -float(np.mean(losses))

    history = fit(
        "questioner", questioner.store, list(samples),
        lambda s, mode: questioner.nll_loss(s.record.question, s.sub_questions, s.regions, mode),
        metric,
        config,
    )
    if questioner.unknown_tokens:
        logger.warning("questioner saw %d unknown gold tokens", questioner.unknown_tokens)
    return questioner, history


def answerer_accuracy(answerer: Answerer, samples: Sequence[Sample]) -> float:
    if not samples:
        return 0.0
    scores = [
        vqa_accuracy(answerer.predict(s.record.question, s.sub_questions, s.regions).answer,
                     s.record.answers)
        for s in samples
    ]
    return float(np.mean(scores))


def train_answerer(samples: Sequence[Sample], config: RunConfig, vocab: Vocab,
                   answers: AnswerVocab, feature_width: int,
                   use_sub_loss: bool | None = None) -> tuple[Answerer, TrainingHistory]:
    answerer = Answerer.from_config(vocab, answers, config, feature_width)
    history = fit(
        "answerer", answerer.store, list(samples),
        lambda s, mode: answerer.loss(s.record.question, s.sub_questions, s.regions,
                                      s.record.answers, mode, use_sub_loss),
        lambda val: answerer_accuracy(answerer, val),
        config,
        lr_overrides=answerer.lr_overrides,
    )
    return answerer, history
