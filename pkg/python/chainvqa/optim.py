"""Adamax optimizer, warm-up/step-decay schedule and early stopping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .config import LrSchedule, NumericConfig
from .errors import OptimizerError, ScheduleError
from .tensor import Tensor

__all__ = ["EarlyStopping", "LrSchedule", "OptimizerState", "adamax_step", "lr_at"]


@dataclass
class OptimizerState:
    """Per-parameter first moment ``m`` and infinity-norm accumulator ``u``."""

    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    u: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(
        cls, params: Mapping[str, Tensor], numeric: NumericConfig | None = None
    ) -> "OptimizerState":
        numeric = numeric or NumericConfig()
        state = cls(beta1=numeric.beta1, beta2=numeric.beta2, epsilon=numeric.epsilon)
        for name, param in params.items():
            state.m[name] = np.zeros_like(param.data)
            state.u[name] = np.zeros_like(param.data)
        return state


def adamax_step(
    state: OptimizerState,
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    lr: float,
    *,
    lr_overrides: Mapping[str, float] | None = None,
) -> Mapping[str, Tensor]:
    """Apply one Adamax update in place and return ``params``.

    m = b1*m + (1-b1)*g ; u = max(b2*u, |g|) ; p -= lr/(1-b1^t) * m/(u+eps).
    ``lr_overrides`` maps a parameter-name prefix to a fixed learning rate.
    Parameters without a gradient entry are treated as having a zero gradient.
    """

    missing = [name for name in params if name not in state.m]
    if missing:
        raise OptimizerError(f"optimizer state missing for parameters {missing[:5]}")
    state.step += 1
    correction = 1.0 - state.beta1 ** state.step
    overrides = lr_overrides or {}
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        m = state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * grad
        u = state.u[name] = np.maximum(state.beta2 * state.u[name], np.abs(grad))
        if state.epsilon == 0 and np.any(u == 0):
            raise OptimizerError(f"zero infinity-norm with zero epsilon for {name!r}")
        step_lr = lr
        for prefix, fixed in overrides.items():
            if name.startswith(prefix):
                step_lr = fixed
                break
        param.data -= step_lr / correction * m / (u + state.epsilon)
    return params


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    """Learning rate for ``epoch`` (0-based).

    Linear warm-up from base_lr to peak_lr over warmup_epochs, flat until
    decay_start, then multiplied by decay_factor at decay_start and every
    decay_every epochs after it.
    """

    if not 0 <= epoch <= schedule.max_epoch:
        raise ScheduleError(f"epoch {epoch} outside [0, {schedule.max_epoch}]")
    if epoch < schedule.warmup_epochs:
        frac = epoch / schedule.warmup_epochs
        return schedule.base_lr + (schedule.peak_lr - schedule.base_lr) * frac
    if epoch < schedule.decay_start:
        return schedule.peak_lr
    decays = 1 + (epoch - schedule.decay_start) // schedule.decay_every
    return schedule.peak_lr * schedule.decay_factor ** decays


class EarlyStopping:
    """Stop when the monitored metric fails to improve for ``patience`` epochs.

    Epochs before ``grace`` never count as stale, so a plateau during the
    learning-rate warm-up cannot end training.
    """

    def __init__(self, patience: int = 3, grace: int = 0):
        self.patience = patience
        self.grace = grace
        self.best: float | None = None
        self.best_epoch: int | None = None
        self._stale = 0

    def update(self, epoch: int, metric: float) -> bool:
        """Record ``metric``; returns True when it is a new best."""

        if self.best is None or metric > self.best:
            self.best, self.best_epoch, self._stale = metric, epoch, 0
            return True
        if epoch >= self.grace:
            self._stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self._stale >= self.patience
