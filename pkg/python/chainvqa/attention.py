"""Top-down question-guided attention and the product fusion built on it.

Region i scores w . relu(W [v_i || q]); the softmax over regions pools the
region matrix. Fusion projects the pooled region and the question to a shared
width and multiplies them elementwise. Extra glimpses and a soft region count
can be concatenated to the pooled vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DatasetError, ShapeError
from .nn import EVAL, Linear, Mode, ParamStore
from .tensor import Tensor


class TopDownAttention:
    def __init__(self, store: ParamStore, name: str, d_v: int, d_q: int, hidden: int):
        self.d_v, self.d_q = d_v, d_q
        self.project = Linear(store, f"{name}.project", d_v + d_q, hidden)
        self.score = Linear(store, f"{name}.score", hidden, 1)

    def logits(self, v: Tensor, q: Tensor) -> Tensor:
        if v.ndim != 2 or v.shape[0] == 0:
            raise DatasetError("attention needs a non-empty region matrix")
        if v.shape[1] != self.d_v or q.shape != (self.d_q,):
            raise ShapeError(
                f"attention expects regions (M, {self.d_v}) and query ({self.d_q},), "
                f"got {v.shape} and {q.shape}"
            )
        m = v.shape[0]
        joint = T.concat([v, T.broadcast_rows(q, m)], axis=1)
        return T.reshape(self.score(T.relu(self.project(joint))), (m,))

    def weights(self, v: Tensor, q: Tensor) -> Tensor:
        return T.softmax(self.logits(v, q))

    def pool(self, v: Tensor, q: Tensor) -> tuple[Tensor, Tensor]:
        """Attention-weighted region vector and the weights that produced it."""

        weights = self.weights(v, q)
        return T.vecmat(weights, v), weights


def soft_count(logits: Tensor, bins: int) -> Tensor:
    """Triangular encoding of sum_i sigmoid(l_i): bin k holds relu(1 - |count - k|)."""

    count = T.sum_(T.sigmoid(logits))
    offset = T.sub(count, np.arange(bins, dtype=np.float64))
    distance = T.add(T.relu(offset), T.relu(T.scale(offset, -1.0)))
    return T.relu(T.sub(1.0, distance))


@dataclass
class FusionOutput:
    joint: Tensor
    weights: Tensor

    @property
    def attention(self) -> np.ndarray:
        return self.weights.numpy()


class ProductFusion:
    """H = relu(W_v [v_hat_1 .. v_hat_G || c]) * relu(W_q q).

    Every glimpse is its own top-down attention over the regions. With
    ``count_bins`` set, ``c`` is the soft count of the first glimpse's logits;
    otherwise it is absent. ``weights`` in the output are the first glimpse's.
    """

    def __init__(self, store: ParamStore, name: str, d_v: int, d_q: int, hidden: int,
                 dropout: float = 0.0, *, glimpses: int = 1, count_bins: int = 0):
        if glimpses < 1 or count_bins < 0:
            raise ShapeError(f"need glimpses >= 1 and count_bins >= 0, got {glimpses}, {count_bins}")
        self.attention = TopDownAttention(store, f"{name}.att", d_v, d_q, hidden)
        self.extra = [TopDownAttention(store, f"{name}.att{g}", d_v, d_q, hidden)
                      for g in range(1, glimpses)]
        self.count_bins = count_bins
        self.v_net = Linear(store, f"{name}.v_net", d_v * glimpses + count_bins, hidden)
        self.q_net = Linear(store, f"{name}.q_net", d_q, hidden)
        self.hidden = hidden
        self.dropout = dropout

    def combine(self, pooled: Tensor, q: Tensor, mode: Mode = EVAL) -> Tensor:
        visual = T.dropout(T.relu(self.v_net(pooled)), self.dropout, mode.rng, mode.training)
        return T.mul(visual, T.relu(self.q_net(q)))

    def __call__(self, v: Tensor, q: Tensor, mode: Mode = EVAL) -> FusionOutput:
        logits = self.attention.logits(v, q)
        weights = T.softmax(logits)
        parts = [T.vecmat(weights, v)]
        parts.extend(glimpse.pool(v, q)[0] for glimpse in self.extra)
        if self.count_bins:
            parts.append(soft_count(logits, self.count_bins))
        pooled = parts[0] if len(parts) == 1 else T.concat(parts)
        return FusionOutput(self.combine(pooled, q, mode), weights)
