"""Graph visual reasoning: question-conditioned multi-head graph attention over
image regions with geometric edge priors and top-K sparse neighborhoods."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .config import GvrConfig
from .errors import GeometryError, NumericError, ShapeError
from .nn import ParamStore
from .tensor import Tensor

__all__ = [
    "BoundingBox",
    "GvrConfig",
    "GvrOutput",
    "GvrParams",
    "box_weight",
    "edge_logits",
    "geometry_embeddings",
    "gvr_attend",
    "gvr_forward",
    "relative_geometry",
    "sin_embed",
    "topk_neighborhood",
]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: top-left corner plus strictly positive extents."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise GeometryError(f"box extents must be positive, got w={self.w}, h={self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def intersection(self, other: "BoundingBox") -> float:
        dx = min(self.x + self.w, other.x + other.w) - max(self.x, other.x)
        dy = min(self.y + self.h, other.y + other.h) - max(self.y, other.y)
        return max(dx, 0.0) * max(dy, 0.0)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "BoundingBox":
        if len(values) != 4:
            raise GeometryError(f"a box needs 4 values, got {len(values)}")
        return cls(*(float(v) for v in values))


@dataclass
class GvrParams:
    """Fusion matrix W plus per-head query/key/value maps and geometry weights."""

    w: Tensor
    w_q: list[Tensor]
    w_k: list[Tensor]
    w_v: list[Tensor]
    w_b: list[Tensor]

    @classmethod
    def create(cls, store: ParamStore, name: str, config: GvrConfig) -> "GvrParams":
        d_q, d_v, d_h = config.d_q, config.d_v, config.d_h
        heads = range(config.heads)
        params = cls(
            w=store.uniform(f"{name}.w", (d_q, d_q + d_v), d_q + d_v),
            w_q=[store.uniform(f"{name}.w_q.{h}", (d_h, d_q), d_q) for h in heads],
            w_k=[store.uniform(f"{name}.w_k.{h}", (d_h, d_q), d_q) for h in heads],
            w_v=[store.uniform(f"{name}.w_v.{h}", (d_h, d_q), d_q) for h in heads],
            w_b=[store.uniform(f"{name}.w_b.{h}", (d_h,), d_h) for h in heads],
        )
        # geometry weights start positive so no edge is clipped at init
        for w_b in params.w_b:
            np.abs(w_b.data, out=w_b.data)
        return params

    def check(self, config: GvrConfig) -> None:
        expected = {
            "w": (config.d_q, config.d_q + config.d_v),
            "w_q": (config.d_h, config.d_q),
            "w_k": (config.d_h, config.d_q),
            "w_v": (config.d_h, config.d_q),
            "w_b": (config.d_h,),
        }
        if self.w.shape != expected["w"]:
            raise ShapeError(f"W has shape {self.w.shape}, expected {expected['w']}")
        for key in ("w_q", "w_k", "w_v", "w_b"):
            group = getattr(self, key)
            if len(group) != config.heads:
                raise ShapeError(f"{key} has {len(group)} heads, expected {config.heads}")
            for tensor in group:
                if tensor.shape != expected[key]:
                    raise ShapeError(f"{key} has shape {tensor.shape}, expected {expected[key]}")


def relative_geometry(b_i: BoundingBox, b_j: BoundingBox, eps: float = 1e-3) -> np.ndarray:
    """(log(|dx|/w_i), log(|dy|/h_i), log(w_j/w_i), log(h_j/h_i)); |dx|, |dy| clamp at eps."""

    dx = max(abs(b_i.x - b_j.x), eps)
    dy = max(abs(b_i.y - b_j.y), eps)
    return np.array(
        [
            math.log(dx / b_i.w),
            math.log(dy / b_i.h),
            math.log(b_j.w / b_i.w),
            math.log(b_j.h / b_i.h),
        ]
    )


def _phases(g: np.ndarray, d_h: int, base: float) -> np.ndarray:
    if d_h % 8:
        raise GeometryError(f"embedding width {d_h} must be divisible by 8")
    n = d_h // 8
    wavelengths = base ** (np.arange(1, n + 1) / n)
    return g[..., :, None] / wavelengths  # (..., 4, n)


def sin_embed(g: Sequence[float], d_h: int, base: float = 1000.0) -> np.ndarray:
    """Sine/cosine embedding of a 4-vector at d_h/8 geometric wavelengths.

    Layout per component c and wavelength k: [..., sin, cos, ...] at
    index c*(d_h/4) + 2k; wavelengths run base^(1/n) .. base with n = d_h/8.
    """

    g = np.asarray(g, dtype=np.float64)
    if g.shape != (4,):
        raise GeometryError(f"geometry vector must have 4 components, got {g.shape}")
    return geometry_embeddings(g[None, :], d_h, base)[0]


def geometry_embeddings(g: np.ndarray, d_h: int, base: float = 1000.0) -> np.ndarray:
    """Vectorized ``sin_embed`` over any leading shape (..., 4) -> (..., d_h)."""

    theta = _phases(np.asarray(g, dtype=np.float64), d_h, base)
    pairs = np.stack([np.sin(theta), np.cos(theta)], axis=-1)  # (..., 4, n, 2)
    return pairs.reshape(*theta.shape[:-2], d_h)


def box_weight(w: np.ndarray | Tensor, emb: np.ndarray) -> float:
    """max(0, w . emb)."""

    w_arr = w.data if isinstance(w, Tensor) else np.asarray(w, dtype=np.float64)
    emb = np.asarray(emb, dtype=np.float64)
    if w_arr.shape != emb.shape:
        raise ShapeError(f"box weight {w_arr.shape} does not match embedding {emb.shape}")
    return max(0.0, float(w_arr @ emb))


def _pairwise_embeddings(boxes: Sequence[BoundingBox], config: GvrConfig) -> np.ndarray:
    m = len(boxes)
    geometry = np.empty((m, m, 4))
    for i, b_i in enumerate(boxes):
        for j, b_j in enumerate(boxes):
            geometry[i, j] = relative_geometry(b_i, b_j, config.geometry_eps)
    return geometry_embeddings(geometry, config.d_h, config.wave_base)


def _check_inputs(nodes: Tensor, boxes: Sequence[BoundingBox]) -> None:
    if nodes.ndim != 2 or nodes.shape[0] < 1:
        raise ShapeError(f"expected an M x d matrix of nodes, got {nodes.shape}")
    if len(boxes) != nodes.shape[0]:
        raise ShapeError(f"{len(boxes)} boxes for {nodes.shape[0]} nodes")


def _head_logits(nodes: Tensor, emb: Tensor, params: GvrParams, h: int, config: GvrConfig) -> Tensor:
    m = nodes.shape[0]
    queries = T.matmul(nodes, T.transpose(params.w_q[h]))
    keys = T.matmul(nodes, T.transpose(params.w_k[h]))
    visual = T.scale(T.matmul(queries, T.transpose(keys)), 1.0 / math.sqrt(config.d_h))
    geometric = T.relu(T.reshape(T.matmul(emb, T.reshape(params.w_b[h], (config.d_h, 1))), (m, m)))
    return T.add(visual, T.masked_log(geometric))


def edge_logits(
    nodes: Tensor, boxes: Sequence[BoundingBox], params: GvrParams, config: GvrConfig
) -> list[Tensor]:
    """Per-head M x M logits e_ij = visual_ij + log(max(0, w . emb(b_i, b_j))).

    A clipped geometry weight gives log(0) = -inf, a fully masked edge.
    """

    _check_inputs(nodes, boxes)
    if np.isnan(nodes.data).any():
        raise NumericError("node features contain NaN")
    m = nodes.shape[0]
    emb = Tensor(_pairwise_embeddings(boxes, config).reshape(m * m, config.d_h))
    return [_head_logits(nodes, emb, params, h, config) for h in range(config.heads)]


def topk_neighborhood(logits_row: Sequence[float], k: int) -> list[int]:
    """Indices of the min(k, M) largest entries, ties to the lower index, ascending."""

    row = np.asarray(logits_row, dtype=np.float64)
    order = sorted(range(row.shape[0]), key=lambda j: (-row[j], j))
    return sorted(order[: min(k, row.shape[0])])


@dataclass
class GvrOutput:
    features: Tensor
    attention: list[np.ndarray]

    def in_degree(self) -> np.ndarray:
        """Attention each node receives, summed over sources and averaged over heads."""

        return np.mean([att.sum(axis=0) for att in self.attention], axis=0)


def _joint_embedding(v: Tensor, q: Tensor, params: GvrParams) -> Tensor:
    m = v.shape[0]
    return T.matmul(T.concat([v, T.broadcast_rows(q, m)], axis=1), T.transpose(params.w))


def gvr_attend(
    v: Tensor,
    q: Tensor,
    boxes: Sequence[BoundingBox],
    params: GvrParams,
    config: GvrConfig,
) -> GvrOutput:
    """``gvr_forward`` plus the per-head attention matrices."""

    _check_inputs(v, boxes)
    if v.shape[1] != config.d_v or q.shape != (config.d_q,):
        raise ShapeError(
            f"expected V (M, {config.d_v}) and q ({config.d_q},), got {v.shape} and {q.shape}"
        )
    params.check(config)
    nodes = _joint_embedding(v, q, params)
    m = nodes.shape[0]
    emb = Tensor(_pairwise_embeddings(boxes, config).reshape(m * m, config.d_h))
    outputs, attention = [], []
    for h in range(config.heads):
        logits = _head_logits(nodes, emb, params, h, config)
        keep = np.zeros((m, m), dtype=bool)
        for i in range(m):
            keep[i, topk_neighborhood(logits.data[i], config.k)] = True
        weights = T.softmax(logits, mask=keep)
        values = T.matmul(nodes, T.transpose(params.w_v[h]))
        outputs.append(T.relu(T.matmul(weights, values)))
        attention.append(weights.numpy())
    return GvrOutput(T.concat(outputs, axis=1), attention)


def gvr_forward(
    v: Tensor,
    q: Tensor,
    boxes: Sequence[BoundingBox],
    params: GvrParams,
    config: GvrConfig,
) -> Tensor:
    """V^R = GVR(V, q): joint embedding, sparse masked multi-head attention, ReLU, concat."""

    return gvr_attend(v, q, boxes, params, config).features
