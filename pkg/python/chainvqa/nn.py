"""Parameter store and the small set of layers the three models are built from."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import tensor as T
from .errors import CheckpointError, DatasetError, ShapeError
from .tensor import Tensor


@dataclass
class Mode:
    """Forward-pass mode: dropout is active only when ``training`` is set."""

    training: bool = False
    rng: np.random.Generator | None = None


EVAL = Mode()


class ParamStore:
    """Ordered, named parameter tensors with seeded initialization.

    Init is uniform in +-1/sqrt(fan_in). Names are dotted paths such as
    ``gvr.w_q.0``; insertion order is the checkpoint order.
    """

    def __init__(self, seed: int = 0):
        self._params: dict[str, Tensor] = {}
        self.rng = np.random.default_rng(seed)

    def _add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} registered twice")
        param = Tensor(data, requires_grad=True, name=name)
        self._params[name] = param
        return param

    def uniform(self, name: str, shape: Sequence[int], fan_in: int) -> Tensor:
        bound = 1.0 / math.sqrt(fan_in)
        return self._add(name, self.rng.uniform(-bound, bound, size=tuple(shape)))

    def zeros(self, name: str, shape: Sequence[int]) -> Tensor:
        return self._add(name, np.zeros(tuple(shape)))

    def ones(self, name: str, shape: Sequence[int]) -> Tensor:
        return self._add(name, np.ones(tuple(shape)))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def count(self) -> int:
        return sum(p.size for p in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        missing = [name for name in self._params if name not in state]
        extra = [name for name in state if name not in self._params]
        if missing or extra:
            raise CheckpointError(
                f"checkpoint does not match model (missing={missing[:5]}, unexpected={extra[:5]})"
            )
        for name, param in self._params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise CheckpointError(
                    f"parameter {name!r} has shape {value.shape}, model expects {param.shape}"
                )
            param.data[...] = value


class Linear:
    """Affine map with optional weight normalization (direction/magnitude)."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        d_in: int,
        d_out: int,
        *,
        bias: bool = True,
        weight_norm: bool = True,
    ):
        self.d_in, self.d_out = d_in, d_out
        self.weight_norm = weight_norm
        if weight_norm:
            self.v = store.uniform(f"{name}.v", (d_out, d_in), d_in)
            norms = np.sqrt((self.v.data ** 2).sum(axis=1))
            self.g = store._add(f"{name}.g", norms)
        else:
            self.w = store.uniform(f"{name}.w", (d_in, d_out), d_in)
        self.b = store.zeros(f"{name}.b", (d_out,)) if bias else None

    def weight(self) -> Tensor:
        """The effective (d_in, d_out) matrix."""

        if self.weight_norm:
            return T.transpose(T.weight_norm(self.v, self.g))
        return self.w

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"linear expects width {self.d_in}, got {x.shape}")
        w = self.weight()
        out = T.vecmat(x, w) if x.ndim == 1 else T.matmul(x, w)
        if self.b is not None:
            out = T.add(out, self.b)
        return out


class Embedding:
    def __init__(self, store: ParamStore, name: str, vocab_size: int, dim: int):
        self.table = store.uniform(f"{name}.table", (vocab_size, dim), dim)
        self.dim = dim

    def __call__(self, ids: Sequence[int]) -> Tensor:
        return T.take_rows(self.table, list(ids))

    def one(self, token_id: int) -> Tensor:
        return T.reshape(T.take_rows(self.table, [token_id]), (self.dim,))


@dataclass
class GruParams:
    """Weights of one GRU cell; input maps are (d_in, d_h), recurrent maps (d_h, d_h)."""

    w_z: Tensor
    w_r: Tensor
    w_n: Tensor
    u_z: Tensor
    u_r: Tensor
    u_n: Tensor
    b_z: Tensor
    b_r: Tensor
    b_n: Tensor

    @property
    def d_in(self) -> int:
        return self.w_z.shape[0]

    @property
    def d_h(self) -> int:
        return self.w_z.shape[1]

    @classmethod
    def create(cls, store: ParamStore, name: str, d_in: int, d_h: int) -> "GruParams":
        return cls(
            w_z=store.uniform(f"{name}.w_z", (d_in, d_h), d_h),
            w_r=store.uniform(f"{name}.w_r", (d_in, d_h), d_h),
            w_n=store.uniform(f"{name}.w_n", (d_in, d_h), d_h),
            u_z=store.uniform(f"{name}.u_z", (d_h, d_h), d_h),
            u_r=store.uniform(f"{name}.u_r", (d_h, d_h), d_h),
            u_n=store.uniform(f"{name}.u_n", (d_h, d_h), d_h),
            b_z=store.zeros(f"{name}.b_z", (d_h,)),
            b_r=store.zeros(f"{name}.b_r", (d_h,)),
            b_n=store.zeros(f"{name}.b_n", (d_h,)),
        )


def gru_cell(x: Tensor, h: Tensor, params: GruParams) -> Tensor:
    """One GRU update.

    z = sigmoid(x W_z + h U_z + b_z)
    r = sigmoid(x W_r + h U_r + b_r)
    n = tanh(x W_n + (r * h) U_n + b_n)
    h' = (1 - z) * n + z * h
    """

    if x.shape != (params.d_in,) or h.shape != (params.d_h,):
        raise ShapeError(
            f"gru_cell expects x ({params.d_in},) and h ({params.d_h},), got {x.shape}, {h.shape}"
        )
    z = T.sigmoid(T.add(T.add(T.vecmat(x, params.w_z), T.vecmat(h, params.u_z)), params.b_z))
    r = T.sigmoid(T.add(T.add(T.vecmat(x, params.w_r), T.vecmat(h, params.u_r)), params.b_r))
    n = T.tanh(
        T.add(T.add(T.vecmat(x, params.w_n), T.vecmat(T.mul(r, h), params.u_n)), params.b_n)
    )
    return T.add(T.mul(T.sub(1.0, z), n), T.mul(z, h))


class GRU:
    """GRU cell run over a token sequence; returns the final state."""

    def __init__(self, store: ParamStore, name: str, d_in: int, d_h: int):
        self.params = GruParams.create(store, name, d_in, d_h)
        self.d_h = d_h

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        return gru_cell(x, h, self.params)

    def zero_state(self) -> Tensor:
        return Tensor(np.zeros(self.d_h))

    def run(self, inputs: Tensor, h0: Tensor | None = None) -> Tensor:
        h = self.zero_state() if h0 is None else h0
        for i in range(inputs.shape[0]):
            h = self.step(T.reshape(T.take_rows(inputs, [i]), (inputs.shape[1],)), h)
        return h


class MLP:
    """Two-layer perceptron: Linear -> ReLU -> dropout -> Linear."""

    def __init__(self, store: ParamStore, name: str, d_in: int, hidden: int, d_out: int,
                 dropout: float = 0.0):
        self.first = Linear(store, f"{name}.fc1", d_in, hidden)
        self.second = Linear(store, f"{name}.fc2", hidden, d_out)
        self.dropout = dropout

    def __call__(self, x: Tensor, mode: Mode = EVAL) -> Tensor:
        hidden = T.dropout(T.relu(self.first(x)), self.dropout, mode.rng, mode.training)
        return self.second(hidden)


class TransformerLayer:
    """Post-norm encoder layer: self-attention and ReLU feed-forward, each residual."""

    def __init__(self, store: ParamStore, name: str, d_model: int, heads: int, ffn: int,
                 dropout: float):
        if d_model % heads:
            raise ShapeError(f"d_model={d_model} not divisible by heads={heads}")
        self.heads = heads
        self.d_head = d_model // heads
        self.q = Linear(store, f"{name}.q", d_model, d_model, weight_norm=False)
        self.k = Linear(store, f"{name}.k", d_model, d_model, weight_norm=False)
        self.v = Linear(store, f"{name}.v", d_model, d_model, weight_norm=False)
        self.o = Linear(store, f"{name}.o", d_model, d_model, weight_norm=False)
        self.ln1_g = store.ones(f"{name}.ln1.g", (d_model,))
        self.ln1_b = store.zeros(f"{name}.ln1.b", (d_model,))
        self.ff1 = Linear(store, f"{name}.ff1", d_model, ffn, weight_norm=False)
        self.ff2 = Linear(store, f"{name}.ff2", ffn, d_model, weight_norm=False)
        self.ln2_g = store.ones(f"{name}.ln2.g", (d_model,))
        self.ln2_b = store.zeros(f"{name}.ln2.b", (d_model,))
        self.dropout = dropout

    def __call__(self, x: Tensor, mode: Mode) -> Tensor:
        q, k, v = self.q(x), self.k(x), self.v(x)
        scale = 1.0 / math.sqrt(self.d_head)
        heads = []
        for h in range(self.heads):
            cols = slice(h * self.d_head, (h + 1) * self.d_head)
            qh, kh, vh = (T.take_cols(t, cols.start, cols.stop) for t in (q, k, v))
            attn = T.softmax(T.scale(T.matmul(qh, T.transpose(kh)), scale))
            heads.append(T.matmul(attn, vh))
        mixed = self.o(T.concat(heads, axis=1))
        x = T.layer_norm(T.add(x, T.dropout(mixed, self.dropout, mode.rng, mode.training)),
                         self.ln1_g, self.ln1_b)
        ff = self.ff2(T.dropout(T.relu(self.ff1(x)), self.dropout, mode.rng, mode.training))
        return T.layer_norm(T.add(x, ff), self.ln2_g, self.ln2_b)


class TransformerEncoder:
    """Bidirectional transformer over token ids with mean pooling.

    Padding positions are dropped before attention, which gives non-pad
    outputs identical to key-masking them.
    """

    def __init__(self, store: ParamStore, name: str, vocab_size: int, d_model: int,
                 layers: int, heads: int, ffn: int, max_len: int, pad_id: int,
                 dropout: float = 0.0):
        self.tokens = Embedding(store, f"{name}.tok", vocab_size, d_model)
        self.positions = Embedding(store, f"{name}.pos", max_len, d_model)
        self.layers = [
            TransformerLayer(store, f"{name}.layer{i}", d_model, heads, ffn, dropout)
            for i in range(layers)
        ]
        self.max_len = max_len
        self.pad_id = pad_id
        self.dropout = dropout
        self.prefix = name

    def encode_positions(self, ids: Sequence[int], mode: Mode = EVAL) -> Tensor:
        """Per-position encodings of the non-pad tokens, shape (n, d_model)."""

        if len(ids) > self.max_len:
            raise ShapeError(f"question has {len(ids)} tokens, limit is {self.max_len}")
        positions = [i for i, tok in enumerate(ids) if tok != self.pad_id]
        if not positions:
            raise DatasetError("cannot encode an empty (all-pad) question")
        tokens = [ids[i] for i in positions]
        x = T.add(self.tokens(tokens), self.positions(positions))
        x = T.dropout(x, self.dropout, mode.rng, mode.training)
        for layer in self.layers:
            x = layer(x, mode)
        return x

    def __call__(self, ids: Sequence[int], mode: Mode = EVAL) -> Tensor:
        return T.mean(self.encode_positions(ids, mode), axis=0)
