"""Dense float64 tensors with tape-based reverse-mode differentiation.

Ops are plain functions. When a ``Tape`` is active (``with Tape() as tape:``)
and any input requires grad, the op appends a node holding its
vector-Jacobian product; ``backward`` replays the nodes in reverse.

Negative infinity is the only non-finite value a tensor may hold: it encodes
a masked attention edge. NaN and +inf are errors.
"""

from __future__ import annotations

import contextvars
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError, ShapeError, TapeError

_ids = itertools.count(1)
_active_tape: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "chainvqa_active_tape", default=None
)


def _check_values(data: np.ndarray, op: str) -> None:
    if np.all(np.isfinite(data)):
        return
    if np.isnan(data).any() or np.isposinf(data).any():
        raise NumericError(f"{op} produced NaN or +inf")


class Tensor:
    """Row-major float64 array plus a requires-grad flag."""

    __slots__ = ("data", "requires_grad", "id", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if any(dim <= 0 for dim in arr.shape):
            raise ShapeError(f"tensor dimensions must be positive, got {arr.shape}")
        _check_values(arr, "tensor")
        self.data = arr
        self.requires_grad = requires_grad
        self.id = next(_ids)
        self.name = name

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool, op: str) -> "Tensor":
        _check_values(data, op)
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        out.id = next(_ids)
        out.name = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __add__(self, other) -> "Tensor":
        return add(self, other)

    def __radd__(self, other) -> "Tensor":
        return add(other, self)

    def __sub__(self, other) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other) -> "Tensor":
        return div(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)


@dataclass
class _Node:
    out_id: int
    inputs: tuple[Tensor, ...]
    vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]
    op: str


class Tape:
    """Ordered record of differentiable ops.

    A tape is single-owner: record on one thread, then call ``backward``.
    """

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self._produced: set[int] = set()
        self._token: contextvars.Token | None = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp, op: str) -> None:
        self.nodes.append(_Node(out.id, inputs, vjp, op))
        self._produced.add(out.id)

    def produced(self, tensor: Tensor) -> bool:
        return tensor.id in self._produced


class Gradients:
    """Gradient map keyed by tensor; tensors that did not participate read as zero."""

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        grad = self._grads.get(tensor.id)
        if grad is None:
            return np.zeros_like(tensor.data)
        return grad

    def __contains__(self, tensor: Tensor) -> bool:
        return tensor.id in self._grads

    def get(self, tensor: Tensor) -> np.ndarray | None:
        return self._grads.get(tensor.id)


def backward(tape: Tape, loss: Tensor) -> Gradients:
    """Reverse-mode sweep from a scalar ``loss`` recorded on ``tape``."""

    if loss.size != 1:
        raise ShapeError(f"loss must be a scalar, got shape {loss.shape}")
    if not tape.produced(loss):
        raise TapeError("loss was not produced on this tape")
    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        upstream = grads.get(node.out_id)
        if upstream is None:
            continue
        for tensor, grad in zip(node.inputs, node.vjp(upstream)):
            if grad is None or not tensor.requires_grad:
                continue
            if tensor.id in grads:
                grads[tensor.id] = grads[tensor.id] + grad
            else:
                grads[tensor.id] = grad
    return Gradients(grads)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _emit(data: np.ndarray, inputs: tuple[Tensor, ...], vjp, op: str) -> Tensor:
    needs_grad = any(t.requires_grad for t in inputs)
    tape = _active_tape.get()
    recording = needs_grad and tape is not None
    out = Tensor._wrap(data, recording, op)
    if recording:
        tape.record(out, inputs, vjp, op)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _finite_mask(x: np.ndarray) -> np.ndarray:
    return np.isfinite(x)


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: cannot broadcast {a.shape} and {b.shape}") from exc

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit(data, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError as exc:
        raise ShapeError(f"sub: cannot broadcast {a.shape} and {b.shape}") from exc

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit(data, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: cannot broadcast {a.shape} and {b.shape}") from exc

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit(data, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if np.any(b.data == 0):
        raise NumericError("div: division by zero")
    data = a.data / b.data

    def vjp(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _emit(data, (a, b), vjp, "div")


def scale(a: Tensor, factor: float) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (g * factor,)

    return _emit(a.data * factor, (a,), vjp, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Product of an m×k and a k×n matrix."""

    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    data = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _emit(data, (a, b), vjp, "matmul")


def vecmat(x: Tensor, w: Tensor) -> Tensor:
    """Row-vector times matrix: (k,) x (k, n) -> (n,)."""

    if x.ndim != 1 or w.ndim != 2 or x.shape[0] != w.shape[0]:
        raise ShapeError(f"vecmat expects (k,) x (k, n), got {x.shape} x {w.shape}")

    def vjp(g):
        return w.data @ g, np.outer(x.data, g)

    return _emit(x.data @ w.data, (x, w), vjp, "vecmat")


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {a.shape}")

    def vjp(g):
        return (g.T,)

    return _emit(a.data.T.copy(), (a,), vjp, "transpose")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} to {tuple(shape)}") from exc

    def vjp(g):
        return (g.reshape(a.shape),)

    return _emit(data, (a,), vjp, "reshape")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit(data, tensors, vjp, "concat")


def take_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather rows (first axis) of ``a``; gradients scatter-add back."""

    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        raise ShapeError("take_rows needs at least one index")
    if idx.min() < 0 or idx.max() >= a.shape[0]:
        raise ShapeError(f"row index out of range for shape {a.shape}")

    def vjp(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, idx, g)
        return (grad,)

    return _emit(a.data[idx], (a,), vjp, "take_rows")


def take_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous column slice [start, stop) of a matrix."""

    if a.ndim != 2 or not 0 <= start < stop <= a.shape[1]:
        raise ShapeError(f"column slice [{start}, {stop}) invalid for shape {a.shape}")

    def vjp(g):
        grad = np.zeros_like(a.data)
        grad[:, start:stop] = g
        return (grad,)

    return _emit(a.data[:, start:stop].copy(), (a,), vjp, "take_cols")


def broadcast_rows(a: Tensor, rows: int) -> Tensor:
    """Repeat a vector ``rows`` times into a rows×n matrix."""

    if a.ndim != 1:
        raise ShapeError(f"broadcast_rows expects a vector, got {a.shape}")

    def vjp(g):
        return (g.sum(axis=0),)

    return _emit(np.tile(a.data, (rows, 1)), (a,), vjp, "broadcast_rows")


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


def sum_(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = np.asarray(a.data.sum(axis=axis, keepdims=keepdims), dtype=np.float64)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit(data, (a,), vjp, "sum")


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def masked_mean_rows(a: Tensor, keep: Sequence[bool]) -> Tensor:
    """Mean of the rows of a matrix selected by ``keep``."""

    keep_arr = np.asarray(keep, dtype=bool)
    if keep_arr.shape != (a.shape[0],):
        raise ShapeError(f"mask of length {keep_arr.size} does not match {a.shape[0]} rows")
    count = int(keep_arr.sum())
    if count == 0:
        raise ShapeError("masked mean over zero rows is undefined")
    weights = keep_arr.astype(np.float64) / count
    data = weights @ a.data

    def vjp(g):
        return (np.outer(weights, g),)

    return _emit(data, (a,), vjp, "masked_mean_rows")


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"dot expects equal-length vectors, got {a.shape} and {b.shape}")
    return sum_(mul(a, b))


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    positive = a.data > 0

    def vjp(g):
        return (g * positive,)

    return _emit(np.where(positive, a.data, 0.0), (a,), vjp, "relu")


def sigmoid(a: Tensor) -> Tensor:
    data = _stable_sigmoid(a.data)

    def vjp(g):
        return (g * data * (1.0 - data),)

    return _emit(data, (a,), vjp, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - data * data),)

    return _emit(data, (a,), vjp, "tanh")


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def vjp(g):
        return (g * data,)

    return _emit(data, (a,), vjp, "exp")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericError("log of a non-positive value; use masked_log for edge masks")

    def vjp(g):
        return (g / a.data,)

    return _emit(np.log(a.data), (a,), vjp, "log")


def masked_log(a: Tensor) -> Tensor:
    """log(x) for x > 0 and negative infinity for x == 0 (a hard mask)."""

    if np.any(a.data < 0):
        raise NumericError("masked_log of a negative value")
    positive = a.data > 0
    safe = np.where(positive, a.data, 1.0)
    data = np.where(positive, np.log(safe), -np.inf)

    def vjp(g):
        return (np.where(positive, g / safe, 0.0),)

    return _emit(data, (a,), vjp, "masked_log")


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _keep_mask(logits: np.ndarray, mask) -> np.ndarray:
    if mask is None:
        return np.ones(logits.shape, dtype=bool)
    if isinstance(mask, np.ndarray) and mask.dtype == bool:
        if mask.shape != logits.shape:
            raise ShapeError(f"mask shape {mask.shape} does not match logits {logits.shape}")
        return mask
    if logits.ndim != 1:
        raise ShapeError("index-set masks are only supported for vectors")
    keep = np.ones(logits.shape, dtype=bool)
    for index in mask:
        if not 0 <= int(index) < logits.shape[0]:
            raise ShapeError(f"mask index {index} out of range")
        keep[int(index)] = False
    return keep


def softmax(logits: Tensor, mask: Iterable[int] | np.ndarray | None = None) -> Tensor:
    """Max-stabilized softmax over the last axis.

    ``mask`` is either a set of excluded indices (vectors) or a boolean
    keep-array shaped like ``logits``. Masked and negative-infinity entries
    get exactly zero probability.
    """

    x = logits.data
    if x.ndim not in (1, 2):
        raise ShapeError(f"softmax expects a vector or matrix, got {x.shape}")
    keep = _keep_mask(x, mask) & _finite_mask(x)
    if not np.all(keep.any(axis=-1)):
        raise NumericError("softmax row has no unmasked finite logit")
    shifted = np.where(keep, x, -np.inf)
    top = shifted.max(axis=-1, keepdims=True)
    e = np.where(keep, np.exp(np.where(keep, x - top, 0.0)), 0.0)
    data = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * data).sum(axis=-1, keepdims=True)
        return (data * (g - inner),)

    return _emit(data, (logits,), vjp, "softmax")


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of a matrix, then apply gain and bias."""

    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    data = xhat * gamma.data + beta.data
    n = x.shape[-1]

    def vjp(g):
        gx = g * gamma.data
        grad_x = inv / n * (n * gx - gx.sum(axis=-1, keepdims=True)
                            - xhat * (gx * xhat).sum(axis=-1, keepdims=True))
        grad_gamma = _unbroadcast(g * xhat, gamma.shape)
        grad_beta = _unbroadcast(g, beta.shape)
        return grad_x, grad_gamma, grad_beta

    return _emit(data, (a, gamma, beta), vjp, "layer_norm")


def weight_norm(direction: Tensor, magnitude: Tensor) -> Tensor:
    """W[r] = magnitude[r] * direction[r] / ||direction[r]|| for each output row."""

    v = direction.data
    norms = np.sqrt((v * v).sum(axis=1, keepdims=True))
    if np.any(norms == 0):
        raise NumericError("weight_norm direction row has zero norm")
    g = magnitude.data.reshape(-1, 1)
    unit = v / norms
    data = g * unit

    def vjp(grad):
        proj = (grad * unit).sum(axis=1, keepdims=True)
        grad_v = g / norms * (grad - proj * unit)
        return grad_v, proj.reshape(magnitude.shape)

    return _emit(data, (direction, magnitude), vjp, "weight_norm")


def dropout(a: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity outside training mode."""

    if not training or p <= 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    keep = (rng.random(a.shape) >= p) / (1.0 - p)

    def vjp(g):
        return (g * keep,)

    return _emit(a.data * keep, (a,), vjp, "dropout")


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] for a single example."""

    if logits.ndim != 1:
        raise ShapeError(f"cross_entropy expects a logit vector, got {logits.shape}")
    if not 0 <= target < logits.shape[0]:
        raise ShapeError(f"target {target} outside {logits.shape[0]} classes")
    x = logits.data
    top = x.max()
    lse = top + math.log(np.exp(x - top).sum())
    probs = np.exp(x - lse)

    def vjp(g):
        grad = probs.copy()
        grad[target] -= 1.0
        return (grad * g,)

    return _emit(np.asarray(lse - x[target]), (logits,), vjp, "cross_entropy")


def bce_with_logits(logits: Tensor, targets: Tensor | np.ndarray) -> Tensor:
    """Sum over classes of binary cross-entropy against soft targets in [0, 1]."""

    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=np.float64)
    if t.shape != logits.shape:
        raise ShapeError(f"targets {t.shape} do not match logits {logits.shape}")
    x = logits.data
    data = np.asarray((np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))).sum())
    probs = _stable_sigmoid(x)

    def vjp(g):
        return ((probs - t) * g,)

    return _emit(data, (logits,), vjp, "bce_with_logits")


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def finite_difference(fn: Callable[[], Tensor], param: Tensor, step: float = 1e-3) -> np.ndarray:
    """Central-difference gradient of the scalar ``fn()`` with respect to ``param``.

    ``fn`` must re-run its forward pass reading ``param.data`` each call.
    """

    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = fn().item()
        flat[i] = original - step
        lower = fn().item()
        flat[i] = original
        out[i] = (upper - lower) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||, 1e-8)."""

    diff = np.linalg.norm(analytic - numeric)
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(diff / denom)
