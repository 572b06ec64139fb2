"""
NumHTML - Tensor Autodiff

Dense float64 tensors with define-by-run reverse-mode differentiation.
Every primitive records its parents and a backward rule; ``backward`` traces
the graph reachable from a scalar loss into a ``Tape`` (topological order)
and replays it in reverse.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.exceptions import ContractError, DimensionError

logger = logging.getLogger(__name__)

DTYPE = np.float64
LAYER_NORM_EPS = 1e-5
MASK_VALUE = -1e9

Scalar = Union[int, float]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """A dense n-dimensional value with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "name", "op", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _parents: Tuple["Tensor", ...] = (),
        _backward: Optional[BackwardFn] = None,
        op: str = "leaf",
    ):
        arr = np.array(data, dtype=DTYPE)
        if any(dim <= 0 for dim in arr.shape):
            raise DimensionError(f"tensor dimensions must be positive, got {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.op = op
        self._parents = _parents
        self._backward = _backward

    # ------------------------------------------------------------------ basics
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label}, requires_grad={self.requires_grad})"

    # --------------------------------------------------------------- operators
    def __add__(self, other) -> "Tensor":
        return add(self, other)

    def __radd__(self, other) -> "Tensor":
        return add(self, other)

    def __sub__(self, other) -> "Tensor":
        return add(self, neg(other) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other) -> "Tensor":
        return add(neg(self), other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other) -> "Tensor":
        return mul(self, other)

    def __truediv__(self, other: Scalar) -> "Tensor":
        if isinstance(other, Tensor):
            raise ContractError("division is only defined by a constant")
        return mul(self, 1.0 / other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        return take(self, index)

    # ----------------------------------------------------------------- methods
    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return reduce_sum(self, axis)

    def mean(self) -> "Tensor":
        return mul(reduce_sum(self), 1.0 / self.size)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes or None)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def relu(self) -> "Tensor":
        return relu(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def log(self) -> "Tensor":
        return log(self)

    def exp(self) -> "Tensor":
        return exp(self)

    def backward(self) -> None:
        backward(self)


def as_tensor(value) -> Tensor:
    """Wrap constants (numbers, arrays) as non-tracking tensors."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    # data is a fresh array; bypasses the copy in __init__.
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=DTYPE)
    out.grad = None
    out.name = None
    out.op = op
    tracked = any(p.requires_grad for p in parents)
    out.requires_grad = tracked
    out._parents = tuple(parents) if tracked else ()
    out._backward = backward_fn if tracked else None
    return out


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------


@dataclass
class TapeEntry:
    """One recorded primitive: its output and the tensors it consumed."""
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor


class Tape:
    """Topologically ordered record of the primitives behind a tensor."""

    def __init__(self, entries: List[TapeEntry]):
        self.entries = entries

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def trace(cls, root: Tensor) -> "Tape":
        """Collect every recorded operation reachable from ``root``, inputs first."""
        entries: List[TapeEntry] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                entries.append(TapeEntry(node.op, node._parents, node))
                continue
            if id(node) in visited or node._backward is None:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in reversed(node._parents):
                if id(parent) not in visited and parent._backward is not None:
                    stack.append((parent, False))
        return cls(entries)

    def backward(self, root: Tensor) -> None:
        """Propagate d(root)/d(node) through the recorded entries in reverse."""
        grads: Dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
        owners: Dict[int, Tensor] = {id(root): root}

        for entry in reversed(self.entries):
            out = entry.output
            g = grads.pop(id(out), None)
            if g is None:
                continue
            out.grad = g
            input_grads = out._backward(g)
            for tensor, tensor_grad in zip(entry.inputs, input_grads):
                if tensor_grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + tensor_grad
                else:
                    grads[key] = np.asarray(tensor_grad, dtype=DTYPE)
                    owners[key] = tensor

        # Whatever is left belongs to leaves.
        for key, g in grads.items():
            owners[key].grad = g


def backward(loss: Tensor) -> Tape:
    """
    Fill ``grad`` on every tracked tensor that ``loss`` depends on.

    Gradients are overwritten, not accumulated across calls; leaves that
    ``loss`` does not reach keep whatever ``grad`` they had, so callers
    running several backward passes zero their parameters in between.

    Args:
        loss: Scalar tensor

    Returns:
        The tape that was replayed

    Raises:
        ContractError: If the loss is not a scalar or does not track gradients
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor with requires_grad")
    tape = Tape.trace(loss)
    tape.backward(loss)
    return tape


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    """Elementwise sum; a 1-D bias may be added over the rows of its partner."""
    if not isinstance(a, Tensor):
        a, b = b, a
    if not isinstance(b, Tensor):
        const = float(b)
        return _result(a.data + const, (a,), lambda g: (g,), "add_const")

    if a.shape == b.shape:
        return _result(a.data + b.data, (a, b), lambda g: (g, g), "add")

    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        n = b.shape[0]
        return _result(a.data + b.data, (a, b), lambda g: (g, g.reshape(-1, n).sum(axis=0)), "add_bias")
    if a.ndim == 1 and b.ndim >= 1 and b.shape[-1] == a.shape[0]:
        return add(b, a)

    raise DimensionError(f"add: shapes {a.shape} and {b.shape} are incompatible")


def neg(a: Tensor) -> Tensor:
    return mul(a, -1.0)


def mul(a, b) -> Tensor:
    """Elementwise product, or scaling by a constant or a scalar tensor."""
    if not isinstance(a, Tensor):
        a, b = b, a
    if not isinstance(b, Tensor):
        const = float(b)
        return _result(a.data * const, (a,), lambda g: (g * const,), "scale")

    if a.shape == b.shape:
        return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")

    if b.size == 1 and b.ndim == 0:
        return _result(
            a.data * b.data, (a, b), lambda g: (g * b.data, np.sum(g * a.data).reshape(())), "mul_scalar"
        )
    if a.size == 1 and a.ndim == 0:
        return mul(b, a)

    raise DimensionError(f"mul: shapes {a.shape} and {b.shape} are incompatible")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product.

    ``a`` may carry leading batch dimensions; ``b`` is either a plain matrix
    shared by every batch entry or carries the same batch dimensions as ``a``.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    if b.ndim == 2:
        k, n = b.shape

        def backward_shared(g):
            grad_a = g @ b.data.T
            grad_b = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            return grad_a, grad_b

        return _result(a.data @ b.data, (a, b), backward_shared, "matmul")

    if a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: batch dimensions differ, {a.shape} @ {b.shape}")

    def backward_batched(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return _result(a.data @ b.data, (a, b), backward_batched, "matmul_batched")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _result(y, (a,), lambda g: (g * y,), "exp")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ContractError("log of a non-positive value")
    x = a.data
    return _result(np.log(x), (a,), lambda g: (g / x,), "log")


def softmax(a: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax over the last axis.

    Args:
        a: Logits
        mask: Optional additive constant broadcastable to ``a`` (0 keeps,
            ``MASK_VALUE`` removes a position)
    """
    z = a.data if mask is None else a.data + mask
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward_softmax(g):
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

    return _result(y, (a,), backward_softmax, "softmax")


def layer_norm(
    a: Tensor,
    gamma: Optional[Tensor] = None,
    beta: Optional[Tensor] = None,
    eps: float = LAYER_NORM_EPS,
) -> Tensor:
    """Normalise the last axis to zero mean and unit variance, then apply the affine map."""
    d = a.shape[-1]
    for p in (gamma, beta):
        if p is not None and p.shape != (d,):
            raise DimensionError(f"layer_norm: affine parameter shape {p.shape} != ({d},)")

    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std

    y = xhat
    if gamma is not None:
        y = y * gamma.data
    if beta is not None:
        y = y + beta.data

    parents = [a] + [p for p in (gamma, beta) if p is not None]

    def backward_ln(g):
        dxhat = g * gamma.data if gamma is not None else g
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        grads = [dx]
        if gamma is not None:
            grads.append((g * xhat).reshape(-1, d).sum(axis=0))
        if beta is not None:
            grads.append(g.reshape(-1, d).sum(axis=0))
        return tuple(grads)

    return _result(y, parents, backward_ln, "layer_norm")


def mean_pool(a: Tensor, weights: Optional[np.ndarray] = None) -> Tensor:
    """
    Average the rows of ``a`` (second-last axis), optionally over a 0/1 row mask.

    Args:
        a: Tensor shaped (..., n, d)
        weights: Optional constant shaped (..., n); rows with weight 0 are ignored

    Raises:
        ContractError: If some group has no row with positive weight
    """
    if a.ndim < 2:
        raise DimensionError(f"mean_pool needs at least 2 dimensions, got {a.shape}")
    if weights is None:
        weights = np.ones(a.shape[:-1], dtype=DTYPE)
    weights = np.asarray(weights, dtype=DTYPE)
    if weights.shape != a.shape[:-1]:
        raise DimensionError(f"mean_pool: weights {weights.shape} do not match rows {a.shape[:-1]}")

    totals = weights.sum(axis=-1, keepdims=True)
    if np.any(totals <= 0):
        raise ContractError("mean_pool: a group has no unmasked rows")
    scale = (weights / totals)[..., None]
    out = (a.data * scale).sum(axis=-2)

    return _result(out, (a,), lambda g: (g[..., None, :] * scale,), "mean_pool")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Join tensors along ``axis``."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or t.shape[:axis] + t.shape[axis + 1:] != tensors[0].shape[:axis] + tensors[0].shape[axis + 1:]:
            raise DimensionError(f"concat: {t.shape} does not line up with {tensors[0].shape} on axis {axis}")

    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward_concat(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward_concat, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Stack equally shaped tensors along a new ``axis``."""
    tensors = [as_tensor(t) for t in tensors]
    expanded = []
    for t in tensors:
        new_shape = list(t.shape)
        pos = axis if axis >= 0 else len(new_shape) + 1 + axis
        new_shape.insert(pos, 1)
        expanded.append(reshape(t, tuple(new_shape)))
    return concat(expanded, axis=axis)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """
    Gather rows of ``table`` for integer ``ids`` of any shape.

    Returns:
        Tensor shaped ``ids.shape + (d,)``
    """
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"embedding table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ContractError(f"embedding ids outside [0, {table.shape[0]})")

    def backward_lookup(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (grad,)

    return _result(table.data[ids], (table,), backward_lookup, "embedding_lookup")


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    original = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"reshape {original} -> {shape}: {e}") from e
    return _result(out, (a,), lambda g: (g.reshape(original),), "reshape")


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def take(a: Tensor, index) -> Tensor:
    """Index a tensor (basic or integer-array indexing)."""
    out = a.data[index]

    def backward_take(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _result(out, (a,), backward_take, "take")


def reduce_sum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    if axis is None:
        return _result(np.sum(a.data).reshape(()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),), "sum")

    axis = axis % a.ndim

    def backward_sum(g):
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _result(a.data.sum(axis=axis), (a,), backward_sum, "sum_axis")


# ---------------------------------------------------------------------------
# Composite losses
# ---------------------------------------------------------------------------


def squared_error(prediction: Tensor, target) -> Tensor:
    """Mean of squared differences between ``prediction`` and a constant target."""
    diff = prediction - as_tensor(np.asarray(target, dtype=DTYPE).reshape(prediction.shape))
    return (diff * diff).mean()


def nll_from_probabilities(probs: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under row distributions ``probs``."""
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(probs.shape[0])
    picked = take(probs, (rows, labels))
    return neg(log(picked + 1e-300).mean())


def binary_cross_entropy(probs: Tensor, targets, eps: float = 1e-12) -> Tensor:
    """Mean binary cross-entropy for independent sigmoid outputs."""
    t = np.asarray(targets, dtype=DTYPE).reshape(probs.shape)
    pos = log(probs + eps) * as_tensor(t)
    negative = log((1.0 - probs) + eps) * as_tensor(1.0 - t)
    return neg((pos + negative).mean())


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-5) -> np.ndarray:
    """
    Central-difference estimate of d fn() / d tensor.

    ``fn`` must rebuild its graph from the current ``tensor.data`` on every call.
    """
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = fn().item()
        flat[i] = original - h
        minus = fn().item()
        flat[i] = original
        grad_flat[i] = (plus - minus) / (2.0 * h)
    return grad


def gradient_mismatch(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    h: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-6,
) -> List[str]:
    """
    Compare analytic gradients with central differences.

    Returns:
        Descriptions of every element outside ``max(rtol * scale, atol)``
        (empty when all gradients agree)
    """
    for t in tensors:
        t.zero_grad()
    backward(fn())
    problems = []
    for idx, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_gradient(fn, t, h)
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        bad = np.abs(analytic - numeric) > np.maximum(rtol * scale, atol)
        if np.any(bad):
            label = t.name or f"tensor[{idx}]"
            worst = np.max(np.abs(analytic - numeric))
            problems.append(f"{label}: {int(bad.sum())} elements differ (max abs error {worst:.3g})")
    return problems
