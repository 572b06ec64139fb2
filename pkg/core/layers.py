"""
NumHTML - Layers

Small trainable building blocks on top of ``core.tensor``: linear maps,
layer normalisation, multi-head self-attention, pre-norm transformer blocks
and a bidirectional LSTM.
"""

import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from utils.exceptions import ConfigurationError, DimensionError
from .tensor import (
    MASK_VALUE,
    Tensor,
    concat,
    layer_norm,
    relu,
    reshape,
    sigmoid,
    softmax,
    stack,
    tanh,
    transpose,
)


class Module:
    """Container of named parameters and child modules."""

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self._children: Dict[str, "Module"] = {}

    def param(self, name: str, value: np.ndarray) -> Tensor:
        tensor = Tensor(value, requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, module in self._children.items():
            yield from module.named_parameters(prefix + name + ".")

    def parameters(self) -> Dict[str, Tensor]:
        return dict(self.named_parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> List[str]:
        """
        Copy arrays into matching parameters.

        Returns:
            Names that were loaded
        """
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        if strict and missing:
            raise DimensionError(f"state is missing parameters: {missing[:5]}")
        loaded = []
        for name, value in state.items():
            if name not in params:
                if strict:
                    raise DimensionError(f"unexpected parameter in state: {name}")
                continue
            if params[name].shape != value.shape:
                raise DimensionError(f"{name}: state shape {value.shape} != parameter {params[name].shape}")
            params[name].data[...] = value
            loaded.append(name)
        return loaded

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.zero_grad()


def _uniform(rng: np.random.Generator, fan_in: int, fan_out: int, scale: float = 1.0) -> np.ndarray:
    bound = scale * math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear(Module):
    """``y = x W + b`` over the last axis."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True, zero: bool = False):
        super().__init__()
        weight = np.zeros((in_dim, out_dim)) if zero else _uniform(rng, in_dim, out_dim)
        self.weight = self.param("weight", weight)
        self.bias = self.param("bias", np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim == 1:
            return reshape(self(reshape(x, (1, x.shape[0]))), (self.weight.shape[1],))
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y

    def zero_(self) -> None:
        self.weight.data[...] = 0.0
        if self.bias is not None:
            self.bias.data[...] = 0.0


class LayerNorm(Module):
    def __init__(self, dim: int):
        super().__init__()
        self.gamma = self.param("gamma", np.ones(dim))
        self.beta = self.param("beta", np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)


def key_padding_mask(mask: Optional[np.ndarray]) -> Optional[np.ndarray]:
    """Turn a (batch, length) 0/1 mask into an additive attention mask."""
    if mask is None:
        return None
    mask = np.asarray(mask, dtype=np.float64)
    return np.where(mask > 0, 0.0, MASK_VALUE)[:, None, None, :]


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention with ``heads`` heads."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % heads:
            raise ConfigurationError(f"{heads} heads do not divide width {dim}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.query = self.child("query", Linear(dim, dim, rng))
        self.key = self.child("key", Linear(dim, dim, rng))
        self.value = self.child("value", Linear(dim, dim, rng))
        self.output = self.child("output", Linear(dim, dim, rng))

    def _split(self, x: Tensor) -> Tensor:
        n, length, _ = x.shape
        return transpose(reshape(x, (n, length, self.heads, self.head_dim)), (0, 2, 1, 3))

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        if x.ndim != 3 or x.shape[-1] != self.dim:
            raise DimensionError(f"attention expects (batch, length, {self.dim}), got {x.shape}")
        n, length, _ = x.shape
        q = self._split(self.query(x))
        k = self._split(self.key(x))
        v = self._split(self.value(x))
        scores = (q @ transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(self.head_dim))
        weights = softmax(scores, key_padding_mask(mask))
        context = transpose(weights @ v, (0, 2, 1, 3))
        return self.output(reshape(context, (n, length, self.dim)))


class TransformerBlock(Module):
    """Pre-norm encoder block: ``x + Attn(LN(x))`` then ``x + FFN(LN(x))``."""

    def __init__(self, dim: int, heads: int, ffn_dim: int, rng: np.random.Generator):
        super().__init__()
        self.attn_norm = self.child("attn_norm", LayerNorm(dim))
        self.attention = self.child("attention", MultiHeadAttention(dim, heads, rng))
        self.ffn_norm = self.child("ffn_norm", LayerNorm(dim))
        self.ffn_in = self.child("ffn_in", Linear(dim, ffn_dim, rng))
        self.ffn_out = self.child("ffn_out", Linear(ffn_dim, dim, rng))

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        x = x + self.attention(self.attn_norm(x), mask)
        return x + self.ffn_out(relu(self.ffn_in(self.ffn_norm(x))))

    def make_identity(self) -> None:
        """Zero both residual branches' output maps so the block passes its input through."""
        self.attention.output.zero_()
        self.ffn_out.zero_()


class TransformerStack(Module):
    """Sequence of blocks returning every layer's output (index 0 is the input)."""

    def __init__(self, count: int, dim: int, heads: int, ffn_dim: int, rng: np.random.Generator):
        super().__init__()
        self.blocks = [self.child(f"block{i}", TransformerBlock(dim, heads, ffn_dim, rng)) for i in range(count)]

    def __len__(self) -> int:
        return len(self.blocks)

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None) -> List[Tensor]:
        layers = [x]
        for block in self.blocks:
            x = block(x, mask)
            layers.append(x)
        return layers


class LSTM(Module):
    """Single-direction LSTM over (batch, time, features)."""

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.hidden = hidden
        self.input_map = self.child("input_map", Linear(in_dim, 4 * hidden, rng))
        self.recurrent = self.param("recurrent", _uniform(rng, hidden, 4 * hidden))
        # forget-gate bias starts at 1
        self.input_map.bias.data[hidden:2 * hidden] = 1.0

    def __call__(self, x: Tensor, reverse: bool = False) -> List[Tensor]:
        batch, steps, _ = x.shape
        h_dim = self.hidden
        h = Tensor(np.zeros((batch, h_dim)))
        c = Tensor(np.zeros((batch, h_dim)))
        outputs: List[Optional[Tensor]] = [None] * steps
        order = range(steps - 1, -1, -1) if reverse else range(steps)
        for t in order:
            z = self.input_map(x[:, t, :]) + h @ self.recurrent
            i = sigmoid(z[:, :h_dim])
            f = sigmoid(z[:, h_dim:2 * h_dim])
            g = tanh(z[:, 2 * h_dim:3 * h_dim])
            o = sigmoid(z[:, 3 * h_dim:])
            c = f * c + i * g
            h = o * tanh(c)
            outputs[t] = h
        return outputs


class BiLSTM(Module):
    """Forward and backward LSTMs; each step's output concatenates both states."""

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.forward_lstm = self.child("forward", LSTM(in_dim, hidden, rng))
        self.backward_lstm = self.child("backward", LSTM(in_dim, hidden, rng))

    def __call__(self, x: Tensor) -> Tensor:
        fwd = self.forward_lstm(x)
        bwd = self.backward_lstm(x, reverse=True)
        return stack([concat([f, b], axis=-1) for f, b in zip(fwd, bwd)], axis=1)
