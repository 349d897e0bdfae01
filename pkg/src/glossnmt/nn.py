"""Parameter containers and Transformer building blocks on top of ``tensor``."""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .tensor import Tensor

NEG_INF = -1e9


class Module:
    """Minimal parameter tree.

    Any ``Tensor`` attribute is a parameter; ``Module`` attributes and lists of
    modules are walked recursively in attribute-definition order.
    """

    training: bool = True

    def named_parameters(self, prefix: str = ""):
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor):
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> list[Tensor]:
        return [p for p in self.parameters() if p.requires_grad]

    def modules(self):
        yield self
        for val in vars(self).values():
            if isinstance(val, Module):
                yield from val.modules()
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype):
        """Cast every parameter in place (float64 for gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise ContractError(f"state mismatch: missing={sorted(missing)} "
                                f"unexpected={sorted(unexpected)}")
        for name, p in own.items():
            if state[name].shape != p.data.shape:
                raise DimensionError("load_state_dict", f"shape mismatch for {name}",
                                     [p.data.shape, state[name].shape])
            p.data = np.array(state[name], dtype=p.data.dtype)


def _param(arr, dtype) -> Tensor:
    return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32,
                 bias: bool = True):
        limit = math.sqrt(6.0 / (d_in + d_out))
        self.weight = _param(rng.uniform(-limit, limit, size=(d_in, d_out)), dtype)
        self.bias = _param(np.zeros(d_out), dtype) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise DimensionError("linear", "input width does not match weight rows",
                                 [x.shape, self.weight.shape])
        return T.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, dtype=np.float32, eps: float = 1e-5):
        self.gain = _param(np.ones(d), dtype)
        self.shift = _param(np.zeros(d), dtype)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.shift, self.eps)


class Embedding(Module):
    def __init__(self, n: int, d: int, rng: np.random.Generator, dtype=np.float32):
        self.table = _param(rng.normal(0.0, d ** -0.5, size=(n, d)), dtype)

    def __call__(self, ids) -> Tensor:
        return T.embedding_lookup(self.table, ids)


class FeedForward(Module):
    """linear -> relu -> linear."""

    def __init__(self, d_model: int, d_hidden: int, rng, dtype=np.float32):
        self.inner = Linear(d_model, d_hidden, rng, dtype)
        self.outer = Linear(d_hidden, d_model, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(T.relu(self.inner(x)))


class MultiHeadAttention(Module):
    """Scaled dot-product attention with ``n_heads`` heads.

    Inputs are ``(batch, length, d_model)``.  ``mask`` is boolean, True where
    a query may attend to a key, broadcastable to ``(batch, heads, Tq, Tk)``.
    """

    def __init__(self, d_model: int, n_heads: int, rng, dtype=np.float32):
        if d_model % n_heads:
            raise ContractError(f"d_model={d_model} is not divisible by n_heads={n_heads}")
        self.n_heads = n_heads
        self.query = Linear(d_model, d_model, rng, dtype)
        self.key = Linear(d_model, d_model, rng, dtype)
        self.value = Linear(d_model, d_model, rng, dtype)
        self.out = Linear(d_model, d_model, rng, dtype)

    def __call__(self, q: Tensor, k: Tensor, v: Tensor, mask=None) -> Tensor:
        if q.ndim != 3 or k.ndim != 3 or v.ndim != 3:
            raise DimensionError("attention", "q, k, v must be (batch, length, d_model)",
                                 [q.shape, k.shape, v.shape])
        B, Tq, D = q.shape
        Tk = k.shape[1]
        if k.shape != v.shape or k.shape[0] != B or k.shape[2] != D:
            raise DimensionError("attention", "key/value do not conform to query",
                                 [q.shape, k.shape, v.shape])
        H = self.n_heads
        dh = D // H
        Q = self.query(q).reshape(B, Tq, H, dh).transpose(0, 2, 1, 3)
        K = self.key(k).reshape(B, Tk, H, dh).transpose(0, 2, 3, 1)
        V = self.value(v).reshape(B, Tk, H, dh).transpose(0, 2, 1, 3)
        scores = T.scale(Q @ K, 1.0 / math.sqrt(dh))
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            try:
                full = np.broadcast_shapes(mask.shape, scores.shape)
            except ValueError:
                full = None
            if full != scores.shape:
                raise DimensionError("attention", "mask is not broadcastable to (B, H, Tq, Tk)",
                                     [mask.shape, scores.shape])
            scores = T.masked_fill(scores, ~mask, NEG_INF)
        weights = T.softmax(scores, axis=-1)
        ctx = (weights @ V).transpose(0, 2, 1, 3).reshape(B, Tq, D)
        return self.out(ctx)


def positional_encoding(seq_len: int, d_model: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal table: PE[p, 2i] = sin(p / 10000^(2i/d)), PE[p, 2i+1] = cos(same)."""
    pos = np.arange(seq_len, dtype=np.float64)[:, None]
    i2 = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i2 / d_model)
    pe = np.zeros((seq_len, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe.astype(dtype)


def padding_mask(valid: np.ndarray) -> np.ndarray:
    """(B, Tk) validity -> (B, 1, 1, Tk) attention mask."""
    return np.asarray(valid, dtype=bool)[:, None, None, :]


def causal_mask(length: int) -> np.ndarray:
    return np.tril(np.ones((length, length), dtype=bool))[None, None]
