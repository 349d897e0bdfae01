"""Dense tensors with define-by-run reverse-mode differentiation.

Every primitive computes its forward value with numpy and, when any input
participates in the tape, attaches a closure mapping the output gradient to
the input gradients.  ``backward`` walks the recorded graph in reverse
topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

_grad_enabled = True

FLOAT32 = np.float32
FLOAT64 = np.float64


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(FLOAT32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.name = name

    # -- introspection -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return scale(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def _not_scalar(t):
    raise ContractError(f"item() requires a single-element tensor, got shape {t.shape}")


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(primitive, *arrays):
    try:
        return np.broadcast_shapes(*(a.shape for a in arrays))
    except ValueError:
        raise DimensionError(primitive, "operands are not broadcast-compatible",
                             [a.shape for a in arrays]) from None


# -- elementwise ------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a, _peer_dtype(b)), as_tensor(b, _peer_dtype(a))
    _broadcast_shape("add", a.data, b.data)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a, _peer_dtype(b)), as_tensor(b, _peer_dtype(a))
    _broadcast_shape("sub", a.data, b.data)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a, _peer_dtype(b)), as_tensor(b, _peer_dtype(a))
    _broadcast_shape("mul", a.data, b.data)
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _result(ad * bd, (a, b), backward)


def _peer_dtype(x):
    # python scalars and lists adopt the dtype of the tensor they meet
    return x.dtype if isinstance(x, Tensor) else None


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        return (g * c,)

    return _result(x.data * x.data.dtype.type(c), (x,), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return _result(np.where(mask, x.data, x.data.dtype.type(0)), (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _result(out, (x,), backward)


def masked_fill(x: Tensor, mask, value: float) -> Tensor:
    """Replace entries where ``mask`` is True with ``value``."""
    mask = np.asarray(mask, dtype=bool)
    try:
        full = np.broadcast_shapes(x.shape, mask.shape)
    except ValueError:
        raise DimensionError("masked_fill", "mask is not broadcastable to input",
                             [x.shape, mask.shape]) from None
    if full != x.shape:
        raise DimensionError("masked_fill", "mask would enlarge the input", [x.shape, mask.shape])

    def backward(g):
        return (np.where(mask, 0, g).astype(g.dtype, copy=False),)

    return _result(np.where(mask, x.data.dtype.type(value), x.data), (x,), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool = True) -> Tensor:
    if not training or p <= 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)

    def backward(g):
        return (g * keep,)

    return _result(x.data * keep, (x,), backward)


# -- reductions and shape ---------------------------------------------------

def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), backward)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return scale(tsum(x, axis, keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise DimensionError("reshape", f"cannot reshape to {tuple(shape)}", [src]) from None

    def backward(g):
        return (g.reshape(src),)

    return _result(data, (x,), backward)


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise DimensionError("transpose", f"invalid permutation {axes}", [x.shape])
    inv = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inv),)

    return _result(x.data.transpose(axes), (x,), backward)


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    nd = tensors[0].ndim
    ax = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(t.shape[i] != tensors[0].shape[i] for i in range(nd) if i != ax):
            raise DimensionError("concat", f"non-concatenation axes differ (axis={axis})",
                                 [u.shape for u in tensors])
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=ax))

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward)


# -- linear algebra ---------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul", "operands must be at least 2-D", [a.shape, b.shape])
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            "matmul", f"contracting axes differ: a[-1]={a.shape[-1]} vs b[-2]={b.shape[-2]}",
            [a.shape, b.shape])
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError("matmul", "batch axes are not broadcast-compatible",
                             [a.shape, b.shape]) from None
    ad, bd = a.data, b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            if bd.ndim == 2:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _result(ad @ bd, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


# -- normalisation and probability ------------------------------------------

def _check_axis(primitive, x, axis):
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(primitive, f"axis {axis} out of range", [x.shape])


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis("softmax", x, axis)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis("log_softmax", x, axis)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _result(out, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None,
               eps: float = 1e-5, axis: int = -1) -> Tensor:
    """(x - mean) / sqrt(var + eps) along ``axis``, then affine."""
    _check_axis("layer_norm", x, axis)
    n = x.shape[axis]
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    parents = [x]
    if gamma is not None:
        if gamma.shape[-1] != n or gamma.ndim != 1 or axis not in (-1, x.ndim - 1):
            raise DimensionError("layer_norm", "gain must be 1-D over the last axis",
                                 [x.shape, gamma.shape])
        parents.append(gamma)
    if beta is not None:
        parents.append(beta)
    out = xhat
    if gamma is not None:
        out = out * gamma.data
    if beta is not None:
        out = out + beta.data

    def backward(g):
        grads = []
        gx = g * gamma.data if gamma is not None else g
        dx = inv * (gx - gx.mean(axis=axis, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=axis, keepdims=True))
        grads.append(dx)
        if gamma is not None:
            grads.append(_unbroadcast(g * xhat, gamma.shape))
        if beta is not None:
            grads.append(_unbroadcast(g, beta.shape))
        return tuple(grads)

    return _result(out, parents, backward)


def embedding_lookup(weight: Tensor, ids) -> Tensor:
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise DimensionError("embedding_lookup", "ids must be integers", [ids.shape])
    if weight.ndim != 2:
        raise DimensionError("embedding_lookup", "table must be 2-D", [weight.shape])
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise DimensionError("embedding_lookup",
                             f"id out of range [0, {weight.shape[0]})", [weight.shape, ids.shape])
    rows = weight.shape

    def backward(g):
        gw = np.zeros(rows, dtype=g.dtype)
        np.add.at(gw, ids.reshape(-1), g.reshape(-1, rows[1]))
        return (gw,)

    return _result(weight.data[ids], (weight,), backward)


def cross_entropy(logits: Tensor, targets, label_smoothing: float = 0.0,
                  ignore_index: int | None = None) -> Tensor:
    """Mean token cross-entropy against a smoothed one-hot target.

    The target distribution puts ``1 - label_smoothing`` on the gold id and
    spreads ``label_smoothing`` uniformly over the whole vocabulary.  Rows
    whose target equals ``ignore_index`` contribute nothing.
    """
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise DimensionError("cross_entropy", "targets must match logits without the class axis",
                             [logits.shape, targets.shape])
    V = logits.shape[-1]
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    keep = np.ones(targets.shape, dtype=bool) if ignore_index is None else targets != ignore_index
    n = max(int(keep.sum()), 1)
    eps = float(label_smoothing)
    gold = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    per_tok = -(1.0 - eps) * gold - eps * logp.mean(axis=-1)
    loss = np.asarray((per_tok * keep).sum() / n, dtype=logits.dtype)

    def backward(g):
        q = np.full(logp.shape, eps / V, dtype=logp.dtype)
        np.put_along_axis(q, targets[..., None],
                          np.take_along_axis(q, targets[..., None], axis=-1) + (1.0 - eps), axis=-1)
        grad = (np.exp(logp) - q) * (keep[..., None] * (float(g) / n))
        return (grad.astype(logits.dtype, copy=False),)

    return _result(loss, (logits,), backward)


# -- driver -----------------------------------------------------------------

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tape ancestor of a scalar ``loss``.

    Leaf gradients accumulate across calls until ``zero_grad``.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not on the gradient tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        node.grad = g
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
