"""Instruction branch: attention over frozen teacher features, an adapter, and alpha fusion.

The fused sublayer output is ``(1 - alpha) * backbone_attention + alpha * adapted``
where ``adapted = adapter(attention(query, feats, feats))``.  ``alpha`` comes from a
fixed schedule indexed by epoch, or from a learnable logit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError
from .nn import FeedForward, Module, MultiHeadAttention
from .tensor import Tensor

SCHEDULES = (
    "constant",
    "cosine_annealing",
    "cosine_decrement",
    "cosine_increment",
    "cosine_increment_shifted",
    "cosine_increment_monotone",
    "learned",
)

# (T_c, gamma) defaults per cosine schedule
_COSINE_DEFAULTS = {
    "cosine_annealing": (25.0, 0.0),
    "cosine_decrement": (100.0, 0.0),
    "cosine_increment": (100.0, 0.0),
    "cosine_increment_shifted": (100.0, math.pi),
    "cosine_increment_monotone": (100.0, 0.0),
}


@dataclass(frozen=True)
class AlphaStrategy:
    """How the fusion coefficient is produced.

    ``cosine_increment`` is the closed form ``1 - a_min - (a_max - a_min)(1 - cos(pi t/T_c))/2``;
    ``cosine_increment_shifted`` is the generic cosine rule with ``gamma = pi``.
    Both start at the top and fall.  ``cosine_increment_monotone`` is an
    extra, non-canonical variant that rises from ``alpha_min`` to ``alpha_max``
    over ``T_c`` epochs and then holds.
    """

    variant: str = "learned"
    value: float = 0.65
    T_c: float | None = None
    gamma: float | None = None
    alpha_min: float = 0.0
    alpha_max: float = 1.0

    def __post_init__(self):
        if self.variant not in SCHEDULES:
            raise ContractError(f"unknown alpha strategy {self.variant!r}; choose from {SCHEDULES}")
        if self.alpha_min > self.alpha_max:
            raise ContractError("alpha_min must not exceed alpha_max")
        if self.variant == "constant" and not 0.0 <= self.value <= 1.0:
            raise ContractError(f"constant alpha must lie in [0, 1], got {self.value}")
        if self.variant == "learned" and not 0.0 < self.value < 1.0:
            raise ContractError(f"learned alpha initial value must lie in (0, 1), got {self.value}")
        if self.variant in _COSINE_DEFAULTS and self.cycle <= 0:
            raise ContractError(f"T_c must be positive, got {self.cycle}")

    @property
    def cycle(self) -> float:
        if self.T_c is not None:
            return float(self.T_c)
        return _COSINE_DEFAULTS.get(self.variant, (1.0, 0.0))[0]

    @property
    def shift(self) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        return _COSINE_DEFAULTS.get(self.variant, (1.0, 0.0))[1]

    @property
    def is_learned(self) -> bool:
        return self.variant == "learned"

    @property
    def initial_logit(self) -> float:
        return math.log(self.value / (1.0 - self.value))


def logistic(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def alpha_value(strategy: AlphaStrategy, epoch: float, raw: float | None = None) -> float:
    """Fusion coefficient for epoch ``epoch`` (0-based, may be fractional)."""
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    v = strategy.variant
    lo, hi = strategy.alpha_min, strategy.alpha_max
    if v == "constant":
        return float(strategy.value)
    if v == "learned":
        return logistic(strategy.initial_logit if raw is None else float(raw))
    tc = strategy.cycle
    if tc <= 0:
        raise ContractError(f"T_c must be positive, got {tc}")
    if v == "cosine_increment":
        return 1.0 - lo - 0.5 * (hi - lo) * (1.0 - math.cos(epoch / tc * math.pi))
    if v == "cosine_increment_monotone":
        frac = min(epoch / tc, 1.0)
        return lo + 0.5 * (hi - lo) * (1.0 - math.cos(frac * math.pi))
    return lo + 0.5 * (hi - lo) * (1.0 - math.cos(epoch / tc * math.pi + strategy.shift))


@dataclass(frozen=True)
class InstructionConfig:
    adaptive_hidden: int | None = None  # defaults to d_model
    alpha: AlphaStrategy = field(default_factory=AlphaStrategy)
    fuse_encoder: bool = True
    fuse_decoder: bool = True
    per_layer_alpha: bool = False

    def __post_init__(self):
        if not (self.fuse_encoder or self.fuse_decoder):
            raise ContractError("instruction mode needs fuse_encoder or fuse_decoder")


class InstructionBranch(Module):
    """Attention over teacher features followed by the two-layer adapter."""

    def __init__(self, d_model: int, n_heads: int, hidden: int, rng, dtype=np.float32):
        self.attn = MultiHeadAttention(d_model, n_heads, rng, dtype)
        self.adapter = FeedForward(d_model, hidden, rng, dtype)

    def __call__(self, query: Tensor, features: Tensor, mask=None) -> Tensor:
        return adapt_ptm_attention(query, features, self, mask)


def adapt_ptm_attention(query: Tensor, features: Tensor, branch: InstructionBranch,
                        mask=None) -> Tensor:
    if features.ndim != 3 or features.shape[1] == 0:
        raise ContractError("instruction features must be a non-empty (batch, length, d) array")
    return branch.adapter(branch.attn(query, features, features, mask))


def _check_alpha(alpha) -> None:
    a = float(alpha.data) if isinstance(alpha, Tensor) else float(alpha)
    if not 0.0 <= a <= 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {a}")


def fuse(backbone: Tensor, instructed: Tensor, alpha) -> Tensor:
    """(1 - alpha) * backbone + alpha * instructed; alpha a float or scalar Tensor."""
    _check_alpha(alpha)
    if isinstance(alpha, Tensor):
        return T.add(T.mul(backbone, T.sub(1.0, alpha)), T.mul(instructed, alpha))
    return T.add(T.scale(backbone, 1.0 - float(alpha)), T.scale(instructed, float(alpha)))


def fuse_encoder(h: Tensor, self_attn: MultiHeadAttention, branch: InstructionBranch,
                 features: Tensor, alpha, mask=None, feature_mask=None) -> Tensor:
    """Encoder fusion: mix self-attention over ``h`` with the instruction branch."""
    _check_alpha(alpha)
    return fuse(self_attn(h, h, h, mask), branch(h, features, feature_mask), alpha)


def fuse_decoder(s: Tensor, memory: Tensor, cross_attn: MultiHeadAttention,
                 branch: InstructionBranch, features: Tensor, alpha, mask=None,
                 feature_mask=None) -> Tensor:
    """Decoder fusion: ``s`` is the masked self-attention state; it queries both sources."""
    _check_alpha(alpha)
    return fuse(cross_attn(s, memory, memory, mask), branch(s, features, feature_mask), alpha)


class FusionGate(Module):
    """Holds the alpha of one stack (encoder or decoder).

    Scheduled strategies read the epoch set by the trainer; the learned
    strategy keeps a logit per stack (or per layer) on the tape.
    """

    def __init__(self, strategy: AlphaStrategy, n_layers: int, per_layer: bool = False,
                 dtype=np.float32):
        self.strategy = strategy
        self.epoch = 0
        self.per_layer = per_layer
        self.n_layers = n_layers
        self.override: float | None = None
        if strategy.is_learned:
            n = n_layers if per_layer else 1
            self.logits = [Tensor(np.asarray(strategy.initial_logit, dtype=dtype), requires_grad=True)
                           for _ in range(n)]
        else:
            self.logits = []

    def value(self, layer: int = 0):
        if self.override is not None:
            return self.override
        if self.strategy.is_learned:
            return T.sigmoid(self.logits[layer if self.per_layer else 0])
        return alpha_value(self.strategy, self.epoch)

    def current(self) -> float:
        """Mean alpha over the gate's layers, as a plain float."""
        if self.override is not None:
            return self.override
        if self.strategy.is_learned:
            return float(np.mean([logistic(float(l.data)) for l in self.logits]))
        return alpha_value(self.strategy, self.epoch)


def alpha_learn_step(gate: FusionGate, optimizer) -> None:
    """Apply the optimizer to a learned gate (the optimizer must hold its logits)."""
    if not gate.strategy.is_learned:
        raise ContractError(f"alpha strategy {gate.strategy.variant!r} is not learned")
    held = {id(p) for p in optimizer.params}
    if not all(id(l) in held for l in gate.logits):
        raise ContractError("optimizer does not hold the gate's alpha logits")
    optimizer.step()
