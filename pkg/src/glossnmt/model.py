"""Post-norm Transformer encoder-decoder with optional instruction fusion."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .corpus import Vocab
from .errors import ContractError
from .instruction import (AlphaStrategy, FusionGate, InstructionBranch, InstructionConfig, fuse_decoder,
                          fuse_encoder)
from .nn import (Embedding, FeedForward, LayerNorm, Linear, Module, MultiHeadAttention,
                 causal_mask, padding_mask, positional_encoding)
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    d_ff: int = 256
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    dropout_rate: float = 0.45
    label_smoothing: float = 0.3
    max_seq_len: int = 64
    share_embeddings: bool = False
    tie_output: bool = False

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ContractError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractError("dropout_rate must lie in [0, 1)")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ContractError("label_smoothing must lie in [0, 1)")
        if min(self.vocab_size, self.d_model, self.d_ff, self.max_seq_len) < 1:
            raise ContractError("sizes must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Instructed:
    """Per-call instruction context for one stack."""

    features: Tensor  # (B, Ti, d_model), off the tape
    mask: np.ndarray | None  # attention mask over feature positions
    gate: FusionGate


class EncoderLayer(Module):
    def __init__(self, cfg: ModelConfig, rng, dtype=np.float32, branch_hidden: int | None = None):
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng, dtype)
        self.norm1 = LayerNorm(cfg.d_model, dtype)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ff, rng, dtype)
        self.norm2 = LayerNorm(cfg.d_model, dtype)
        self.branch = (InstructionBranch(cfg.d_model, cfg.n_heads, branch_hidden, rng, dtype)
                       if branch_hidden else None)
        self.p = cfg.dropout_rate
        self.rng = rng

    def __call__(self, x: Tensor, mask=None, instr: Instructed | None = None,
                 alpha=None) -> Tensor:
        if instr is not None and self.branch is not None:
            att = fuse_encoder(x, self.self_attn, self.branch, instr.features, alpha, mask, instr.mask)
        else:
            att = self.self_attn(x, x, x, mask)
        x = self.norm1(x + T.dropout(att, self.p, self.rng, self.training))
        return self.norm2(x + T.dropout(self.ffn(x), self.p, self.rng, self.training))


class DecoderLayer(Module):
    def __init__(self, cfg: ModelConfig, rng, dtype=np.float32, branch_hidden: int | None = None):
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng, dtype)
        self.norm1 = LayerNorm(cfg.d_model, dtype)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng, dtype)
        self.norm2 = LayerNorm(cfg.d_model, dtype)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ff, rng, dtype)
        self.norm3 = LayerNorm(cfg.d_model, dtype)
        self.branch = (InstructionBranch(cfg.d_model, cfg.n_heads, branch_hidden, rng, dtype)
                       if branch_hidden else None)
        self.p = cfg.dropout_rate
        self.rng = rng

    def __call__(self, s: Tensor, memory: Tensor, self_mask=None, memory_mask=None,
                 instr: Instructed | None = None, alpha=None) -> Tensor:
        drop = lambda t: T.dropout(t, self.p, self.rng, self.training)  # noqa: E731
        s = self.norm1(s + drop(self.self_attn(s, s, s, self_mask)))
        if instr is not None and self.branch is not None:
            cross = fuse_decoder(s, memory, self.cross_attn, self.branch, instr.features, alpha,
                                 memory_mask, instr.mask)
        else:
            cross = self.cross_attn(s, memory, memory, memory_mask)
        s = self.norm2(s + drop(cross))
        return self.norm3(s + drop(self.ffn(s)))


class TranslationModel(Module):
    """Encoder-decoder over one joint vocabulary.

    With ``instruction`` set, every layer of the enabled stacks owns its own
    instruction branch, and one gate per stack supplies alpha.
    """

    def __init__(self, config: ModelConfig, instruction: InstructionConfig | None = None,
                 teacher_dim: int | None = None, seed: int = 0, dtype=np.float32):
        self.config = config
        self.instruction = instruction
        self.rng = np.random.default_rng(seed)
        rng = self.rng
        d = config.d_model
        self.src_embed = Embedding(config.vocab_size, d, rng, dtype)
        self.tgt_embed = None if config.share_embeddings else Embedding(config.vocab_size, d, rng, dtype)
        hidden = None
        if instruction is not None:
            hidden = instruction.adaptive_hidden or d
        enc_hidden = hidden if instruction is not None and instruction.fuse_encoder else None
        dec_hidden = hidden if instruction is not None and instruction.fuse_decoder else None
        self.encoder = [EncoderLayer(config, rng, dtype, enc_hidden) for _ in range(config.n_enc_layers)]
        self.decoder = [DecoderLayer(config, rng, dtype, dec_hidden) for _ in range(config.n_dec_layers)]
        self.output = None if config.tie_output else Linear(d, config.vocab_size, rng, dtype)
        self.teacher_dim = teacher_dim
        self.feature_proj = None
        self.enc_gate = self.dec_gate = None
        if instruction is not None:
            if teacher_dim is not None and teacher_dim != d:
                self.feature_proj = Linear(teacher_dim, d, rng, dtype)
            if instruction.fuse_encoder:
                self.enc_gate = FusionGate(instruction.alpha, config.n_enc_layers,
                                           instruction.per_layer_alpha, dtype)
            if instruction.fuse_decoder:
                self.dec_gate = FusionGate(instruction.alpha, config.n_dec_layers,
                                           instruction.per_layer_alpha, dtype)
        self.pe = positional_encoding(config.max_seq_len, d, np.float64)
        self.vocab = None  # attached by the trainer

    # -- helpers -----------------------------------------------------------
    @property
    def uses_instruction(self) -> bool:
        return self.instruction is not None

    def set_epoch(self, epoch: int) -> None:
        for gate in (self.enc_gate, self.dec_gate):
            if gate is not None:
                gate.epoch = epoch

    def alphas(self) -> dict[str, float | None]:
        return {"encoder": None if self.enc_gate is None else self.enc_gate.current(),
                "decoder": None if self.dec_gate is None else self.dec_gate.current()}

    def _embed(self, table: Embedding, ids: np.ndarray) -> Tensor:
        L = ids.shape[1]
        if L > self.config.max_seq_len:
            raise ContractError(f"sequence length {L} exceeds max_seq_len={self.config.max_seq_len}")
        x = T.scale(table(ids), math.sqrt(self.config.d_model))
        x = x + self.pe[:L].astype(x.dtype)
        return T.dropout(x, self.config.dropout_rate, self.rng, self.training)

    def project_features(self, features) -> Tensor | None:
        """Teacher features as a constant tensor at model width (or None)."""
        if features is None:
            return None
        raw = features.data if isinstance(features, Tensor) else features
        feats = Tensor(np.asarray(raw, dtype=self.src_embed.table.dtype))
        return self.feature_proj(feats) if self.feature_proj is not None else feats

    def _instructed(self, gate, feats, mask, use_instruction):
        if not use_instruction or gate is None:
            return None
        if feats is None:
            raise ContractError("instruction fusion is enabled but no teacher features were given")
        return Instructed(feats, mask, gate)

    # -- forward -----------------------------------------------------------
    def encode(self, src, src_valid, feats: Tensor | None = None,
               use_instruction: bool = True) -> Tensor:
        """Encoder output ``H_E'``; ``feats`` as returned by ``project_features``."""
        mask = padding_mask(src_valid)
        instr = self._instructed(self.enc_gate, feats, mask, use_instruction)
        x = self._embed(self.src_embed, np.asarray(src))
        for i, layer in enumerate(self.encoder):
            x = layer(x, mask, instr, instr.gate.value(i) if instr else None)
        return x

    def decode(self, tgt_in, memory: Tensor, src_valid, feats: Tensor | None = None,
               use_instruction: bool = True) -> Tensor:
        """Next-token logits for every target prefix position."""
        tgt_in = np.asarray(tgt_in)
        mem_mask = padding_mask(src_valid)
        instr = self._instructed(self.dec_gate, feats, mem_mask, use_instruction)
        table = self.src_embed if self.tgt_embed is None else self.tgt_embed
        s = self._embed(table, tgt_in)
        self_mask = causal_mask(tgt_in.shape[1])
        for i, layer in enumerate(self.decoder):
            s = layer(s, memory, self_mask, mem_mask, instr, instr.gate.value(i) if instr else None)
        if self.output is None:
            return T.matmul(s, T.transpose(table.table, (1, 0)))
        return self.output(s)

    def forward(self, src, src_valid, tgt_in, features=None, use_instruction: bool = True) -> Tensor:
        feats = self.project_features(features) if use_instruction and self.uses_instruction else None
        memory = self.encode(src, src_valid, feats, use_instruction)
        return self.decode(tgt_in, memory, src_valid, feats, use_instruction)

    __call__ = forward

    def loss(self, logits: Tensor, tgt_out: np.ndarray, pad_id: int = 0) -> Tensor:
        return T.cross_entropy(logits, tgt_out, self.config.label_smoothing, ignore_index=pad_id)

    # -- persistence -------------------------------------------------------
    def metadata(self) -> dict:
        instr = None
        if self.instruction is not None:
            instr = asdict(self.instruction)
        epoch = 0
        for gate in (self.enc_gate, self.dec_gate):
            if gate is not None:
                epoch = gate.epoch
        return {"kind": "translation", "config": self.config.to_dict(), "instruction": instr,
                "teacher_dim": self.teacher_dim, "epoch": epoch,
                "dtype": str(self.src_embed.table.dtype),
                "vocab": None if self.vocab is None else self.vocab.to_list()}


def instruction_from_dict(d: dict | None) -> InstructionConfig | None:
    if d is None:
        return None
    d = dict(d)
    d["alpha"] = AlphaStrategy(**d["alpha"])
    return InstructionConfig(**d)


def model_from_metadata(meta: dict) -> TranslationModel:
    model = TranslationModel(ModelConfig(**meta["config"]), instruction_from_dict(meta["instruction"]),
                             meta.get("teacher_dim"), dtype=np.dtype(meta.get("dtype", "float32")))
    model.set_epoch(meta.get("epoch", 0))
    if meta.get("vocab") is not None:
        model.vocab = Vocab.from_list(meta["vocab"])
    return model
