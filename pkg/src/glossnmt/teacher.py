"""Frozen teacher encoder that supplies per-token instruction features.

The teacher is a small Transformer encoder pre-trained in-repo with a
masked-token objective on plain text.  Its vocabulary is word-level and
case-folded: gloss tokens are looked up by their lower-case form, so an
uppercase gloss such as ``HOUSE`` reads the teacher's entry for ``house``.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import replace
from typing import Sequence

import numpy as np

from . import tensor as T
from .corpus import PAD_ID, UNK_ID, Vocab, pad_ids
from .errors import ContractError
from .model import EncoderLayer, ModelConfig
from .nn import Embedding, Linear, Module, padding_mask, positional_encoding
from .optim import Adam, inverse_sqrt_lr
from .weights import digest

log = logging.getLogger(__name__)

MASK_ID = UNK_ID  # masked positions are shown to the teacher as <unk>


def teacher_config(vocab_size: int, **overrides) -> ModelConfig:
    base = dict(vocab_size=vocab_size, d_model=64, d_ff=128, n_heads=4, n_enc_layers=2,
                n_dec_layers=0, dropout_rate=0.1, label_smoothing=0.0, max_seq_len=64)
    base.update(overrides)
    return ModelConfig(**base)


class TeacherModel(Module):
    def __init__(self, vocab: Vocab, config: ModelConfig, seed: int = 0):
        if len(vocab) > config.vocab_size:
            raise ContractError(f"teacher vocabulary has {len(vocab)} entries but the config "
                                f"allows {config.vocab_size}")
        self.vocab = vocab
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.embed = Embedding(config.vocab_size, config.d_model, self.rng)
        self.layers = [EncoderLayer(config, self.rng) for _ in range(config.n_enc_layers)]
        self.head = Linear(config.d_model, config.vocab_size, self.rng)
        self.pe = positional_encoding(config.max_seq_len, config.d_model, np.float64)
        self.frozen = False
        self.accuracy: float | None = None

    @property
    def d_model(self) -> int:
        return self.config.d_model

    def freeze(self) -> "TeacherModel":
        for p in self.parameters():
            p.requires_grad = False
            p.grad = None
        self.frozen = True
        return self.eval()

    def ids(self, tokens: Sequence[str]) -> list[int]:
        return self.vocab.encode(t.casefold() for t in tokens)

    def hidden(self, ids: np.ndarray, valid: np.ndarray) -> T.Tensor:
        L = ids.shape[1]
        if L > self.config.max_seq_len:
            raise ContractError(f"sequence length {L} exceeds teacher max_seq_len")
        x = T.scale(self.embed(ids), math.sqrt(self.config.d_model))
        x = x + self.pe[:L].astype(x.dtype)
        x = T.dropout(x, self.config.dropout_rate, self.rng, self.training)
        mask = padding_mask(valid)
        for layer in self.layers:
            x = layer(x, mask)
        return x

    def weight_hash(self) -> str:
        return digest(self.state_dict())

    def metadata(self) -> dict:
        return {"kind": "teacher", "config": self.config.to_dict(), "vocab": self.vocab.to_list(),
                "accuracy": self.accuracy}

    @classmethod
    def from_metadata(cls, meta: dict) -> "TeacherModel":
        teacher = cls(Vocab.from_list(meta["vocab"]), ModelConfig(**meta["config"]))
        teacher.accuracy = meta.get("accuracy")
        return teacher.freeze()


def _mask_batch(ids: np.ndarray, valid: np.ndarray, mask_prob: float, rng: np.random.Generator):
    pick = (rng.random(ids.shape) < mask_prob) & valid
    for i in range(len(ids)):
        if not pick[i].any():  # every sentence contributes at least one target
            pick[i, rng.choice(np.flatnonzero(valid[i]))] = True
    inputs = np.where(pick, MASK_ID, ids)
    targets = np.where(pick, ids, PAD_ID)
    return inputs, targets


def masked_accuracy(teacher: TeacherModel, sentences: Sequence[Sequence[str]], mask_prob: float,
                    seed: int) -> float:
    rng = np.random.default_rng(seed)
    hits = total = 0
    with T.no_grad():
        was = teacher.training
        teacher.eval()
        for start in range(0, len(sentences), 64):
            ids, valid = pad_ids([teacher.ids(s) for s in sentences[start : start + 64]])
            inputs, targets = _mask_batch(ids, valid, mask_prob, rng)
            pred = np.argmax(teacher.head(teacher.hidden(inputs, valid)).data, axis=-1)
            sel = targets != PAD_ID
            hits += int((pred[sel] == targets[sel]).sum())
            total += int(sel.sum())
        teacher.train(was)
    return hits / max(total, 1)


def pretrain_teacher(sentences: Sequence[Sequence[str]], config: ModelConfig | None = None,
                     mask_prob: float = 0.15, epochs: int = 30, seed: int = 0,
                     lr: float = 1e-3, batch_size: int = 32, warmup: int = 50) -> TeacherModel:
    """Train a masked-token teacher on ``sentences`` and return it frozen.

    The final masked-token accuracy (fresh masks, evaluation mode) is stored
    on ``teacher.accuracy``.
    """
    if not sentences:
        raise ContractError("teacher corpus is empty")
    if not 0.0 < mask_prob < 1.0:
        raise ContractError("mask_prob must lie in (0, 1)")
    vocab = Vocab.build([[t.casefold() for t in s] for s in sentences])
    config = config or teacher_config(len(vocab))
    teacher = TeacherModel(vocab, config, seed)
    data = [teacher.ids(s) for s in sentences]
    rng = np.random.default_rng(seed + 1)
    opt = Adam(teacher.trainable_parameters(), lr=lr, betas=(0.9, 0.998))
    step = 0
    for epoch in range(epochs):
        teacher.train()
        order = rng.permutation(len(data))
        losses = []
        for start in range(0, len(order), batch_size):
            ids, valid = pad_ids([data[i] for i in order[start : start + batch_size]])
            inputs, targets = _mask_batch(ids, valid, mask_prob, rng)
            logits = teacher.head(teacher.hidden(inputs, valid))
            loss = T.cross_entropy(logits, targets, 0.0, ignore_index=PAD_ID)
            opt.zero_grad()
            T.backward(loss)
            step += 1
            opt.step(inverse_sqrt_lr(step, lr, warmup))
            losses.append(float(loss.data))
        log.info("teacher epoch %d loss %.4f", epoch, float(np.mean(losses)))
    teacher.accuracy = masked_accuracy(teacher, sentences, mask_prob, seed + 2)
    return teacher.freeze()


def encode_instruction(teacher: TeacherModel, tokens: Sequence[str]) -> np.ndarray:
    """Last-layer teacher features, shape (len(tokens), teacher d_model); off the tape."""
    if len(tokens) == 0:
        raise ContractError("cannot encode an empty token sequence")
    ids = np.asarray([teacher.ids(tokens)], dtype=np.int64)
    with T.no_grad():
        was = teacher.training
        teacher.eval()
        out = teacher.hidden(ids, np.ones_like(ids, dtype=bool)).data[0]
        teacher.train(was)
    return out.copy()


def encode_corpus(teacher: TeacherModel, sequences: Sequence[Sequence[str]]) -> list[np.ndarray]:
    """``encode_instruction`` for many sentences; equal-length sentences share one pass."""
    by_len: dict[int, list[int]] = defaultdict(list)
    for i, s in enumerate(sequences):
        if not s:
            raise ContractError(f"sentence {i} is empty")
        by_len[len(s)].append(i)
    out: list[np.ndarray | None] = [None] * len(sequences)
    with T.no_grad():
        was = teacher.training
        teacher.eval()
        for _, idx in sorted(by_len.items()):
            ids = np.asarray([teacher.ids(sequences[i]) for i in idx], dtype=np.int64)
            feats = teacher.hidden(ids, np.ones_like(ids, dtype=bool)).data
            for row, i in enumerate(idx):
                out[i] = feats[row].copy()
        teacher.train(was)
    return out  # type: ignore[return-value]


def with_vocab_size(config: ModelConfig, vocab_size: int) -> ModelConfig:
    return replace(config, vocab_size=vocab_size)
