"""Training loop, dev-set selection and corpus-level translation."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import tensor as T
from .augmentation import DEFAULT_TAU_C, DEFAULT_TAU_R, DEFAULT_THETA, AugmentationReport, augment
from .corpus import PAD_ID, ParallelCorpus, Vocab, make_batches, pad_ids
from .decoding import greedy_batch, translate_ids
from .errors import ConfigError, ContractError, NonFiniteGradientError, TrainingDivergedError
from .instruction import InstructionConfig
from .metrics import EvalResult, bleu, evaluate
from .model import ModelConfig, TranslationModel, instruction_from_dict, model_from_metadata
from .optim import Adam, inverse_sqrt_lr
from .teacher import TeacherModel, encode_corpus

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "TrainLog", "EpochRecord", "train", "translate_corpus",
           "evaluate_model", "model_from_metadata"]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    warmup_steps: int = 100
    max_epochs: int = 60
    batch_size: int = 32
    dropout: float = 0.45
    label_smoothing: float = 0.3
    weight_decay: float = 1e-3
    beam_size: int = 5
    early_stop_patience: int = 10
    seed: int = 0
    # backbone shape
    d_model: int = 64
    d_ff: int = 256
    n_heads: int = 4
    n_layers: int = 2
    max_seq_len: int = 64
    share_embeddings: bool = False
    tie_output: bool = False
    # instruction fusion; None trains the plain backbone
    instruction: InstructionConfig | None = None
    # text-to-text upsampling
    augmentation: bool = False
    theta: tuple[float, ...] = DEFAULT_THETA
    tau_r: float = DEFAULT_TAU_R
    tau_c: float = DEFAULT_TAU_C
    # stop as soon as dev BLEU-4 reaches this value
    target_bleu: float | None = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be >= 1")
        if self.beam_size < 1:
            raise ConfigError("beam_size must be >= 1")
        if self.max_epochs < 0 or self.batch_size < 1 or self.early_stop_patience < 1:
            raise ConfigError("max_epochs >= 0, batch_size >= 1 and early_stop_patience >= 1 required")
        if len(self.theta) != 4:
            raise ConfigError("theta needs four weights")

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size=vocab_size, d_model=self.d_model, d_ff=self.d_ff,
                           n_heads=self.n_heads, n_enc_layers=self.n_layers,
                           n_dec_layers=self.n_layers, dropout_rate=self.dropout,
                           label_smoothing=self.label_smoothing, max_seq_len=self.max_seq_len,
                           share_embeddings=self.share_embeddings, tie_output=self.tie_output)

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theta"] = list(self.theta)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["instruction"] = instruction_from_dict(d.get("instruction"))
        if "theta" in d:
            d["theta"] = tuple(d["theta"])
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    dev_bleu4: float | None
    alpha_enc: float | None
    alpha_dec: float | None
    lr: float


CSV_HEADER = ("epoch", "loss", "dev_bleu4", "alpha_enc", "alpha_dec", "lr")


def _fmt(x) -> str:
    return "" if x is None else repr(float(x)) if isinstance(x, float) else str(x)


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_bleu4: float | None = None
    stopped_early: bool = False
    teacher_hash: str | None = None
    augmentation: AugmentationReport | None = None

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_HEADER])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        out = {"epochs": len(self.records), "best_epoch": self.best_epoch,
               "best_dev_bleu4": self.best_bleu4, "stopped_early": self.stopped_early,
               "teacher_hash": self.teacher_hash}
        if self.augmentation is not None:
            out["augmentation"] = self.augmentation.to_dict()
        return out


# -- features and translation ---------------------------------------------------

def corpus_features(model: TranslationModel, teacher: TeacherModel | None,
                    glosses: Sequence[Sequence[str]]) -> list[np.ndarray] | None:
    if not model.uses_instruction:
        return None
    if teacher is None:
        raise ContractError("instruction fusion needs a teacher")
    return encode_corpus(teacher, glosses)


def _pad_features(feats: Sequence[np.ndarray], width: int) -> np.ndarray:
    out = np.zeros((len(feats), width, feats[0].shape[-1]), dtype=feats[0].dtype)
    for i, f in enumerate(feats):
        out[i, : len(f)] = f
    return out


def translate_corpus(model: TranslationModel, glosses: Sequence[Sequence[str]],
                     teacher: TeacherModel | None = None, beam_size: int = 1,
                     batch_size: int = 64, features=None) -> list[list[str]]:
    """Translate gloss sequences; beam 1 runs batched greedy decoding."""
    if model.vocab is None:
        raise ContractError("model has no vocabulary attached")
    vocab = model.vocab
    if features is None:
        features = corpus_features(model, teacher, glosses)
    out: list[list[str]] = []
    if beam_size == 1:
        for start in range(0, len(glosses), batch_size):
            chunk = glosses[start : start + batch_size]
            src, valid = pad_ids([vocab.encode(g) for g in chunk])
            feats = None
            if features is not None:
                feats = _pad_features(features[start : start + batch_size], src.shape[1])
            out += [vocab.decode(ids) for ids in greedy_batch(model, src, valid, feats)]
        return out
    for i, g in enumerate(glosses):
        f = None if features is None else features[i]
        hyp = translate_ids(model, vocab.encode(g), f, beam_size=beam_size)
        out.append(vocab.decode(hyp.output))
    return out


def evaluate_model(model: TranslationModel, corpus: ParallelCorpus,
                   teacher: TeacherModel | None = None, beam_size: int = 1) -> EvalResult:
    hyps = translate_corpus(model, corpus.glosses, teacher, beam_size)
    return evaluate(hyps, corpus.texts)


# -- training ---------------------------------------------------------------------

def _snapshot(model: TranslationModel) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in model.state_dict().items()}


def train(train_corpus: ParallelCorpus, dev_corpus: ParallelCorpus | None,
          teacher: TeacherModel | None, config: TrainConfig
          ) -> tuple[TranslationModel, TrainLog]:
    """Train a translation model; returns the best-dev checkpoint and its log."""
    if not len(train_corpus):
        raise ContractError("training corpus is empty")
    tlog = TrainLog()
    if config.augmentation:
        train_corpus, tlog.augmentation = augment(train_corpus, config.theta, config.tau_r,
                                                  config.tau_c, seed=config.seed)
    if config.instruction is not None:
        if teacher is None:
            raise ContractError("instruction fusion needs a teacher")
        if not teacher.frozen:
            raise ContractError("the teacher must be frozen before training")
        tlog.teacher_hash = teacher.weight_hash()

    vocab = Vocab.build(list(train_corpus.glosses) + list(train_corpus.texts))
    model = TranslationModel(config.model_config(len(vocab)), config.instruction,
                             teacher.d_model if teacher is not None and config.instruction else None,
                             seed=config.seed)
    model.vocab = vocab
    train_feats = corpus_features(model, teacher, train_corpus.glosses)
    dev_feats = None
    if dev_corpus is not None and len(dev_corpus):
        dev_feats = corpus_features(model, teacher, dev_corpus.glosses)
    else:
        dev_corpus = None

    names, params = zip(*[(n, p) for n, p in model.named_parameters() if p.requires_grad])
    opt = Adam(list(params), lr=config.lr, betas=(0.9, 0.998), weight_decay=config.weight_decay,
               names=list(names))
    step = 0
    best_state, since_best = None, 0
    for epoch in range(config.max_epochs):
        model.set_epoch(epoch)
        model.train()
        batches = make_batches(train_corpus, vocab, config.batch_size,
                               seed=config.seed * 100_003 + epoch, features=train_feats)
        total, tokens, lr = 0.0, 0, config.lr
        for b_idx, batch in enumerate(batches):
            logits = model(batch.src, batch.src_valid, batch.tgt_in, batch.features)
            loss = model.loss(logits, batch.tgt_out, PAD_ID)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch, b_idx, model.alphas(), value)
            opt.zero_grad()
            T.backward(loss)
            step += 1
            lr = inverse_sqrt_lr(step, config.lr, config.warmup_steps)
            try:
                opt.step(lr)
            except NonFiniteGradientError as exc:
                raise TrainingDivergedError(epoch, b_idx, model.alphas(), value) from exc
            n = int(batch.tgt_valid.sum())
            total += value * n
            tokens += n
        dev_bleu = None
        if dev_corpus is not None:
            hyps = translate_corpus(model, dev_corpus.glosses, beam_size=1, features=dev_feats)
            dev_bleu = bleu(hyps, dev_corpus.texts)[3]
        alphas = model.alphas()
        tlog.records.append(EpochRecord(epoch, total / max(tokens, 1), dev_bleu,
                                        alphas["encoder"], alphas["decoder"], lr))
        log.info("epoch %d loss %.4f dev_bleu4 %s", epoch, total / max(tokens, 1), dev_bleu)
        if dev_bleu is None:
            continue
        if tlog.best_bleu4 is None or dev_bleu > tlog.best_bleu4:
            tlog.best_bleu4, tlog.best_epoch = dev_bleu, epoch
            best_state, since_best = _snapshot(model), 0
        else:
            since_best += 1
        if config.target_bleu is not None and dev_bleu >= config.target_bleu:
            break
        if since_best >= config.early_stop_patience:
            tlog.stopped_early = True
            break

    if best_state is not None:
        model.load_state_dict(best_state)
        model.set_epoch(tlog.best_epoch)
    elif tlog.records:
        tlog.best_epoch = tlog.records[-1].epoch
    model.eval()
    if tlog.teacher_hash is not None and teacher.weight_hash() != tlog.teacher_hash:
        raise ContractError("teacher weights changed during training")
    return model, tlog
