"""Vocabulary, parallel gloss/text corpora, and batching."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorpusError

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
SPECIALS = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3

Pair = tuple[tuple[str, ...], tuple[str, ...]]


def tokenize(line: str) -> tuple[str, ...]:
    return tuple(line.split())


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


class Vocab:
    """Token <-> id map with the four specials at ids 0-3."""

    def __init__(self, tokens: Iterable[str] = (), counter: Counter | None = None):
        self.itos: list[str] = list(SPECIALS)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)
        self.counter = Counter() if counter is None else Counter(counter)

    @classmethod
    def build(cls, sequences: Iterable[Sequence[str]]) -> "Vocab":
        """Vocabulary ordered by descending frequency, ties broken lexically."""
        counter = Counter(tok for seq in sequences for tok in seq)
        ordered = sorted(counter, key=lambda t: (-counter[t], t))
        return cls(ordered, counter)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int], strip: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip and i == EOS_ID:
                break
            if strip and i in (PAD_ID, BOS_ID):
                continue
            out.append(self.itos[i] if 0 <= i < len(self.itos) else UNK)
        return out

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, itos: Sequence[str]) -> "Vocab":
        if tuple(itos[:4]) != SPECIALS:
            raise CorpusError("vocabulary does not start with the special tokens")
        return cls(itos[4:])


@dataclass(frozen=True)
class ParallelCorpus:
    """Aligned (gloss tokens, text tokens) pairs; immutable."""

    pairs: tuple[Pair, ...]

    def __post_init__(self):
        pairs = tuple((tuple(g), tuple(s)) for g, s in self.pairs)
        for i, (g, s) in enumerate(pairs):
            if not g or not s:
                raise CorpusError(f"pair {i} has an empty side")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def glosses(self) -> list[tuple[str, ...]]:
        return [g for g, _ in self.pairs]

    @property
    def texts(self) -> list[tuple[str, ...]]:
        return [s for _, s in self.pairs]

    @cached_property
    def gloss_vocab(self) -> frozenset[str]:
        return frozenset(t for g in self.glosses for t in g)

    @cached_property
    def text_vocab(self) -> frozenset[str]:
        return frozenset(t for s in self.texts for t in s)

    @cached_property
    def gloss_counter(self) -> Counter:
        return Counter(t for g in self.glosses for t in g)

    @cached_property
    def joint_vocab(self) -> Vocab:
        return Vocab.build(self.glosses + self.texts)

    def extend(self, extra: Iterable[Pair]) -> "ParallelCorpus":
        return ParallelCorpus(self.pairs + tuple(extra))

    def subset(self, indices: Iterable[int]) -> "ParallelCorpus":
        return ParallelCorpus(tuple(self.pairs[i] for i in indices))


def _read_lines(path: Path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{path}: not valid UTF-8 ({exc})") from None


def load_parallel(gloss_path, text_path) -> ParallelCorpus:
    """Read line-aligned gloss/text files.

    Gloss case is preserved; text is lowercased.
    """
    glosses = _read_lines(gloss_path)
    texts = _read_lines(text_path)
    if len(glosses) != len(texts):
        raise CorpusError(f"line count mismatch: {gloss_path} has {len(glosses)} lines, "
                          f"{text_path} has {len(texts)}")
    if not glosses:
        raise CorpusError(f"empty corpus: {gloss_path} / {text_path}")
    pairs = []
    for lineno, (g, s) in enumerate(zip(glosses, texts), start=1):
        gt, st = tokenize(g), tokenize(s.lower())
        if not gt:
            raise CorpusError(f"{gloss_path}:{lineno}: empty line")
        if not st:
            raise CorpusError(f"{text_path}:{lineno}: empty line")
        pairs.append((gt, st))
    return ParallelCorpus(tuple(pairs))


def load_prefix(prefix) -> ParallelCorpus:
    prefix = str(prefix)
    return load_parallel(prefix + ".gloss", prefix + ".text")


def save_parallel(corpus: ParallelCorpus, prefix) -> tuple[Path, Path]:
    prefix = str(prefix)
    gpath, tpath = Path(prefix + ".gloss"), Path(prefix + ".text")
    gpath.parent.mkdir(parents=True, exist_ok=True)
    gpath.write_text("".join(detokenize(g) + "\n" for g in corpus.glosses), encoding="utf-8")
    tpath.write_text("".join(detokenize(s) + "\n" for s in corpus.texts), encoding="utf-8")
    return gpath, tpath


@dataclass
class Batch:
    src: np.ndarray        # (B, S) source ids, PAD-filled
    src_valid: np.ndarray  # (B, S) True on real tokens
    tgt_in: np.ndarray     # (B, T) <bos> + target
    tgt_out: np.ndarray    # (B, T) target + <eos>
    tgt_valid: np.ndarray  # (B, T)
    index: np.ndarray      # positions of the rows in the source corpus
    features: np.ndarray | None = field(default=None)  # (B, S, d_teacher)

    def __len__(self) -> int:
        return len(self.index)


def pad_ids(seqs: Sequence[Sequence[int]], pad: int = PAD_ID) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), pad, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out, out != pad


def collate(src_ids: Sequence[Sequence[int]], tgt_ids: Sequence[Sequence[int]],
            index: Sequence[int], features: Sequence[np.ndarray] | None = None) -> Batch:
    src, src_valid = pad_ids(src_ids)
    tgt_in, _ = pad_ids([[BOS_ID, *t] for t in tgt_ids])
    tgt_out, tgt_valid = pad_ids([[*t, EOS_ID] for t in tgt_ids])
    feats = None
    if features is not None:
        d = features[0].shape[-1]
        feats = np.zeros(src.shape + (d,), dtype=features[0].dtype)
        for i, f in enumerate(features):
            feats[i, : len(f)] = f
    return Batch(src, src_valid, tgt_in, tgt_out, tgt_valid, np.asarray(index), feats)


def make_batches(corpus: ParallelCorpus, vocab: Vocab, batch_size: int, seed: int | None = 0,
                 features: Sequence[np.ndarray] | None = None) -> list[Batch]:
    """Shuffle (when ``seed`` is not None) and cut into padded batches."""
    if batch_size < 1:
        raise CorpusError("batch_size must be >= 1")
    order = np.arange(len(corpus))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(corpus))
    batches = []
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        src = [vocab.encode(corpus.pairs[i][0]) for i in idx]
        tgt = [vocab.encode(corpus.pairs[i][1]) for i in idx]
        feats = [features[i] for i in idx] if features is not None else None
        batches.append(collate(src, tgt, idx, feats))
    return batches
