"""Greedy and beam-search decoding.

Both decoders are written against a step function: given a list of token
prefixes (each starting with ``<bos>``), return an array of next-token
log-probabilities, one row per prefix.  ``model_step_fn`` adapts a
``TranslationModel`` to that interface.  Hypothesis scores are summed
log-probabilities divided by the number of generated tokens (``<eos>``
included).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .corpus import BOS_ID, EOS_ID
from .errors import ContractError

StepFn = Callable[[Sequence[Sequence[int]]], np.ndarray]


@dataclass
class Hypothesis:
    tokens: list[int]  # generated tokens, without <bos>, including <eos> when finished
    logprob: float
    truncated: bool = False

    @property
    def score(self) -> float:
        return self.logprob / max(len(self.tokens), 1)

    @property
    def output(self) -> list[int]:
        return self.tokens[:-1] if self.tokens and self.tokens[-1] == EOS_ID else list(self.tokens)


def greedy_search(step: StepFn, max_len: int, bos: int = BOS_ID, eos: int = EOS_ID) -> Hypothesis:
    tokens: list[int] = []
    logprob = 0.0
    for _ in range(max_len):
        row = np.asarray(step([[bos, *tokens]])[0], dtype=np.float64)
        tok = int(np.argmax(row))
        tokens.append(tok)
        logprob += float(row[tok])
        if tok == eos:
            return Hypothesis(tokens, logprob)
    return Hypothesis(tokens, logprob, truncated=True)


def beam_search(step: StepFn, beam_size: int, max_len: int, bos: int = BOS_ID,
                eos: int = EOS_ID) -> Hypothesis:
    """Best length-normalised hypothesis found with ``beam_size`` live beams.

    Live beams are pruned by cumulative log-probability; the search stops
    once ``beam_size`` hypotheses have finished.  For ``beam_size > 1`` the
    greedy hypothesis is also considered, so the result never scores below
    greedy decoding.  If nothing finishes within ``max_len`` the best
    partial hypothesis is returned with ``truncated=True``.
    """
    if beam_size < 1:
        raise ContractError("beam_size must be >= 1")
    if max_len < 1:
        raise ContractError("max_len must be >= 1")
    beams: list[tuple[list[int], float]] = [([], 0.0)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        rows = np.asarray(step([[bos, *toks] for toks, _ in beams]), dtype=np.float64)
        cands = []
        for b, (_, lp) in enumerate(beams):
            row = rows[b]
            # highest log-prob first, lowest token id on ties (matches argmax)
            top = np.argsort(-row, kind="stable")[:beam_size]
            cands.extend((lp + float(row[t]), b, int(t)) for t in top)
        cands.sort(key=lambda c: -c[0])  # stable: earlier beam wins ties
        live = []
        for lp, b, t in cands:
            toks = beams[b][0] + [t]
            if t == eos:
                finished.append(Hypothesis(toks, lp))
            else:
                live.append((toks, lp))
            if len(live) == beam_size or len(finished) >= beam_size:
                break
        beams = live
        if len(finished) >= beam_size or not beams:
            break
    pool = finished or [Hypothesis(toks, lp, truncated=True) for toks, lp in beams]
    best = max(pool, key=lambda h: h.score)  # first maximum kept on ties
    if beam_size > 1:
        greedy = greedy_search(step, max_len, bos, eos)
        if greedy.score > best.score:
            best = greedy
    return best


# -- model adapters ----------------------------------------------------------

def model_step_fn(model, src_ids: Sequence[int], features: np.ndarray | None = None) -> StepFn:
    """Step function for one source sentence; the encoder runs once."""
    src = np.asarray([list(src_ids)], dtype=np.int64)
    valid = np.ones_like(src, dtype=bool)
    feats = None
    if features is not None:
        feats = np.asarray(features)[None]
    with T.no_grad():
        model.eval()
        proj = model.project_features(feats) if model.uses_instruction else None
        memory = model.encode(src, valid, proj)

    def step(prefixes):
        n = len(prefixes)
        width = max(len(p) for p in prefixes)
        tgt = np.zeros((n, width), dtype=np.int64)
        last = np.empty(n, dtype=np.int64)
        for i, p in enumerate(prefixes):
            tgt[i, : len(p)] = p
            last[i] = len(p) - 1
        with T.no_grad():
            mem = T.Tensor(np.repeat(memory.data, n, axis=0))
            f = None if proj is None else T.Tensor(np.repeat(proj.data, n, axis=0))
            logits = model.decode(tgt, mem, np.repeat(valid, n, axis=0), f).data
        rows = logits[np.arange(n), last].astype(np.float64)
        return rows - np.logaddexp.reduce(rows, axis=-1, keepdims=True)

    return step


def translate_ids(model, src_ids: Sequence[int], features=None, beam_size: int = 5,
                  max_len: int | None = None) -> Hypothesis:
    if max_len is None:
        max_len = min(model.config.max_seq_len, 2 * len(src_ids) + 10)
    max_len = min(max_len, model.config.max_seq_len)
    step = model_step_fn(model, src_ids, features)
    if beam_size == 1:
        return greedy_search(step, max_len)
    return beam_search(step, beam_size, max_len)


def greedy_batch(model, src: np.ndarray, src_valid: np.ndarray, features=None,
                 max_len: int | None = None) -> list[list[int]]:
    """Batched greedy decoding; returns token ids without <bos>/<eos>."""
    B = src.shape[0]
    if max_len is None:
        max_len = min(model.config.max_seq_len, 2 * src.shape[1] + 10)
    max_len = min(max_len, model.config.max_seq_len)
    with T.no_grad():
        model.eval()
        proj = model.project_features(features) if model.uses_instruction else None
        memory = model.encode(src, src_valid, proj)
        out = np.full((B, 1), BOS_ID, dtype=np.int64)
        done = np.zeros(B, dtype=bool)
        for _ in range(max_len):
            logits = model.decode(out, memory, src_valid, proj).data[:, -1]
            nxt = np.argmax(logits, axis=-1)
            nxt[done] = EOS_ID
            out = np.concatenate([out, nxt[:, None]], axis=1)
            done |= nxt == EOS_ID
            if done.all():
                break
    results = []
    for row in out[:, 1:]:
        toks = []
        for t in row:
            if t == EOS_ID:
                break
            toks.append(int(t))
        results.append(toks)
    return results

