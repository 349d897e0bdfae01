"""Corpus BLEU-1..4, sentence-mean ROUGE-L (F1) and exact-match METEOR, on a 0-100 scale."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Sequence

from .errors import ContractError

BLEU_EPS = 1e-9

Tokens = Sequence[str]


def _as_tokens(x) -> tuple[str, ...]:
    return tuple(x.split()) if isinstance(x, str) else tuple(x)


def _check(hyps, refs):
    if len(hyps) != len(refs):
        raise ContractError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not hyps:
        raise ContractError("nothing to score")
    return [_as_tokens(h) for h in hyps], [_as_tokens(r) for r in refs]


def _ngrams(tokens: tuple[str, ...], n: int) -> Counter:
    return Counter(tokens[i : i + n] for i in range(len(tokens) - n + 1))


def bleu(hyps, refs, max_n: int = 4) -> list[float]:
    """Cumulative corpus BLEU-1..max_n (uniform weights, single reference).

    Zero n-gram precisions are replaced by ``BLEU_EPS``.  When not a single
    unigram matches, every score is exactly 0.
    """
    hyps, refs = _check(hyps, refs)
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for h, r in zip(hyps, refs):
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_n + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    if matches[0] == 0 or hyp_len == 0:
        return [0.0] * max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    scores, log_sum = [], 0.0
    for n in range(max_n):
        p = matches[n] / totals[n] if matches[n] > 0 else BLEU_EPS
        log_sum += math.log(p)
        scores.append(100.0 * bp * math.exp(log_sum / (n + 1)))
    return scores


def _lcs(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(hyps, refs) -> float:
    """Mean sentence-level LCS F1, times 100."""
    hyps, refs = _check(hyps, refs)
    total = 0.0
    for h, r in zip(hyps, refs):
        lcs = _lcs(h, r)
        if lcs:
            p, rec = lcs / len(h), lcs / len(r)
            total += 2 * p * rec / (p + rec)
    return 100.0 * total / len(hyps)


def _min_chunks(h: tuple[str, ...], r: tuple[str, ...]) -> tuple[int, int]:
    """Maximum exact-match alignment size, and the fewest chunks among such alignments.

    A chunk is a run of matches adjacent in both hypothesis and reference.
    """
    hc, rc = Counter(h), Counter(r)
    need = {w: min(hc[w], rc[w]) for w in hc if w in rc}
    matches = sum(need.values())
    if not matches:
        return 0, 0
    positions = {w: tuple(j for j, t in enumerate(r) if t == w) for w in need}
    # remaining hyp occurrences of each word at and after position i
    remaining = [dict() for _ in range(len(h) + 1)]
    for i in range(len(h) - 1, -1, -1):
        remaining[i] = dict(remaining[i + 1])
        remaining[i][h[i]] = remaining[i].get(h[i], 0) + 1

    words = sorted(need)
    widx = {w: k for k, w in enumerate(words)}

    @lru_cache(maxsize=None)
    def best(i: int, used: int, prev: int, left: tuple[int, ...]) -> float:
        # left[k]: matches of words[k] still to place; prev: ref index of the
        # match at hyp position i-1, or -2 when i-1 was unmatched
        if i == len(h):
            return 0 if not any(left) else math.inf
        w = h[i]
        if w not in widx:
            return best(i + 1, used, -2, left)
        k = widx[w]
        out = math.inf
        if remaining[i + 1].get(w, 0) >= left[k]:  # skipping still leaves enough
            out = best(i + 1, used, -2, left)
        if left[k] > 0:
            nl = left[:k] + (left[k] - 1,) + left[k + 1 :]
            for j in positions[w]:
                if used >> j & 1:
                    continue
                cost = 0 if prev >= 0 and j == prev + 1 else 1
                out = min(out, cost + best(i + 1, used | (1 << j), j, nl))
        return out

    chunks = best(0, 0, -2, tuple(need[w] for w in words))
    return matches, int(chunks)


def meteor(hyps, refs) -> float:
    """Exact-match METEOR: Fmean = 10PR/(R+9P), penalty = 0.5 (chunks/matches)^3."""
    hyps, refs = _check(hyps, refs)
    total = 0.0
    for h, r in zip(hyps, refs):
        m, chunks = _min_chunks(h, r)
        if not m:
            continue
        p, rec = m / len(h), m / len(r)
        fmean = 10 * p * rec / (rec + 9 * p)
        total += fmean * (1.0 - 0.5 * (chunks / m) ** 3)
    return 100.0 * total / len(hyps)


@dataclass
class EvalResult:
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    rouge_l: float
    meteor: float
    n_sentences: int

    def to_dict(self) -> dict:
        return asdict(self)

    COLUMNS = ("bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "meteor")


def evaluate(hyps, refs) -> EvalResult:
    b = bleu(hyps, refs, 4)
    return EvalResult(*b, rouge_l(hyps, refs), meteor(hyps, refs), len(hyps))
