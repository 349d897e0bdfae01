"""Synthetic gloss/text corpora with a built-in representation gap.

Text sentences come from a small stochastic grammar over pseudo-words.  The
gloss of a sentence drops function words, folds inflected content words onto
a smaller gloss inventory, moves the verb to the end, and uppercases
everything.  ``drop_prob`` controls both the dropping and the reordering, so
``drop_prob=0`` with equal vocabulary sizes yields glosses that are plain
uppercased copies of the text.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import ParallelCorpus
from .errors import ContractError

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_SYLLABLES = [c + v for c in _CONSONANTS for v in _VOWELS]
_ROLES_FUNC = ("det", "aux", "prep")
_ROLES_CONTENT = ("noun", "verb", "adj")


def _content_word(i: int) -> str:
    n = len(_SYLLABLES)
    return _SYLLABLES[i % n] + _SYLLABLES[(i // n + 7 * i) % n] + ("" if i < n * n else str(i))


def _function_word(j: int) -> str:
    # one-syllable words, disjoint from the two-syllable content words
    return _SYLLABLES[(11 * j + 3) % len(_SYLLABLES)] + ("" if j < len(_SYLLABLES) else str(j))


@dataclass(frozen=True)
class Grammar:
    text_vocab_size: int
    gloss_vocab_size: int
    drop_prob: float

    def __post_init__(self):
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ContractError("drop_prob must lie in [0, 1]")
        if self.gloss_vocab_size > self.text_vocab_size:
            raise ContractError("gloss_vocab_size must not exceed text_vocab_size")
        if self.gloss_vocab_size < 6:
            raise ContractError("gloss_vocab_size must be at least 6")

    @property
    def n_function(self) -> int:
        return max(3, min(12, self.text_vocab_size // 10, self.gloss_vocab_size // 2))

    @property
    def function_words(self) -> list[str]:
        return [_function_word(j) for j in range(self.n_function)]

    @property
    def content_words(self) -> list[str]:
        return [_content_word(i) for i in range(self.text_vocab_size - self.n_function)]

    @property
    def gloss_slots(self) -> int:
        return self.gloss_vocab_size - self.n_function

    def by_role(self, role: str) -> list[str]:
        if role in _ROLES_FUNC:
            k = _ROLES_FUNC.index(role)
            return [w for j, w in enumerate(self.function_words) if j % 3 == k]
        k = _ROLES_CONTENT.index(role)
        return [w for i, w in enumerate(self.content_words) if i % 3 == k]

    def gloss_token(self, word: str) -> str:
        """Uppercased projection of a text word onto the gloss inventory."""
        content = self._content_index
        if word in content:
            i = content[word]
            return self.content_words[i % self.gloss_slots].upper()
        return word.upper()

    @property
    def _content_index(self) -> dict[str, int]:
        return {w: i for i, w in enumerate(self.content_words)}


class _Sampler:
    def __init__(self, grammar: Grammar, rng: np.random.Generator):
        self.g = grammar
        self.rng = rng
        self.pools = {r: grammar.by_role(r) for r in _ROLES_FUNC + _ROLES_CONTENT}
        # Zipf-like weights make part of the vocabulary rare
        self.weights = {}
        for r, pool in self.pools.items():
            w = 1.0 / np.arange(1, len(pool) + 1) ** 0.9
            self.weights[r] = w / w.sum()
        self.func = set(grammar.function_words)
        self.content = grammar._content_index

    def pick(self, role: str) -> str:
        pool = self.pools[role]
        return pool[self.rng.choice(len(pool), p=self.weights[role])]

    def noun_phrase(self) -> list[tuple[str, str]]:
        out = [(self.pick("det"), "det")]
        if self.rng.random() < 0.4:
            out.append((self.pick("adj"), "adj"))
        out.append((self.pick("noun"), "noun"))
        return out

    def sentence(self) -> list[tuple[str, str]]:
        words = self.noun_phrase()
        if self.rng.random() < 0.5:
            words.append((self.pick("aux"), "aux"))
        words.append((self.pick("verb"), "verb"))
        words += self.noun_phrase()
        if self.rng.random() < 0.4:
            words.append((self.pick("prep"), "prep"))
            words += self.noun_phrase()
        return words

    def gloss(self, words: list[tuple[str, str]]) -> list[str]:
        p = self.g.drop_prob
        kept = [(w, r) for w, r in words if r not in _ROLES_FUNC or self.rng.random() >= p]
        if p > 0 and self.rng.random() < p:
            verbs = [x for x in kept if x[1] == "verb"]
            kept = [x for x in kept if x[1] != "verb"] + verbs
        return [self.g.gloss_token(w) for w, _ in kept]


def generate_synthetic(n_pairs: int, gloss_vocab_size: int = 40, text_vocab_size: int = 120,
                       drop_prob: float = 0.3, seed: int = 0,
                       max_attempts_factor: int = 200) -> ParallelCorpus:
    """Sample ``n_pairs`` pairs with pairwise-distinct glosses and texts."""
    if n_pairs < 1:
        raise ContractError("n_pairs must be >= 1")
    grammar = Grammar(text_vocab_size, gloss_vocab_size, drop_prob)
    sampler = _Sampler(grammar, np.random.default_rng(seed))
    pairs, seen_g, seen_s = [], set(), set()
    for _ in range(max_attempts_factor * n_pairs):
        words = sampler.sentence()
        text = tuple(w for w, _ in words)
        gloss = tuple(sampler.gloss(words))
        if gloss in seen_g or text in seen_s:
            continue
        seen_g.add(gloss)
        seen_s.add(text)
        pairs.append((gloss, text))
        if len(pairs) == n_pairs:
            return ParallelCorpus(tuple(pairs))
    raise ContractError(f"could not sample {n_pairs} distinct pairs from a grammar with "
                        f"{text_vocab_size} text / {gloss_vocab_size} gloss words")


def generate_text(n_sentences: int, gloss_vocab_size: int = 40, text_vocab_size: int = 120,
                  drop_prob: float = 0.3, seed: int = 0) -> list[tuple[str, ...]]:
    """Unpaired text sentences from the same grammar (teacher pretraining data)."""
    grammar = Grammar(text_vocab_size, gloss_vocab_size, drop_prob)
    sampler = _Sampler(grammar, np.random.default_rng(seed))
    return [tuple(w for w, _ in sampler.sentence()) for _ in range(n_sentences)]


def split(corpus: ParallelCorpus, sizes) -> list[ParallelCorpus]:
    """Consecutive slices of the given sizes."""
    out, start = [], 0
    for n in sizes:
        if start + n > len(corpus):
            raise ContractError(f"split sizes {list(sizes)} exceed corpus size {len(corpus)}")
        out.append(ParallelCorpus(corpus.pairs[start : start + n]))
        start += n
    return out
