"""Gloss/text gap factors and text-to-text upsampling.

Four factors measure how far the gloss side is from the text side:

* vocabulary difference   ``1 - |W_g| / |W_g | W_s|``
* rare vocabulary         ``1 - #{w in W_g : count_g(w) < tau_r} / |W_g | W_s|``
* sentence cover          ``1 - (1/N) * sum_{r_i > tau_c} r_i`` with
  ``r_i = |set(g_i) & set(s_i)| / |set(s_i)|`` (case-insensitive)
* dataset length          ``clamp(1 - sum|g_i| / sum|s_i|, 0, 1)``

Their weighted sum is the upsampling ratio; ``round(ratio * N)`` copies of
``(s_j, s_j)`` with ``j`` drawn from the cover candidates are appended.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import ParallelCorpus
from .errors import ContractError

DEFAULT_THETA = (0.1, 0.1, 0.6, 0.2)
DEFAULT_TAU_R = 2
DEFAULT_TAU_C = 0.5


def vocab_diff_ratio(corpus: ParallelCorpus) -> float:
    if not len(corpus):
        raise ContractError("corpus is empty")
    union = corpus.gloss_vocab | corpus.text_vocab
    return 1.0 - len(corpus.gloss_vocab) / len(union)


def rare_vocab_ratio(corpus: ParallelCorpus, tau_r: float = DEFAULT_TAU_R) -> float:
    union = corpus.gloss_vocab | corpus.text_vocab
    counts = corpus.gloss_counter
    n_rare = sum(1 for w in corpus.gloss_vocab if counts[w] < tau_r)
    return 1.0 - n_rare / len(union)


def cover_ratio(gloss, text) -> float:
    g = {t.casefold() for t in gloss}
    s = {t.casefold() for t in text}
    return len(g & s) / len(s)


def sentence_cover_ratio(corpus: ParallelCorpus, tau_c: float = DEFAULT_TAU_C
                         ) -> tuple[float, list[int], list[float]]:
    """Returns (phi_s, candidate indices, per-pair cover ratios)."""
    ratios = [cover_ratio(g, s) for g, s in corpus.pairs]
    candidates = [i for i, r in enumerate(ratios) if r > tau_c]
    phi_s = 1.0 - sum(ratios[i] for i in candidates) / len(ratios)
    return phi_s, candidates, ratios


def dataset_length_ratio(corpus: ParallelCorpus) -> float:
    g = sum(len(x) for x in corpus.glosses)
    s = sum(len(x) for x in corpus.texts)
    return min(max(1.0 - g / s, 0.0), 1.0)


@dataclass
class AugmentationFactors:
    phi_v: float
    phi_r: float
    phi_s: float
    phi_d: float
    tau_r: float = DEFAULT_TAU_R
    tau_c: float = DEFAULT_TAU_C
    theta: tuple[float, ...] = DEFAULT_THETA
    candidates: list[int] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)

    @property
    def vector(self) -> list[float]:
        return [self.phi_v, self.phi_r, self.phi_s, self.phi_d]


def compute_factors(corpus: ParallelCorpus, tau_r: float = DEFAULT_TAU_R,
                    tau_c: float = DEFAULT_TAU_C, theta=DEFAULT_THETA) -> AugmentationFactors:
    phi_s, cands, ratios = sentence_cover_ratio(corpus, tau_c)
    return AugmentationFactors(
        phi_v=vocab_diff_ratio(corpus),
        phi_r=rare_vocab_ratio(corpus, tau_r),
        phi_s=phi_s,
        phi_d=dataset_length_ratio(corpus),
        tau_r=tau_r, tau_c=tau_c, theta=tuple(theta),
        candidates=cands, ratios=ratios,
    )


def upsampling_ratio(factors, theta=DEFAULT_THETA) -> float:
    phi = factors.vector if isinstance(factors, AugmentationFactors) else list(factors)
    theta = list(theta)
    if len(theta) != 4 or len(phi) != 4:
        raise ContractError("theta and the factor vector must both have length 4")
    if any(t < 0 for t in theta):
        raise ContractError("theta entries must be non-negative")
    return float(sum(t * p for t, p in zip(theta, phi)))


@dataclass
class AugmentationReport:
    factors: AugmentationFactors
    ratio: float
    n_injected: int
    n_original: int
    seed: int
    empty_candidates: bool = False

    def to_dict(self) -> dict:
        f = self.factors
        return {
            "phi_v": f.phi_v, "phi_r": f.phi_r, "phi_s": f.phi_s, "phi_d": f.phi_d,
            "theta": list(f.theta), "tau_r": f.tau_r, "tau_c": f.tau_c,
            "Phi": self.ratio, "n_injected": self.n_injected,
            "n_candidates": len(f.candidates), "seed": self.seed,
            "n_original": self.n_original, "empty_candidates": self.empty_candidates,
        }


def augment(corpus: ParallelCorpus, theta=DEFAULT_THETA, tau_r: float = DEFAULT_TAU_R,
            tau_c: float = DEFAULT_TAU_C, seed: int = 0
            ) -> tuple[ParallelCorpus, AugmentationReport]:
    """Append text-to-text copies of randomly chosen cover candidates."""
    factors = compute_factors(corpus, tau_r, tau_c, theta)
    ratio = upsampling_ratio(factors, theta)
    n = int(round(ratio * len(corpus)))
    empty = not factors.candidates
    if empty and n > 0:
        warnings.warn("no pair exceeds the cover threshold; nothing injected", stacklevel=2)
    if empty:
        n = 0
    report = AugmentationReport(factors, ratio, n, len(corpus), seed, empty and ratio > 0)
    if n == 0:
        return corpus, report
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(factors.candidates), size=n, replace=True)
    injected = [(corpus.pairs[factors.candidates[k]][1],) * 2 for k in picks]
    return corpus.extend(injected), report


def gap_statistics(corpus: ParallelCorpus, tau_r=DEFAULT_TAU_R, tau_c=DEFAULT_TAU_C,
                   theta=DEFAULT_THETA) -> dict:
    """Factors plus raw vocabulary/length figures describing the gloss/text gap."""
    f = compute_factors(corpus, tau_r, tau_c, theta)
    return {
        "n_pairs": len(corpus),
        "gloss_vocab": len(corpus.gloss_vocab),
        "text_vocab": len(corpus.text_vocab),
        "gloss_tokens": sum(len(g) for g in corpus.glosses),
        "text_tokens": sum(len(s) for s in corpus.texts),
        "phi_v": f.phi_v, "phi_r": f.phi_r, "phi_s": f.phi_s, "phi_d": f.phi_d,
        "Phi": upsampling_ratio(f, theta),
        "n_candidates": len(f.candidates),
        "theta": list(theta), "tau_r": tau_r, "tau_c": tau_c,
    }


def factors_dict(f: AugmentationFactors) -> dict:
    d = asdict(f)
    d["theta"] = list(f.theta)
    return d
