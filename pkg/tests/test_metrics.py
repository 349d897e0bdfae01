import math
from functools import lru_cache

import pytest
from hypothesis import given
from hypothesis import strategies as st

from glossnmt.errors import ContractError
from glossnmt.metrics import _min_chunks, bleu, evaluate, meteor, rouge_l


# -- independent references ----------------------------------------------------

def ref_bleu(hyps, refs, n_max=4):
    """Straightforward corpus BLEU with clipped counts and brevity penalty."""
    hyps = [h.split() for h in hyps]
    refs = [r.split() for r in refs]
    num = [0] * n_max
    den = [0] * n_max
    for h, r in zip(hyps, refs):
        for n in range(1, n_max + 1):
            hg = [tuple(h[i:i + n]) for i in range(len(h) - n + 1)]
            rg = [tuple(r[i:i + n]) for i in range(len(r) - n + 1)]
            for g in set(hg):
                num[n - 1] += min(hg.count(g), rg.count(g))
            den[n - 1] += len(hg)
    c = sum(map(len, hyps))
    r = sum(map(len, refs))
    bp = 1.0 if c > r else math.exp(1 - r / c)
    out = []
    for n in range(1, n_max + 1):
        logs = [math.log(num[k] / den[k]) if num[k] else math.log(1e-9) for k in range(n)]
        out.append(100 * bp * math.exp(sum(logs) / n))
    return out


def ref_lcs(a, b):
    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))
    return go(0, 0)


def brute_alignment(h, r):
    """(max matches, min chunks) by enumerating every one-to-one exact alignment."""
    found = []

    def walk(i, used, links):
        if i == len(h):
            found.append(links)
            return
        walk(i + 1, used, links)
        for j, w in enumerate(r):
            if w == h[i] and j not in used:
                walk(i + 1, used | {j}, links + [(i, j)])

    walk(0, frozenset(), [])
    k = max(len(l) for l in found)
    if k == 0:
        return 0, 0
    chunks = [1 + sum(1 for (i0, j0), (i1, j1) in zip(l, l[1:]) if not (i1 == i0 + 1 and j1 == j0 + 1))
              for l in found if len(l) == k]
    return k, min(chunks)


# -- fixed cases ---------------------------------------------------------------------

def test_identical_is_perfect():
    s = ["the cat sat on the mat", "a dog barked loudly at night"]
    assert bleu(s, s) == [100.0] * 4
    r = evaluate(s, s)
    assert r.rouge_l == 100.0 and r.bleu4 == 100.0
    assert r.meteor == pytest.approx(100 * (1 - 0.5 * (1 / 6) ** 3))


def test_disjoint_is_zero():
    r = evaluate(["a b c d"], ["e f g h"])
    assert (r.bleu1, r.bleu2, r.bleu3, r.bleu4, r.rouge_l, r.meteor) == (0, 0, 0, 0, 0, 0)


def test_clipping_case():
    got = bleu(["the the the"], ["the cat"])
    want = ref_bleu(["the the the"], ["the cat"])
    assert got == pytest.approx(want, abs=1e-9)
    assert got[0] == pytest.approx(100 / 3, abs=1e-9)  # clipped unigram precision 1/3, no penalty


def test_lcs_case():
    assert rouge_l(["a c e"], ["a b c d e"]) == pytest.approx(75.0, abs=1e-9)
    # P = 1, R = 3/5 -> F1 = 2 * 0.6 / 1.6
    assert 2 * 0.6 / 1.6 * 100 == pytest.approx(75.0)


def test_brevity_penalty():
    got = bleu(["a b"], ["a b c d"], max_n=1)[0]
    assert got == pytest.approx(100 * math.exp(1 - 2), abs=1e-9)


def test_meteor_hand_value():
    # 3 matches in 2 chunks; P = 3/4, R = 3/3
    got = meteor(["the cat the sat"], ["the cat sat"])
    p, r = 0.75, 1.0
    fmean = 10 * p * r / (r + 9 * p)
    assert got == pytest.approx(100 * fmean * (1 - 0.5 * (2 / 3) ** 3), abs=1e-9)


def test_input_validation():
    with pytest.raises(ContractError):
        bleu(["a"], ["a", "b"])
    with pytest.raises(ContractError):
        evaluate([], [])


# -- randomized comparisons against the references ------------------------------

sent = st.lists(st.sampled_from("abcd"), min_size=1, max_size=7).map(" ".join)


@given(st.lists(st.tuples(sent, sent), min_size=1, max_size=5))
def test_bleu_matches_reference(pairs):
    hyps, refs = zip(*pairs)
    got = bleu(hyps, refs)
    if all(g == 0 for g in got):
        assert not any(set(h.split()) & set(r.split()) for h, r in pairs)
    else:
        assert got == pytest.approx(ref_bleu(hyps, refs), rel=1e-9, abs=1e-9)
    assert all(0 <= g <= 100 + 1e-9 for g in got)


@given(sent, sent)
def test_rouge_matches_recursive_lcs(h, r):
    lcs = ref_lcs(tuple(h.split()), tuple(r.split()))
    want = 0.0 if lcs == 0 else 100 * 2 * lcs / (len(h.split()) + len(r.split()))
    assert rouge_l([h], [r]) == pytest.approx(want, abs=1e-9)


@given(st.lists(st.sampled_from("abc"), min_size=1, max_size=5),
       st.lists(st.sampled_from("abc"), min_size=1, max_size=5))
def test_chunking_matches_brute_force(h, r):
    assert _min_chunks(tuple(h), tuple(r)) == brute_alignment(h, r)


@given(sent, sent)
def test_scores_bounded_and_symmetric_rouge(h, r):
    res = evaluate([h], [r])
    for v in (res.rouge_l, res.meteor):
        assert 0 <= v <= 100 + 1e-9
    assert rouge_l([h], [r]) == pytest.approx(rouge_l([r], [h]))
