"""Lexical relevance metrics: sentence BLEU-4, ROUGE-L F1 and SARI, all in [0, 1].

Inputs are token lists (see ``ehrqa.text.metric_tokens``).
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

Tokens = Sequence[str]


def ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypothesis: Tokens, references: Sequence[Tokens], max_n: int = 4) -> float:
    """BLEU with clipped counts, closest-reference brevity penalty and add-one smoothing for n > 1."""
    if not hypothesis or not references:
        return 0.0
    log_p = 0.0
    for n in range(1, max_n + 1):
        hyp = ngrams(hypothesis, n)
        max_ref: Counter = Counter()
        for ref in references:
            max_ref |= ngrams(ref, n)
        matched = sum(min(c, max_ref[g]) for g, c in hyp.items())
        total = sum(hyp.values())
        if n == 1:
            if matched == 0:
                return 0.0
            log_p += math.log(matched / total)
        else:
            log_p += math.log((matched + 1) / (total + 1))
    hyp_len = len(hypothesis)
    ref_len = min((abs(len(r) - hyp_len), len(r)) for r in references)[1]
    bp = 1.0 if hyp_len > ref_len else math.exp(1 - ref_len / hyp_len)
    return bp * math.exp(log_p / max_n)


def lcs_length(a: Tokens, b: Tokens) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(hypothesis: Tokens, reference: Tokens) -> float:
    lcs = lcs_length(hypothesis, reference)
    if lcs == 0:
        return 0.0
    p = lcs / len(hypothesis)
    r = lcs / len(reference)
    return 2 * p * r / (p + r)


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p > 0 or r > 0 else 0.0


def _sari_order(src: Counter, hyp: Counter, refs: Sequence[Counter]) -> tuple[float, float, float]:
    """Keep F1, deletion precision and addition F1 for one n-gram order.

    Source and hypothesis counts are scaled by the number of references so
    they compare against the pooled reference counts; 0/0 is taken as 1.
    """
    k = len(refs)
    ref_all: Counter = Counter()
    for r in refs:
        ref_all.update(r)
    src_k = Counter({g: c * k for g, c in src.items()})
    hyp_k = Counter({g: c * k for g, c in hyp.items()})

    kept = src_k & hyp_k
    kept_good = kept & ref_all
    keep_all = src_k & ref_all
    keep_p = sum(kept_good[g] / kept[g] for g in kept) / len(kept) if kept else 1.0
    keep_r = sum(kept_good.values()) / sum(keep_all.values()) if keep_all else 1.0

    deleted = src_k - hyp_k
    deleted_good = deleted - ref_all
    del_p = sum(deleted_good[g] / deleted[g] for g in deleted) / len(deleted) if deleted else 1.0

    added = set(hyp) - set(src)
    add_good = added & set(ref_all)
    add_all = set(ref_all) - set(src)
    add_p = len(add_good) / len(added) if added else 1.0
    add_r = len(add_good) / len(add_all) if add_all else 1.0

    return _f1(keep_p, keep_r), del_p, _f1(add_p, add_r)


def sari(source: Tokens, hypothesis: Tokens, references: Sequence[Tokens], max_n: int = 4) -> float:
    if not references:
        raise ValueError("SARI needs at least one reference")
    parts = [
        _sari_order(ngrams(source, n), ngrams(hypothesis, n), [ngrams(r, n) for r in references])
        for n in range(1, max_n + 1)
    ]
    keep, delete, add = (sum(p[i] for p in parts) / max_n for i in range(3))
    return (keep + delete + add) / 3
