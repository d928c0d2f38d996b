"""Independent reference computations used as test oracles.

Nothing here imports the code under test's metric or ROC internals.
"""

from __future__ import annotations

import math
from collections import Counter
from functools import lru_cache


# --- ROC / Youden: exhaustive scan --------------------------------------------

def exhaustive_youden(pairs):
    """Every distinct score plus +inf as a candidate threshold; ties go to the higher threshold."""
    P = sum(1 for _, y in pairs if y)
    N = len(pairs) - P
    best_t, best_j = None, None
    for t in sorted({s for s, _ in pairs} | {math.inf}):
        tp = sum(1 for s, y in pairs if y and s >= t)
        fp = sum(1 for s, y in pairs if not y and s >= t)
        j = tp / P - fp / N
        if best_j is None or j >= best_j:
            best_t, best_j = t, j
    return best_t, best_j


def brute_roc(pairs):
    P = sum(1 for _, y in pairs if y)
    N = len(pairs) - P
    out = []
    for t in [math.inf] + sorted({s for s, _ in pairs}, reverse=True):
        tp = sum(1 for s, y in pairs if y and s >= t)
        fp = sum(1 for s, y in pairs if not y and s >= t)
        out.append((t, tp / P, fp / N))
    return out


# --- BLEU: naive list counting ---------------------------------------------------

def _grams(tokens, n):
    return [" ".join(tokens[i:i + n]) for i in range(len(tokens) - (n - 1))]


def naive_bleu(hyp, refs):
    if not hyp:
        return 0.0
    logs = []
    for n in range(1, 5):
        h = _grams(hyp, n)
        r_lists = [_grams(r, n) for r in refs]
        num = 0
        for g in set(h):
            num += min(h.count(g), max(rl.count(g) for rl in r_lists))
        den = len(h)
        if n == 1:
            if num == 0:
                return 0.0
            logs.append(math.log(num / den))
        else:
            logs.append(math.log((num + 1) / (den + 1)))
    c = len(hyp)
    best = None
    for r in refs:
        key = (abs(len(r) - c), len(r))
        if best is None or key < best:
            best = key
    r = best[1]
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(sum(logs) / 4)


# --- ROUGE-L: memoised recursive LCS -----------------------------------------------

def naive_rouge_l(hyp, ref):
    hyp, ref = tuple(hyp), tuple(ref)

    @lru_cache(maxsize=None)
    def lcs(i, j):
        if i == len(hyp) or j == len(ref):
            return 0
        if hyp[i] == ref[j]:
            return 1 + lcs(i + 1, j + 1)
        return max(lcs(i + 1, j), lcs(i, j + 1))

    m = lcs(0, 0)
    if m == 0:
        return 0.0
    p, r = m / len(hyp), m / len(ref)
    return 2 * p * r / (p + r)


# --- SARI: reference implementation shape (string n-grams, per-order pass) ---------

def _sari_ngram(sgrams, cgrams, rgramslist, numref):
    rgramsall = [rgram for rgrams in rgramslist for rgram in rgrams]
    rgramcounter = Counter(rgramsall)

    sgramcounter = Counter(sgrams)
    sgramcounter_rep = Counter()
    for sgram, scount in sgramcounter.items():
        sgramcounter_rep[sgram] = scount * numref

    cgramcounter = Counter(cgrams)
    cgramcounter_rep = Counter()
    for cgram, ccount in cgramcounter.items():
        cgramcounter_rep[cgram] = ccount * numref

    keepgramcounter_rep = sgramcounter_rep & cgramcounter_rep
    keepgramcountergood_rep = keepgramcounter_rep & rgramcounter
    keepgramcounterall_rep = sgramcounter_rep & rgramcounter

    keeptmpscore1 = 0
    keeptmpscore2 = 0
    for keepgram in keepgramcounter_rep:
        keeptmpscore1 += keepgramcountergood_rep[keepgram] / keepgramcounter_rep[keepgram]
        keeptmpscore2 += keepgramcountergood_rep[keepgram]
    keepscore_precision = 1
    keepscore_recall = 1
    if len(keepgramcounter_rep) > 0:
        keepscore_precision = keeptmpscore1 / len(keepgramcounter_rep)
    if len(keepgramcounterall_rep) > 0:
        keepscore_recall = keeptmpscore2 / sum(keepgramcounterall_rep.values())
    keepscore = 0
    if keepscore_precision > 0 or keepscore_recall > 0:
        keepscore = 2 * keepscore_precision * keepscore_recall / (keepscore_precision + keepscore_recall)

    delgramcounter_rep = sgramcounter_rep - cgramcounter_rep
    delgramcountergood_rep = delgramcounter_rep - rgramcounter
    deltmpscore1 = 0
    for delgram in delgramcounter_rep:
        deltmpscore1 += delgramcountergood_rep[delgram] / delgramcounter_rep[delgram]
    delscore_precision = 1
    if len(delgramcounter_rep) > 0:
        delscore_precision = deltmpscore1 / len(delgramcounter_rep)

    addgramcounter = set(cgramcounter) - set(sgramcounter)
    addgramcountergood = set(addgramcounter) & set(rgramcounter)
    addgramcounterall = set(rgramcounter) - set(sgramcounter)
    addscore_precision = 1
    addscore_recall = 1
    if len(addgramcounter) > 0:
        addscore_precision = len(addgramcountergood) / len(addgramcounter)
    if len(addgramcounterall) > 0:
        addscore_recall = len(addgramcountergood) / len(addgramcounterall)
    addscore = 0
    if addscore_precision > 0 or addscore_recall > 0:
        addscore = 2 * addscore_precision * addscore_recall / (addscore_precision + addscore_recall)
    return keepscore, delscore_precision, addscore


def reference_sari(src, hyp, refs):
    numref = len(refs)
    keeps, dels, adds = [], [], []
    for n in range(1, 5):
        s = _grams(src, n)
        c = _grams(hyp, n)
        rs = [_grams(r, n) for r in refs]
        k, d, a = _sari_ngram(s, c, rs, numref)
        keeps.append(k)
        dels.append(d)
        adds.append(a)
    return (sum(keeps) / 4 + sum(dels) / 4 + sum(adds) / 4) / 3


# --- TF-IDF cosine via scikit-learn ---------------------------------------------------

def sklearn_tfidf_scores(query, documents):
    import re

    from sklearn.feature_extraction.text import TfidfVectorizer

    vec = TfidfVectorizer(
        tokenizer=lambda t: re.findall(r"[^\W_]+", t.lower()),
        lowercase=False,
        token_pattern=None,
        smooth_idf=True,
        norm="l2",
    )
    mat = vec.fit_transform(list(documents) + [query])
    q = mat[len(documents)]
    return [float((mat[i].multiply(q)).sum()) for i in range(len(documents))]


# --- set F1 by hand-style counting -----------------------------------------------------

def pooled_f1(pairs):
    tp = sum(len(p & g) for p, g in pairs)
    fp = sum(len(p - g) for p, g in pairs)
    fn = sum(len(g - p) for p, g in pairs)
    if tp + fp + fn == 0:
        return 1.0
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)
