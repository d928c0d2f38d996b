"""Set-based precision/recall/F1 with micro (pooled) and macro (per-case mean) averaging."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable


@dataclass(frozen=True)
class PRF:
    micro_p: float
    micro_r: float
    micro_f1: float
    macro_p: float
    macro_r: float
    macro_f1: float

    def to_json(self) -> dict:
        return asdict(self)


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    # nothing predicted and nothing to find counts as a perfect match
    if tp + fp + fn == 0:
        return 1.0, 1.0, 1.0
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def counts(predicted: set[int], gold: set[int]) -> tuple[int, int, int]:
    return len(predicted & gold), len(predicted - gold), len(gold - predicted)


def score_sets(pairs: Iterable[tuple[set[int], set[int]]]) -> PRF:
    """``pairs`` holds one (predicted, gold) pair per case."""
    TP = FP = FN = 0
    per_case = []
    for predicted, gold in pairs:
        tp, fp, fn = counts(set(predicted), set(gold))
        TP, FP, FN = TP + tp, FP + fp, FN + fn
        per_case.append(_prf(tp, fp, fn))
    if not per_case:
        raise ValueError("no cases to score")
    micro = _prf(TP, FP, FN)
    n = len(per_case)
    macro = [math.fsum(c[i] for c in per_case) / n for i in range(3)]
    return PRF(*micro, *macro)
