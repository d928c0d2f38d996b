"""Scoring harness for submitted answers.

Answers are first checked against the line format (``text |id,id|``) and cut
to 75 non-citation words. Factuality compares cited ids with the gold key;
relevance compares the answer text with the gold essential sentences plus the
clinician question.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from . import metrics
from .corpus import Case, CaseKey, Dataset
from .genclient import HttpConfig, post_json_with_retry
from .prf import PRF, score_sets
from .text import metric_tokens

log = logging.getLogger(__name__)

WORD_LIMIT = 75
_LINE = re.compile(r"^(?P<text>.*?)\s*\|(?P<ids>\s*\d+\s*(?:,\s*\d+\s*)*)\|\s*$")
LEXICAL = ("bleu", "rouge_l_f", "sari")


@dataclass(frozen=True)
class ParsedSubmissionLine:
    text: str
    citations: tuple[int, ...]

    def render(self) -> str:
        return f"{self.text} |{','.join(map(str, self.citations))}|".lstrip()


@dataclass(frozen=True)
class ParsedAnswer:
    lines: tuple[ParsedSubmissionLine, ...]
    violations: tuple[str, ...] = ()
    truncated: bool = False

    @property
    def text(self) -> str:
        return " ".join(l.text for l in self.lines if l.text)

    @property
    def cited(self) -> set[int]:
        return {i for l in self.lines for i in l.citations}

    def word_count(self) -> int:
        return sum(len(l.text.split()) for l in self.lines)

    def render(self) -> str:
        return "".join(l.render() + "\n" for l in self.lines)


def validate_and_truncate(answer_text: str, limit: int = WORD_LIMIT) -> ParsedAnswer:
    """Parse answer lines and truncate to ``limit`` non-citation words.

    Lines without a trailing citation group are recorded as violations and
    excluded. The line holding the word that crosses the limit is cut at the
    limit, keeps its citations, and every later line is dropped.
    """
    lines: list[ParsedSubmissionLine] = []
    violations: list[str] = []
    used = 0
    truncated = False
    for lineno, raw in enumerate(answer_text.split("\n"), 1):
        if not raw.strip():
            continue
        m = _LINE.match(raw)
        ids = [int(t) for t in m.group("ids").split(",")] if m else []
        if not m or any(i <= 0 for i in ids):
            violations.append(f"line {lineno}: missing or malformed citation group: {raw[:60]!r}")
            continue
        if truncated:
            continue
        words = m.group("text").split()
        if used + len(words) > limit:
            words = words[: limit - used]
            truncated = True
            if not words:
                continue
        used += len(words)
        lines.append(ParsedSubmissionLine(" ".join(words), tuple(dict.fromkeys(ids))))
    return ParsedAnswer(tuple(lines), tuple(violations), truncated)


@dataclass(frozen=True)
class FactualityReport:
    strict: PRF
    lenient: PRF

    @property
    def score(self) -> float:
        return self.strict.micro_f1

    def to_json(self) -> dict:
        return {"strict": self.strict.to_json(), "lenient": self.lenient.to_json()}


def factuality(parsed: Mapping[str, ParsedAnswer], keys: Sequence[CaseKey]) -> FactualityReport:
    """Micro/macro P/R/F1 of cited ids; cases missing from ``parsed`` cite nothing."""
    key_ids = {k.case_id for k in keys}
    unknown = set(parsed) - key_ids
    if unknown:
        raise KeyError(f"no gold key for case(s) {sorted(unknown)}")
    cited = {k.case_id: parsed[k.case_id].cited if k.case_id in parsed else set() for k in keys}
    strict = score_sets((cited[k.case_id], k.essential) for k in keys)
    lenient = score_sets((cited[k.case_id], k.lenient) for k in keys)
    return FactualityReport(strict, lenient)


# scorer for model-based metrics: list of (hypothesis, reference) -> list of scores
PairScorer = Callable[[Sequence[tuple[str, str]]], Sequence[float]]


class RemoteMetric:
    """External scorer endpoint for model-based metrics (BERTScore, AlignScore, MedCon...)."""

    def __init__(self, metric: str, cfg: HttpConfig):
        self.metric = metric
        self.cfg = cfg

    def __call__(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        body = {"metric": self.metric, "pairs": [{"hypothesis": h, "reference": r} for h, r in pairs]}
        data = post_json_with_retry(self.cfg, self.cfg.endpoint, body)
        scores = data.get("scores") if isinstance(data, dict) else None
        if not isinstance(scores, list) or len(scores) != len(pairs):
            raise ValueError(f"external scorer for {self.metric} returned a malformed score list")
        return [float(s) for s in scores]


@dataclass(frozen=True)
class RelevanceReport:
    bleu: float
    rouge_l_f: float
    sari: float
    plugged: Mapping[str, float] = field(default_factory=dict)
    aggregate_override: float | None = None

    @property
    def aggregate(self) -> float:
        if self.aggregate_override is not None:
            return self.aggregate_override
        parts = [self.bleu, self.rouge_l_f, self.sari, *self.plugged.values()]
        return math.fsum(parts) / len(parts)

    def to_json(self) -> dict:
        out = {"bleu": self.bleu, "rouge_l_f": self.rouge_l_f, "sari": self.sari}
        if self.plugged:
            out["plugged"] = dict(sorted(self.plugged.items()))
        out["aggregate"] = self.aggregate
        return out


def relevance_reference(case: Case, key: CaseKey) -> str:
    essential = key.essential
    texts = [s.text for s in case.sentences if s.id in essential]
    return " ".join(texts + [case.clinician_question])


def case_lexical_scores(answer: ParsedAnswer | None, case: Case, key: CaseKey) -> dict[str, float]:
    hyp = metric_tokens(answer.text) if answer is not None else []
    if not hyp:
        return {m: 0.0 for m in LEXICAL}
    ref = metric_tokens(relevance_reference(case, key))
    src = metric_tokens(case.note_excerpt)
    return {
        "bleu": metrics.bleu(hyp, [ref]),
        "rouge_l_f": metrics.rouge_l(hyp, ref),
        "sari": metrics.sari(src, hyp, [ref]),
    }


def relevance(
    parsed: Mapping[str, ParsedAnswer],
    dataset: Dataset,
    scorers: Mapping[str, PairScorer] | None = None,
) -> RelevanceReport:
    """Per-case lexical metrics averaged over the keyed cases; empty answers score 0."""
    keys = list(dataset.keys or ())
    if not keys:
        raise ValueError("relevance needs gold keys")
    per_case = [case_lexical_scores(parsed.get(k.case_id), dataset.case(k.case_id), k) for k in keys]
    means = {m: math.fsum(c[m] for c in per_case) / len(per_case) for m in LEXICAL}
    plugged = {}
    for name, scorer in sorted((scorers or {}).items()):
        pairs, slots = [], []
        for i, k in enumerate(keys):
            ans = parsed.get(k.case_id)
            if ans is not None and ans.text.strip():
                pairs.append((ans.text, relevance_reference(dataset.case(k.case_id), k)))
                slots.append(i)
        values = [0.0] * len(keys)
        for i, v in zip(slots, scorer(pairs) if pairs else []):
            values[i] = float(v)
        plugged[name] = math.fsum(values) / len(values)
    return RelevanceReport(means["bleu"], means["rouge_l_f"], means["sari"], plugged)


@dataclass(frozen=True)
class OverallReport:
    overall: float
    relevance: float
    factuality: float


def overall(rel: RelevanceReport | float, fact: FactualityReport | float) -> OverallReport:
    r = rel.aggregate if isinstance(rel, RelevanceReport) else float(rel)
    f = fact.score if isinstance(fact, FactualityReport) else float(fact)
    return OverallReport((r + f) / 2, r, f)


@dataclass(frozen=True)
class EvaluationReport:
    relevance: RelevanceReport
    factuality: FactualityReport
    violations: int

    @property
    def overall(self) -> OverallReport:
        return overall(self.relevance, self.factuality)

    def to_json(self) -> dict:
        return {
            "overall": self.overall.overall,
            "relevance": self.relevance.to_json(),
            "factuality": {"score": self.factuality.score, **self.factuality.to_json()},
            "violations": self.violations,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    def table(self) -> str:
        o = self.overall
        s, l = self.factuality.strict, self.factuality.lenient
        head = ["Overall", "Relevance", "Factuality", "Strict Macro-F1", "Strict Micro-F1", "Lenient Macro-F1", "Lenient Micro-F1"]
        vals = [o.overall, o.relevance, o.factuality, s.macro_f1, s.micro_f1, l.macro_f1, l.micro_f1]
        rel = self.relevance.to_json()
        rel_line = "  ".join(f"{k}={v:.3f}" for k, v in rel.items() if k not in ("plugged", "aggregate"))
        for k, v in rel.get("plugged", {}).items():
            rel_line += f"  {k}={v:.3f}"
        return (
            " | ".join(head) + "\n"
            + " | ".join(f"{v:.3f}".rjust(len(h)) for h, v in zip(head, vals)) + "\n"
            + rel_line + f"\nformat violations: {self.violations}\n"
        )


def evaluate_submission(
    answers: Sequence[tuple[str, str]],
    dataset: Dataset,
    scorers: Mapping[str, PairScorer] | None = None,
) -> EvaluationReport:
    if not dataset.has_keys:
        raise ValueError("evaluation requires gold labels")
    parsed: dict[str, ParsedAnswer] = {}
    for case_id, text in answers:
        if case_id in parsed:
            raise ValueError(f"duplicate submission for case {case_id}")
        if dataset.key_for(case_id) is None:
            raise ValueError(f"submission for unknown or unkeyed case {case_id}")
        parsed[case_id] = validate_and_truncate(text)
    violations = sum(len(p.violations) for p in parsed.values())
    for cid, p in parsed.items():
        for v in p.violations:
            log.warning("case %s: %s", cid, v)
    return EvaluationReport(relevance(parsed, dataset, scorers), factuality(parsed, dataset.keys), violations)
