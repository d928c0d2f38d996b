"""First step: decide which note sentences are essential.

Three strategies: score-and-threshold reranking (threshold calibrated by the
Youden index on a labeled split), prompted list extraction, and prompted
per-sentence Yes/No classification.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .corpus import Case, CaseKey
from .genclient import BackendError, Generator, HttpConfig, post_json_with_retry
from .prf import PRF, score_sets
from .text import word_tokens

log = logging.getLogger(__name__)


class CalibrationError(ValueError):
    pass


class SelectionError(RuntimeError):
    def __init__(self, message: str, case_id: str | None = None):
        self.case_id = case_id
        super().__init__(f"{message} (case {case_id})" if case_id else message)


class Strategy(str, enum.Enum):
    RERANK = "rerank"
    PROMPT_LIST = "prompt_list"
    PROMPT_INDIVIDUAL = "prompt_individual"


@dataclass(frozen=True)
class ScoredSentence:
    sentence_id: int
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"non-finite score for sentence {self.sentence_id}")


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    tpr: float
    fpr: float


@dataclass(frozen=True)
class CalibratedThreshold:
    value: float
    youden_j: float
    source_split: str = "dev"

    def to_json(self) -> dict:
        return {"value": self.value, "youden_j": self.youden_j, "source_split": self.source_split}

    @classmethod
    def from_json(cls, d: dict) -> "CalibratedThreshold":
        return cls(float(d["value"]), float(d["youden_j"]), d.get("source_split", "dev"))


@dataclass(frozen=True)
class SelectionResult:
    case_id: str
    essentials: frozenset[int]
    strategy: Strategy
    scores: tuple[ScoredSentence, ...] | None = None
    threshold: CalibratedThreshold | None = None

    def __post_init__(self):
        object.__setattr__(self, "essentials", frozenset(self.essentials))
        if (self.scores is not None) != (self.strategy is Strategy.RERANK):
            raise ValueError("scores are present exactly when the strategy is rerank")


# --- query and lexical scoring -------------------------------------------------


def build_query(c: Case) -> str:
    if not c.patient_narrative.strip():
        log.warning("case %s has an empty patient narrative", c.case_id)
    return f"{c.patient_narrative}\n{c.clinician_question}"


class TfidfModel:
    """Raw-count TF times smoothed IDF, L2-normalised; IDF is ``ln((1+n)/(1+df)) + 1``."""

    def __init__(self, documents: Iterable[str]):
        docs = [set(word_tokens(d)) for d in documents]
        self.n_docs = len(docs)
        self.df = Counter(term for d in docs for term in d)

    def idf(self, term: str) -> float:
        return math.log((1 + self.n_docs) / (1 + self.df.get(term, 0))) + 1.0

    def vector(self, text: str) -> dict[str, float]:
        tf = Counter(word_tokens(text))
        vec = {t: c * self.idf(t) for t, c in tf.items()}
        norm = math.sqrt(sum(v * v for v in vec.values()))
        if norm == 0:
            return {}
        return {t: v / norm for t, v in vec.items()}

    def similarity(self, a: str, b: str) -> float:
        va, vb = self.vector(a), self.vector(b)
        if not va or not vb:
            return 0.0
        if len(vb) < len(va):
            va, vb = vb, va
        dot = sum(v * vb.get(t, 0.0) for t, v in va.items())
        return min(1.0, max(0.0, dot))


def lexical_score(query: str, sentence: str, context: Sequence[str] | None = None) -> float:
    """TF-IDF cosine; IDF is fitted on ``context`` (default: the sentence) plus the query."""
    docs = list(context) if context is not None else [sentence]
    return TfidfModel(docs + [query]).similarity(query, sentence)


class ScoringBackend(Protocol):
    backend_id: str

    def score(self, query: str, documents: Sequence[str]) -> list[float]: ...


class LexicalScorer:
    backend_id = "lexical-tfidf"

    def score(self, query: str, documents: Sequence[str]) -> list[float]:
        model = TfidfModel(list(documents) + [query])
        return [model.similarity(query, d) for d in documents]


class RemoteReranker:
    """POST ``{"query", "documents"}`` and read back ``{"scores": [...]}``."""

    def __init__(self, cfg: HttpConfig):
        self.cfg = cfg
        self.backend_id = f"reranker:{cfg.model or cfg.endpoint}"

    def score(self, query: str, documents: Sequence[str]) -> list[float]:
        body = {"query": query, "documents": list(documents)}
        if self.cfg.model:
            body["model"] = self.cfg.model
        data = post_json_with_retry(self.cfg, self.cfg.endpoint, body)
        scores = data.get("scores") if isinstance(data, dict) else None
        if not isinstance(scores, list):
            raise BackendError("reranker response lacks a 'scores' list")
        return [float(s) for s in scores]


def score_sentences(c: Case, backend: ScoringBackend) -> list[ScoredSentence]:
    texts = [s.text for s in c.sentences]
    try:
        raw = backend.score(build_query(c), texts)
    except BackendError as exc:
        raise SelectionError(f"scoring backend failed: {exc}", c.case_id) from exc
    if len(raw) != len(texts):
        raise SelectionError(f"score arity mismatch: {len(raw)} scores for {len(texts)} sentences", c.case_id)
    return [ScoredSentence(s.id, float(v)) for s, v in zip(c.sentences, raw)]


# --- ROC / Youden --------------------------------------------------------------


def roc_curve(scores: Sequence[tuple[float, bool]]) -> list[RocPoint]:
    """ROC points in descending-threshold order, starting at the +inf sentinel.

    A sentence is predicted essential when ``score >= threshold``.
    """
    pos = sum(1 for _, y in scores if y)
    neg = len(scores) - pos
    if pos == 0 or neg == 0:
        raise CalibrationError("degenerate labels: need at least one essential and one non-essential sentence")
    by_score: dict[float, list[int]] = {}
    for s, y in scores:
        if not math.isfinite(s):
            raise CalibrationError(f"non-finite score {s}")
        bucket = by_score.setdefault(float(s), [0, 0])
        bucket[0 if y else 1] += 1
    points = [RocPoint(math.inf, 0.0, 0.0)]
    tp = fp = 0
    for s in sorted(by_score, reverse=True):
        tp += by_score[s][0]
        fp += by_score[s][1]
        points.append(RocPoint(s, tp / pos, fp / neg))
    return points


def youden_threshold(curve: Sequence[RocPoint], source_split: str = "dev") -> CalibratedThreshold:
    if not curve:
        raise CalibrationError("empty ROC curve")
    best = None
    best_j = -math.inf
    for p in curve:
        j = p.tpr - p.fpr
        # ties keep the earlier, i.e. higher, threshold
        if j > best_j or (j == best_j and p.threshold > best.threshold):
            best, best_j = p, j
    if math.isinf(best.threshold):
        log.warning("scores do not discriminate the labels; Youden optimum is the +inf sentinel")
    return CalibratedThreshold(best.threshold, best_j, source_split)


def pooled_labels(
    scored: Iterable[tuple[Sequence[ScoredSentence], CaseKey]]
) -> list[tuple[float, bool]]:
    """Pool (score, is_essential) over every labeled sentence; supplementary counts as negative."""
    pairs = []
    for sentences, key in scored:
        essential = key.essential
        for s in sentences:
            if s.sentence_id in key.labels:
                pairs.append((s.score, s.sentence_id in essential))
    return pairs


def calibrate(
    cases: Sequence[Case], keys: Sequence[CaseKey], backend: ScoringBackend, source_split: str = "dev"
) -> CalibratedThreshold:
    by_id = {k.case_id: k for k in keys}
    scored = [(score_sentences(c, backend), by_id[c.case_id]) for c in cases if c.case_id in by_id]
    return youden_threshold(roc_curve(pooled_labels(scored)), source_split)


def select_by_threshold(
    case_id: str,
    scores: Sequence[ScoredSentence],
    t: CalibratedThreshold,
    fallback: bool = True,
) -> SelectionResult:
    chosen = {s.sentence_id for s in scores if s.score >= t.value}
    if not chosen and fallback and scores:
        top = max(scores, key=lambda s: s.score)
        chosen = {top.sentence_id}
    return SelectionResult(case_id, frozenset(chosen), Strategy.RERANK, tuple(scores), t)


def select_by_rerank(c: Case, backend: ScoringBackend, t: CalibratedThreshold) -> SelectionResult:
    return select_by_threshold(c.case_id, score_sentences(c, backend), t)


# --- prompted strategies -------------------------------------------------------


def top_lexical_sentence(c: Case) -> int:
    scores = LexicalScorer().score(build_query(c), [s.text for s in c.sentences])
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    return c.sentences[best].id


def prompt_bindings(c: Case, sentences: str) -> dict[str, str]:
    return {
        "id": c.case_id,
        "patient_narrative": c.patient_narrative,
        "clinical_question": c.clinician_question,
        "clinician_question": c.clinician_question,
        "note_excerpt": c.numbered_sentences(),
        "sentences": sentences,
    }


def parse_id_list(completion: str, valid_ids: Iterable[int]) -> set[int]:
    valid = set(valid_ids)
    return {int(tok) for tok in re.findall(r"\d+", completion) if int(tok) in valid}


def select_by_prompt_list(c: Case, generator: Generator, template: str = "list_role") -> SelectionResult:
    try:
        completion = generator.complete(template, prompt_bindings(c, c.numbered_sentences()))
    except BackendError as exc:
        raise SelectionError(f"generation failed: {exc}", c.case_id) from exc
    chosen = parse_id_list(completion, c.sentence_ids)
    if not chosen:
        log.warning("case %s: no valid sentence id in %r; using top lexical sentence", c.case_id, completion[:80])
        chosen = {top_lexical_sentence(c)}
    return SelectionResult(c.case_id, frozenset(chosen), Strategy.PROMPT_LIST)


def parse_yes_no(completion: str) -> bool:
    m = re.search(r"[^\W\d_]+", completion)
    word = m.group(0).lower() if m else ""
    if word not in ("yes", "no"):
        log.warning("unparseable Yes/No answer %r counted as No", completion[:80])
    return word == "yes"


def select_by_prompt_individual(
    c: Case, generator: Generator, template: str = "indiv_role", workers: int = 1
) -> SelectionResult:
    def ask(text: str) -> str:
        return generator.complete(template, prompt_bindings(c, text))

    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                answers = list(pool.map(ask, [s.text for s in c.sentences]))
        else:
            answers = [ask(s.text) for s in c.sentences]
    except BackendError as exc:
        raise SelectionError(f"generation failed: {exc}", c.case_id) from exc
    chosen = {s.id for s, a in zip(c.sentences, answers) if parse_yes_no(a)}
    if not chosen:
        log.warning("case %s: every sentence judged No; using top lexical sentence", c.case_id)
        chosen = {top_lexical_sentence(c)}
    return SelectionResult(c.case_id, frozenset(chosen), Strategy.PROMPT_INDIVIDUAL)


# --- evaluation of the first step ----------------------------------------------


def evaluate_selection(results: Sequence[SelectionResult], keys: Sequence[CaseKey], mode: str = "strict") -> PRF:
    if mode not in ("strict", "lenient"):
        raise ValueError(f"mode must be strict or lenient, got {mode!r}")
    by_id = {k.case_id: k for k in keys}
    pairs = []
    for r in results:
        key = by_id.get(r.case_id)
        if key is None:
            raise KeyError(f"no gold key for case {r.case_id}")
        gold = key.essential if mode == "strict" else key.lenient
        pairs.append((set(r.essentials), gold))
    return score_sets(pairs)


# --- manifest ------------------------------------------------------------------


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def threshold_manifest(t: CalibratedThreshold, backend_id: str, template_name: str | None = None) -> dict:
    return {
        "strategy": Strategy.RERANK.value,
        "threshold": t.to_json(),
        "backend_id": backend_id,
        "template_name": template_name,
    }


def read_manifest_threshold(path: str | Path) -> CalibratedThreshold:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not data.get("threshold"):
        raise CalibrationError(f"{path} carries no threshold")
    return CalibratedThreshold.from_json(data["threshold"])
