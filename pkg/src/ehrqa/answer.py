"""Second step: turn a drafted answer and the selected sentences into a cited submission answer."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import Sentence
from .selection import TfidfModel
from .text import count_words, squash, strip_citations

WORD_BUDGET = 75
CITATION_CAP = 3
CO_CITATION_BAND = 0.9
_FALLBACK_TEXT = "Please see the cited note sentence."


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class AnswerSentence:
    text: str
    citations: tuple[int, ...]


@dataclass(frozen=True)
class CitedAnswer:
    case_id: str
    sentences: tuple[AnswerSentence, ...]

    def cited_ids(self) -> set[int]:
        return {i for s in self.sentences for i in s.citations}

    def word_count(self) -> int:
        return sum(count_words(s.text) for s in self.sentences)


def split_sentences(text: str) -> list[str]:
    """Split on ``.``/``!``/``?`` followed by whitespace or end, and on line breaks."""
    out = []
    for line in text.splitlines():
        for piece in re.split(r"(?<=[.!?])\s+", line):
            piece = piece.strip()
            if piece:
                out.append(piece)
    return out


def is_title_like(s: Sentence | str) -> bool:
    text = (s.text if isinstance(s, Sentence) else s).strip()
    return text.endswith(":") or count_words(text) <= 3 or not any(ch.islower() for ch in text)


def count_words_excluding_citations(text: str) -> int:
    return count_words(strip_citations(text))


def fit_word_budget(sentences: Sequence[str], budget: int = WORD_BUDGET) -> list[str]:
    """Greedy prefix under ``budget`` words; an oversized first sentence is cut to the budget."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    kept: list[str] = []
    used = 0
    for s in sentences:
        n = count_words(s)
        if used + n > budget:
            break
        kept.append(s)
        used += n
    if not kept and sentences:
        kept = [" ".join(sentences[0].split()[:budget])]
    return kept


def clean_answer_text(text: str) -> str:
    """Single-line text with no vertical bars, safe to place before a citation group."""
    return squash(text.replace("|", " "))


def citable(essentials: Sequence[Sentence]) -> list[Sentence]:
    if not essentials:
        raise AssemblyError("no essential sentences to cite")
    body = [s for s in essentials if not is_title_like(s)]
    return body or list(essentials)


def attach_citations(
    case_id: str,
    kept: Sequence[str],
    essentials: Sequence[Sentence],
    cap: int = CITATION_CAP,
    band: float = CO_CITATION_BAND,
) -> CitedAnswer:
    """Cite each answer sentence with its most similar essentials.

    Every essential scoring within ``band`` of the best score is cited, best
    first (ties by lower id), at most ``cap`` per sentence.
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    targets = sorted(citable(essentials), key=lambda s: s.id)
    out = []
    for text in kept:
        model = TfidfModel([s.text for s in targets] + [text])
        scored = [(model.similarity(text, s.text), s.id) for s in targets]
        top = max(v for v, _ in scored)
        ranked = sorted(scored, key=lambda p: (-p[0], p[1]))
        if top > 0:
            ranked = [p for p in ranked if p[0] >= band * top]
        out.append(AnswerSentence(text, tuple(sid for _, sid in ranked[: max(1, cap) if top > 0 else 1])))
    return CitedAnswer(case_id, tuple(out))


def assemble(
    case_id: str,
    draft: str,
    essentials: Sequence[Sentence],
    budget: int = WORD_BUDGET,
    cap: int = CITATION_CAP,
    band: float = CO_CITATION_BAND,
) -> CitedAnswer:
    """Split the draft, fit it to the word budget and attach citations."""
    pieces = [clean_answer_text(p) for p in split_sentences(strip_citations(draft))]
    pieces = [p for p in pieces if p]
    if not pieces:
        # nothing usable in the draft: answer with the best citable sentence itself
        fallback = [clean_answer_text(s.text) for s in citable(essentials)]
        pieces = [next((t for t in fallback if t), _FALLBACK_TEXT)]
    return attach_citations(case_id, fit_word_budget(pieces, budget), essentials, cap, band)


def check_answer(a: CitedAnswer, budget: int = WORD_BUDGET) -> None:
    if not a.sentences:
        raise AssemblyError(f"case {a.case_id}: answer has no sentences")
    for s in a.sentences:
        if not s.citations:
            raise AssemblyError(f"case {a.case_id}: sentence without citation: {s.text[:40]!r}")
        if any(i <= 0 for i in s.citations):
            raise AssemblyError(f"case {a.case_id}: non-positive citation id")
        if not s.text or "|" in s.text or s.text != squash(s.text):
            raise AssemblyError(f"case {a.case_id}: sentence text must be single-line without '|'")
    if a.word_count() > budget:
        raise AssemblyError(f"case {a.case_id}: {a.word_count()} words exceeds the {budget}-word limit")


def serialize(a: CitedAnswer, budget: int = WORD_BUDGET) -> str:
    check_answer(a, budget)
    return "".join(
        f"{s.text} |{','.join(str(i) for i in sorted(set(s.citations)))}|\n" for s in a.sentences
    )


# --- end-to-end output repair ---------------------------------------------------

_GROUP = re.compile(r"\|\s*(\d+(?:\s*[,;]\s*\d+)*)\s*\||\[\s*(\d+(?:\s*[,;]\s*\d+)*)\s*\]|\(\s*(\d+(?:\s*[,;]\s*\d+)*)\s*\)")
_ANSWER_LABEL = re.compile(r"^\s*answer\s*:\s*", re.I)


def _tidy(text: str) -> str:
    text = squash(text.replace("|", " "))
    text = re.sub(r"\s+([.,;:!?])", r"\1", text)
    text = re.sub(r"([.!?])[.!?,;:]+$", r"\1", text)
    return text.strip()


def repair_lines(text: str, valid_ids: Iterable[int]) -> list[AnswerSentence]:
    valid = set(valid_ids)
    lines: list[AnswerSentence] = []
    for raw in text.splitlines():
        raw = _ANSWER_LABEL.sub("", raw)
        ids: list[int] = []
        for m in _GROUP.finditer(raw):
            group = next(g for g in m.groups() if g is not None)
            ids.extend(int(t) for t in re.findall(r"\d+", group))
        body = _tidy(_GROUP.sub(" ", raw))
        ids = sorted({i for i in ids if i in valid})
        if not body:
            # a citation group on a line of its own belongs to the line above
            if ids and lines:
                prev = lines[-1]
                lines[-1] = AnswerSentence(prev.text, tuple(sorted(set(prev.citations) | set(ids))))
            continue
        if ids:
            lines.append(AnswerSentence(body, tuple(ids)))
    return lines


def repair_end_to_end(text: str, valid_ids: Iterable[int]) -> str:
    """Canonicalize citation syntax in a single-prompt answer; lines with no valid citation are dropped."""
    return "".join(f"{s.text} |{','.join(map(str, s.citations))}|\n" for s in repair_lines(text, valid_ids))


def submission_json(answers: Sequence[tuple[str, str]]) -> str:
    return json.dumps([{"case_id": cid, "answer": ans} for cid, ans in answers], ensure_ascii=False, indent=2) + "\n"


def read_submission(raw: str | bytes) -> list[tuple[str, str]]:
    data = json.loads(raw)
    if not isinstance(data, list):
        raise ValueError("submission must be a JSON array")
    out = []
    for i, item in enumerate(data):
        try:
            out.append((str(item["case_id"]), str(item["answer"])))
        except (KeyError, TypeError):
            raise ValueError(f"submission entry {i} needs case_id and answer") from None
    return out
