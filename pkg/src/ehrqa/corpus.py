"""Task data model: cases, numbered note sentences and gold relevance keys.

XML is accepted only at ingestion; the canonical interchange format is JSON.
"""

from __future__ import annotations

import enum
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .text import collapse_spaces, squash


class CorpusError(ValueError):
    """Base class for data errors; carries the offending case/sentence."""

    def __init__(self, message: str, case_id: str | None = None, sentence_id: int | None = None):
        self.case_id = case_id
        self.sentence_id = sentence_id
        where = []
        if case_id is not None:
            where.append(f"case {case_id}")
        if sentence_id is not None:
            where.append(f"sentence {sentence_id}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class ParseError(CorpusError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None, **kw):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} at line {line}, column {column}"
        super().__init__(message, **kw)


class ValidationError(CorpusError):
    pass


class RelevanceLabel(enum.Enum):
    ESSENTIAL = "essential"
    SUPPLEMENTARY = "supplementary"
    NOT_RELEVANT = "not-relevant"

    @classmethod
    def parse(cls, raw: str) -> "RelevanceLabel":
        norm = raw.strip().lower().replace("_", "-")
        for label in cls:
            if label.value == norm:
                return label
        raise ValueError(f"unknown relevance label {raw!r}")


@dataclass(frozen=True)
class Sentence:
    id: int
    text: str


@dataclass(frozen=True)
class Case:
    case_id: str
    patient_narrative: str
    clinician_question: str
    note_excerpt: str
    sentences: tuple[Sentence, ...]

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.sentences:
            raise ValidationError("case has no sentences", case_id=self.case_id)
        if not self.clinician_question.strip():
            raise ValidationError("empty clinician question", case_id=self.case_id)
        seen: set[int] = set()
        for s in self.sentences:
            if isinstance(s.id, bool) or not isinstance(s.id, int) or s.id <= 0:
                raise ValidationError(f"sentence id must be a positive integer, got {s.id!r}", case_id=self.case_id)
            if s.id in seen:
                raise ValidationError(f"duplicate sentence id {s.id}", case_id=self.case_id, sentence_id=s.id)
            if not s.text.strip():
                raise ValidationError("empty sentence text", case_id=self.case_id, sentence_id=s.id)
            seen.add(s.id)

    @property
    def sentence_ids(self) -> list[int]:
        return [s.id for s in self.sentences]

    def sentence(self, sid: int) -> Sentence:
        for s in self.sentences:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def numbered_sentences(self) -> str:
        """``id: text`` lines, the form note sentences take inside prompts."""
        return "\n".join(f"{s.id}: {s.text}" for s in self.sentences)


@dataclass(frozen=True)
class CaseKey:
    case_id: str
    labels: Mapping[int, RelevanceLabel]

    def ids_with(self, *labels: RelevanceLabel) -> set[int]:
        return {sid for sid, lab in self.labels.items() if lab in labels}

    @property
    def essential(self) -> set[int]:
        return self.ids_with(RelevanceLabel.ESSENTIAL)

    @property
    def lenient(self) -> set[int]:
        return self.ids_with(RelevanceLabel.ESSENTIAL, RelevanceLabel.SUPPLEMENTARY)

    def is_complete(self, case: Case) -> bool:
        return set(case.sentence_ids) <= set(self.labels)


@dataclass(frozen=True)
class Dataset:
    cases: tuple[Case, ...]
    keys: tuple[CaseKey, ...] | None = None
    _index: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cases", tuple(self.cases))
        if self.keys is not None:
            object.__setattr__(self, "keys", tuple(self.keys))
        for c in self.cases:
            if c.case_id in self._index:
                raise ValidationError("duplicate case id", case_id=c.case_id)
            self._index[c.case_id] = c
        for k in self.keys or ():
            validate_key(k, self._index)

    def case(self, case_id: str) -> Case:
        return self._index[case_id]

    def key_for(self, case_id: str) -> CaseKey | None:
        for k in self.keys or ():
            if k.case_id == case_id:
                return k
        return None

    @property
    def has_keys(self) -> bool:
        return self.keys is not None


def validate_key(key: CaseKey, cases: Mapping[str, Case]) -> None:
    case = cases.get(key.case_id)
    if case is None:
        raise ValidationError(f"unknown case {key.case_id}", case_id=key.case_id)
    known = set(case.sentence_ids)
    for sid in key.labels:
        if sid not in known:
            raise ValidationError(f"label for unknown sentence id {sid}", case_id=key.case_id, sentence_id=sid)


def _child_text(node: ET.Element, tag: str, case_id: str) -> str:
    child = node.find(tag)
    if child is None:
        raise ValidationError(f"missing <{tag}>", case_id=case_id)
    return "".join(child.itertext())


def parse_cases_xml(raw: bytes | str) -> list[Case]:
    try:
        root = ET.fromstring(raw)
    except ET.ParseError as exc:
        line, col = exc.position
        raise ParseError("malformed XML", line=line, column=col) from None
    cases = []
    for node in root.iter("case"):
        case_id = node.get("id")
        if not case_id:
            raise ValidationError("<case> without id attribute")
        sentences = []
        holder = node.find("sentences")
        for s in holder.iter("sentence") if holder is not None else ():
            raw_id = s.get("id", "")
            try:
                sid = int(raw_id)
            except ValueError:
                raise ValidationError(f"sentence id {raw_id!r} is not an integer", case_id=case_id) from None
            sentences.append(Sentence(sid, squash("".join(s.itertext()))))
        cases.append(
            Case(
                case_id=case_id,
                patient_narrative=collapse_spaces(_child_text(node, "patient_narrative", case_id)),
                clinician_question=collapse_spaces(_child_text(node, "clinician_question", case_id)),
                note_excerpt=collapse_spaces(_child_text(node, "note_excerpt", case_id)),
                sentences=sentences,
            )
        )
    return cases


def _parse_key_mapping(data) -> list[CaseKey]:
    if not isinstance(data, dict):
        raise ParseError("key must be a mapping of case_id to labels")
    keys = []
    for case_id, labels in data.items():
        if not isinstance(labels, dict):
            raise ParseError("labels must be a mapping", case_id=case_id)
        parsed: dict[int, RelevanceLabel] = {}
        for raw_sid, raw_label in labels.items():
            try:
                sid = int(raw_sid)
            except (TypeError, ValueError):
                raise ValidationError(f"sentence id {raw_sid!r} is not an integer", case_id=case_id) from None
            if sid <= 0:
                raise ValidationError(f"sentence id {sid} is not positive", case_id=case_id, sentence_id=sid)
            if not isinstance(raw_label, str):
                raise ValidationError(f"unknown relevance label {raw_label!r}", case_id=case_id, sentence_id=sid)
            try:
                parsed[sid] = RelevanceLabel.parse(raw_label)
            except ValueError as exc:
                raise ValidationError(str(exc), case_id=case_id, sentence_id=sid) from None
        keys.append(CaseKey(case_id, dict(sorted(parsed.items()))))
    return keys


def parse_key_json(raw: bytes | str) -> list[CaseKey]:
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    return _parse_key_mapping(data)


def keys_to_json(keys: Iterable[CaseKey]) -> dict:
    return {
        k.case_id: {str(sid): k.labels[sid].value for sid in sorted(k.labels)}
        for k in keys
    }


def dataset_to_json(ds: Dataset) -> dict:
    out: dict = {
        "cases": [
            {
                "case_id": c.case_id,
                "patient_narrative": c.patient_narrative,
                "clinician_question": c.clinician_question,
                "note_excerpt": c.note_excerpt,
                "sentences": [{"id": s.id, "text": s.text} for s in c.sentences],
            }
            for c in ds.cases
        ]
    }
    if ds.keys is not None:
        out["keys"] = keys_to_json(ds.keys)
    return out


def dataset_from_json(data: dict) -> Dataset:
    try:
        cases = [
            Case(
                case_id=str(c["case_id"]),
                patient_narrative=c["patient_narrative"],
                clinician_question=c["clinician_question"],
                note_excerpt=c["note_excerpt"],
                sentences=[Sentence(s["id"], s["text"]) for s in c["sentences"]],
            )
            for c in data["cases"]
        ]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"canonical dataset JSON missing field {exc}") from None
    keys = _parse_key_mapping(data["keys"]) if "keys" in data else None
    return Dataset(cases, keys)


def dumps_dataset(ds: Dataset) -> str:
    return json.dumps(dataset_to_json(ds), ensure_ascii=False, indent=2) + "\n"


def load_dataset(cases_path: str | Path, key_path: str | Path | None = None) -> Dataset:
    """Load cases from task XML or canonical dataset JSON, plus an optional key file.

    A key file overrides keys embedded in a canonical JSON dataset.
    """
    raw = Path(cases_path).read_bytes()
    if raw.lstrip().startswith(b"<"):
        cases, keys = parse_cases_xml(raw), None
    else:
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from None
        ds = dataset_from_json(data)
        cases, keys = list(ds.cases), ds.keys
    if key_path is not None:
        keys = parse_key_json(Path(key_path).read_bytes())
    return Dataset(cases, keys)
