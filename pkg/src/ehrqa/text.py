"""Tokenizers and whitespace helpers shared across modules."""

from __future__ import annotations

import re

CITATION_SPAN = re.compile(r"\|[^|\n]*\|")
_WORD = re.compile(r"[^\W_]+")
_METRIC_TOKEN = re.compile(r"[^\W_]+|[^\w\s]|_")
_SPACES = re.compile(r"[ \t\f\v]+")


def squash(text: str) -> str:
    """Collapse every whitespace run (line breaks included) to one space."""
    return " ".join(text.split())


def collapse_spaces(text: str) -> str:
    """Collapse spaces/tabs inside each line, strip lines, keep line breaks."""
    lines = [_SPACES.sub(" ", line).strip() for line in text.splitlines()]
    return "\n".join(lines).strip()


def strip_citations(text: str) -> str:
    return CITATION_SPAN.sub(" ", text)


def word_tokens(text: str) -> list[str]:
    """Lowercased, punctuation-stripped word unigrams (TF-IDF vocabulary)."""
    return _WORD.findall(text.lower())


def metric_tokens(text: str) -> list[str]:
    """Tokenizer used by every lexical relevance metric.

    Citation spans are removed, text is lowercased, and punctuation marks
    become tokens of their own.
    """
    return _METRIC_TOKEN.findall(strip_citations(text).lower())


def count_words(text: str) -> int:
    return len(text.split())
