"""Grounded patient question answering over numbered clinical-note sentences."""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def data_path(name: str) -> Path:
    """Path of a bundled data file (``mini.xml``, ``mini.key.json``, transcripts)."""
    return Path(str(resources.files("ehrqa.data").joinpath(name)))
