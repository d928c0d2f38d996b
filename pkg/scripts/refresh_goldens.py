#!/usr/bin/env python3
"""Regenerate the frozen golden files under tests/golden/ from the bundled mini corpus.

Only run this after an intended behaviour change; the test suite compares
against these files byte for byte.
"""

from __future__ import annotations

import json
import shutil
import tempfile
from pathlib import Path

from ehrqa import data_path
from ehrqa.cli import main
from ehrqa.corpus import load_dataset
from ehrqa.genclient import load_template, render_template
from ehrqa.selection import prompt_bindings

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"


def run(strategy: str, tmp: Path) -> None:
    out = tmp / strategy
    cases, key = str(data_path("mini.xml")), str(data_path("mini.key.json"))
    args = ["run", "--cases", cases, "--key", key, "--strategy", strategy, "--backend", "transcript",
            "--transcript", str(data_path("mini.transcript.jsonl")), "--out", str(out)]
    if strategy == "two_step_rerank":
        args.append("--calibrate")
    assert main(args) == 0
    assert main(["evaluate", str(out / "submission.json"), "--cases", cases, "--key", key,
                 "--out", str(out / "report.json")]) == 0
    for name in ("submission.json", "report.json", "run_manifest.json"):
        shutil.copy(out / name, GOLDEN / f"{strategy}.{name}")


def main_() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(data_path("mini.xml"), data_path("mini.key.json"))
    assert main(["ingest", "--cases", str(data_path("mini.xml")), "--key", str(data_path("mini.key.json")),
                 "--out", str(GOLDEN / "mini.dataset.json")]) == 0
    case = ds.cases[0]
    messages = render_template(load_template("e2e"), prompt_bindings(case, case.numbered_sentences()))
    (GOLDEN / "e2e_case1.messages.json").write_text(json.dumps(messages, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    with tempfile.TemporaryDirectory() as tmp:
        for strategy in ("e2e", "two_step_prompt_list", "two_step_prompt_individual", "two_step_rerank"):
            run(strategy, Path(tmp))
    print(f"goldens written to {GOLDEN}")


if __name__ == "__main__":
    main_()
