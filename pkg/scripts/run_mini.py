#!/usr/bin/env python3
"""Run all four pipelines on the bundled 4-case corpus and print their scores.

Uses the recorded transcript, so it needs no model server:

    python scripts/run_mini.py --out runs/mini
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
from pathlib import Path

from ehrqa import data_path
from ehrqa.cli import main

STRATEGIES = ("e2e", "two_step_prompt_list", "two_step_prompt_individual", "two_step_rerank")


def run_one(strategy: str, out: Path, cases: str, key: str) -> dict:
    args = ["run", "--cases", cases, "--key", key, "--strategy", strategy, "--backend", "transcript",
            "--transcript", str(data_path("mini.transcript.jsonl")), "--out", str(out)]
    if strategy == "two_step_rerank":
        args.append("--calibrate")
    with contextlib.redirect_stdout(io.StringIO()):
        if main(args) != 0:
            raise SystemExit(f"{strategy}: run failed")
        if main(["evaluate", str(out / "submission.json"), "--cases", cases, "--key", key,
                 "--out", str(out / "report.json")]) != 0:
            raise SystemExit(f"{strategy}: evaluation failed")
    return json.loads((out / "report.json").read_text(encoding="utf-8"))


def main_() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/mini")
    p.add_argument("--cases", default=str(data_path("mini.xml")))
    p.add_argument("--key", default=str(data_path("mini.key.json")))
    args = p.parse_args()

    print(f"{'strategy':30s} {'overall':>8s} {'relev.':>8s} {'fact.':>8s} {'lenient':>8s}")
    for strategy in STRATEGIES:
        rep = run_one(strategy, Path(args.out) / strategy, args.cases, args.key)
        fact = rep["factuality"]
        print(f"{strategy:30s} {rep['overall']:8.3f} {rep['relevance']['aggregate']:8.3f} "
              f"{fact['score']:8.3f} {fact['lenient']['micro_f1']:8.3f}")
    print(f"outputs under {args.out}/")


if __name__ == "__main__":
    main_()
