"""Command line entry point: ``ehrqa {ingest,calibrate,run,evaluate,report-merge}``.

Exit codes: 0 success, 1 validation/config error, 2 backend failure,
3 some cases produced no answer.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import answer as ans
from .corpus import CorpusError, Dataset, dumps_dataset, load_dataset
from .evaluation import RemoteMetric, evaluate_submission, overall
from .genclient import BackendError, HttpConfig, TemplateError
from .pipeline import ConfigError, Pipeline, RunConfig, make_scorer
from .selection import CalibrationError, SelectionError, calibrate, threshold_manifest, write_manifest

log = logging.getLogger("ehrqa")

EXIT_OK, EXIT_INVALID, EXIT_BACKEND, EXIT_PARTIAL = 0, 1, 2, 3


def _write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dataset(args) -> Dataset:
    return load_dataset(args.cases, args.key)


def cmd_ingest(args) -> int:
    ds = _dataset(args)
    _write(args.out, dumps_dataset(ds))
    n_keys = len(ds.keys) if ds.keys is not None else 0
    print(f"wrote {args.out}: {len(ds.cases)} cases, {n_keys} keys")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    ds = _dataset(args)
    if not ds.has_keys:
        raise CalibrationError("calibration requires gold labels")
    cfg = RunConfig(scorer=args.scorer, scorer_endpoint=args.scorer_endpoint, threshold_source="calibrate")
    scorer = make_scorer(cfg)
    t = calibrate(ds.cases, ds.keys, scorer, args.split)
    write_manifest(args.out, threshold_manifest(t, scorer.backend_id))
    print(f"threshold {t.value:.6f} (Youden J {t.youden_j:.6f}) from split {t.source_split!r} -> {args.out}")
    return EXIT_OK


def _run_config(args) -> RunConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    cfg = RunConfig.from_dict(data)
    overrides = {
        "strategy": args.strategy,
        "backend": args.backend,
        "transcript": args.transcript,
        "threshold_source": args.manifest,
        "out": args.out,
        "concurrency": args.concurrency,
        "budget": args.budget,
        "cap": args.cap,
    }
    if args.calibrate:
        overrides["threshold_source"] = "calibrate"
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    cfg.validate()
    return cfg


def cmd_run(args) -> int:
    cfg = _run_config(args)
    ds = _dataset(args)
    result = Pipeline(cfg).run(ds)
    out = Path(cfg.out)
    _write(out / "submission.json", result.submission())
    _write(out / "run_manifest.json", json.dumps(result.manifest, indent=2, sort_keys=True) + "\n")
    _write(out / "selections.json", result.selections())
    done = len(result.outcomes) - len(result.failures)
    print(f"{cfg.strategy}: answered {done}/{len(result.outcomes)} cases -> {out}")
    if not result.failures:
        return EXIT_OK
    for f in result.failures:
        print(f"case {f.case_id}: {f.error}", file=sys.stderr)
    if done == 0 and all(f.backend_failure for f in result.failures):
        return EXIT_BACKEND
    return EXIT_PARTIAL


def _parse_pairs(items, what: str) -> dict[str, str]:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise ConfigError(f"{what} expects NAME=VALUE, got {item!r}")
        out[name] = value
    return out


def cmd_evaluate(args) -> int:
    ds = _dataset(args)
    answers = ans.read_submission(Path(args.submission).read_bytes())
    scorers = {
        name: RemoteMetric(name, HttpConfig(url)) for name, url in _parse_pairs(args.metric_endpoint, "--metric-endpoint").items()
    }
    report = evaluate_submission(answers, ds, scorers)
    if args.out:
        _write(args.out, report.dumps())
    print(report.table(), end="")
    return EXIT_OK


def merge_report(base: dict | None, relevance=None, factuality=None, plugged=None) -> dict:
    """Overlay externally computed scores on a report and recompute the overall score."""
    rep = json.loads(json.dumps(base)) if base else {"relevance": {}, "factuality": {"strict": {}, "lenient": {}}, "violations": 0}
    rel = rep.setdefault("relevance", {})
    if plugged:
        rel.setdefault("plugged", {}).update(plugged)
        parts = [rel[m] for m in ("bleu", "rouge_l_f", "sari") if m in rel] + list(rel["plugged"].values())
        rel["aggregate"] = sum(parts) / len(parts)
    if relevance is not None:
        rel["aggregate"] = relevance
    fact = rep.setdefault("factuality", {})
    if factuality is not None:
        fact["score"] = factuality
        fact.setdefault("strict", {})["micro_f1"] = factuality
    if "aggregate" not in rel or "score" not in fact:
        raise ConfigError("merged report needs both a relevance aggregate and a factuality score")
    rep["overall"] = overall(rel["aggregate"], fact["score"]).overall
    return rep


def cmd_report_merge(args) -> int:
    base = json.loads(Path(args.report).read_text(encoding="utf-8")) if args.report else None
    plugged = {k: float(v) for k, v in _parse_pairs(args.plugged, "--plugged").items()}
    rep = merge_report(base, args.relevance, args.factuality, plugged)
    text = json.dumps(rep, indent=2) + "\n"
    if args.out:
        _write(args.out, text)
    print(f"overall {rep['overall']:.3f}  relevance {rep['relevance']['aggregate']:.3f}  factuality {rep['factuality']['score']:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ehrqa", description="Grounded patient question answering over clinical notes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp, key=True):
        sp.add_argument("--cases", required=True, help="task XML or canonical dataset JSON")
        if key:
            sp.add_argument("--key", help="gold relevance key JSON")

    sp = sub.add_parser("ingest", help="validate task files and write canonical dataset JSON")
    data_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("calibrate", help="fit the Youden-optimal rerank threshold on labeled cases")
    data_args(sp)
    sp.add_argument("--scorer", default="lexical", choices=("lexical", "remote"))
    sp.add_argument("--scorer-endpoint")
    sp.add_argument("--split", default="dev", help="label recorded as the threshold's source split")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("run", help="answer every case with one of the pipelines")
    data_args(sp)
    sp.add_argument("--config", help="RunConfig JSON; flags override it")
    sp.add_argument("--strategy", choices=("e2e", "two_step_prompt_list", "two_step_prompt_individual", "two_step_rerank"))
    sp.add_argument("--backend", choices=("mock", "transcript", "http"))
    sp.add_argument("--transcript", help="transcript JSONL (transcript backend) or canned JSON (mock backend)")
    sp.add_argument("--manifest", help="threshold manifest from `calibrate`")
    sp.add_argument("--calibrate", action="store_true", help="calibrate the threshold on --key labels")
    sp.add_argument("--out")
    sp.add_argument("--concurrency", type=int)
    sp.add_argument("--budget", type=int)
    sp.add_argument("--cap", type=int)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("evaluate", help="score a submission against gold keys")
    sp.add_argument("submission")
    data_args(sp)
    sp.add_argument("--out", help="report JSON path")
    sp.add_argument("--metric-endpoint", action="append", metavar="NAME=URL", help="external model-based metric scorer")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("report-merge", help="overlay external scores on a report and recompute overall")
    sp.add_argument("report", nargs="?")
    sp.add_argument("--relevance", type=float)
    sp.add_argument("--factuality", type=float)
    sp.add_argument("--plugged", action="append", metavar="NAME=SCORE")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report_merge)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BackendError, SelectionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (CorpusError, ConfigError, CalibrationError, TemplateError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
