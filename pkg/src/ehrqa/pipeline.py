"""Composition of the three answering systems over a dataset."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

from . import answer as ans
from .corpus import Case, Dataset
from .genclient import (
    BackendError,
    ChatCompletionsBackend,
    GenerationBackend,
    Generator,
    HttpConfig,
    MockBackend,
    TranscriptBackend,
)
from .selection import (
    CalibratedThreshold,
    LexicalScorer,
    RemoteReranker,
    ScoringBackend,
    SelectionError,
    SelectionResult,
    calibrate,
    prompt_bindings,
    read_manifest_threshold,
    select_by_prompt_individual,
    select_by_prompt_list,
    select_by_rerank,
)

log = logging.getLogger(__name__)

STRATEGIES = ("e2e", "two_step_prompt_list", "two_step_prompt_individual", "two_step_rerank")
BACKENDS = ("mock", "transcript", "http")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    strategy: str = "two_step_rerank"
    backend: str = "mock"
    transcript: str | None = None
    endpoint: str | None = None
    model: str = ""
    api_key_header: str = "Authorization"
    api_key_env: str = "EHRQA_API_KEY"
    retries: int = 3
    scorer: str = "lexical"
    scorer_endpoint: str | None = None
    scorer_model: str = ""
    e2e_template: str = "e2e"
    list_template: str = "list_role"
    individual_template: str = "indiv_role"
    second_step_template: str = "second_step"
    threshold_source: str | None = None  # "calibrate" or a manifest path
    source_split: str = "dev"
    cap: int = ans.CITATION_CAP
    band: float = ans.CO_CITATION_BAND
    budget: int = ans.WORD_BUDGET
    concurrency: int = 4
    max_tokens: int = 512
    temperature: float = 0.0
    seed: int | None = None
    out: str = "run"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.backend == "transcript" and not self.transcript:
            raise ConfigError("transcript backend needs a transcript file")
        if self.backend == "http" and not self.endpoint:
            raise ConfigError("http backend needs an endpoint")
        if self.scorer not in ("lexical", "remote"):
            raise ConfigError(f"scorer must be lexical or remote, got {self.scorer!r}")
        if self.scorer == "remote" and not self.scorer_endpoint:
            raise ConfigError("remote scorer needs scorer_endpoint")
        if self.strategy == "two_step_rerank" and not self.threshold_source:
            raise ConfigError("two_step_rerank needs a threshold source (calibrate or a manifest path)")
        if self.cap < 1 or self.budget < 1 or self.concurrency < 1:
            raise ConfigError("cap, budget and concurrency must be positive")
        if not 0 < self.band <= 1:
            raise ConfigError("band must lie in (0, 1]")

    @property
    def template_name(self) -> str:
        return {
            "e2e": self.e2e_template,
            "two_step_prompt_list": self.list_template,
            "two_step_prompt_individual": self.individual_template,
            "two_step_rerank": self.second_step_template,
        }[self.strategy]


def make_backend(cfg: RunConfig) -> GenerationBackend:
    if cfg.backend == "transcript":
        return TranscriptBackend(cfg.transcript)
    if cfg.backend == "mock":
        return MockBackend.from_file(cfg.transcript) if cfg.transcript else MockBackend(default="")
    return ChatCompletionsBackend(
        HttpConfig(
            endpoint=cfg.endpoint,
            model=cfg.model,
            api_key_header=cfg.api_key_header,
            api_key_env=cfg.api_key_env,
            retries=cfg.retries,
            concurrency=cfg.concurrency,
        )
    )


def make_scorer(cfg: RunConfig) -> ScoringBackend:
    if cfg.scorer == "remote":
        return RemoteReranker(
            HttpConfig(cfg.scorer_endpoint, cfg.scorer_model, cfg.api_key_header, cfg.api_key_env, retries=cfg.retries)
        )
    return LexicalScorer()


@dataclass
class CaseOutcome:
    case_id: str
    answer: str | None = None
    selection: SelectionResult | None = None
    error: str | None = None
    backend_failure: bool = False


@dataclass
class RunResult:
    outcomes: list[CaseOutcome]
    manifest: dict
    failures: list[CaseOutcome] = field(default_factory=list)

    def submission(self) -> str:
        return ans.submission_json([(o.case_id, o.answer) for o in self.outcomes if o.answer is not None])

    def selections(self) -> str:
        rows = []
        for o in self.outcomes:
            if o.selection is None:
                continue
            row = {"case_id": o.case_id, "strategy": o.selection.strategy.value, "essentials": sorted(o.selection.essentials)}
            if o.selection.scores is not None:
                row["scores"] = {str(s.sentence_id): s.score for s in o.selection.scores}
            rows.append(row)
        return json.dumps(rows, indent=2) + "\n"


def fit_cited_lines(case_id: str, lines: Sequence[ans.AnswerSentence], budget: int) -> ans.CitedAnswer:
    """Greedy prefix of already-cited lines under the word budget."""
    kept_text = ans.fit_word_budget([l.text for l in lines], budget)
    kept = [ans.AnswerSentence(t, l.citations) for t, l in zip(kept_text, lines)]
    return ans.CitedAnswer(case_id, tuple(kept))


class Pipeline:
    def __init__(self, cfg: RunConfig, backend: GenerationBackend | None = None, scorer: ScoringBackend | None = None):
        cfg.validate()
        self.cfg = cfg
        self.backend = backend or make_backend(cfg)
        self.scorer = scorer or make_scorer(cfg)
        self.generator = Generator(self.backend, cfg.max_tokens, cfg.temperature, cfg.seed)
        self.threshold: CalibratedThreshold | None = None

    def prepare(self, dataset: Dataset) -> None:
        if self.cfg.strategy != "two_step_rerank":
            return
        source = self.cfg.threshold_source
        if source == "calibrate":
            if not dataset.has_keys:
                raise ConfigError("calibration requires gold labels")
            self.threshold = calibrate(dataset.cases, dataset.keys, self.scorer, self.cfg.source_split)
        else:
            self.threshold = read_manifest_threshold(source)

    def select(self, c: Case) -> SelectionResult:
        s = self.cfg.strategy
        if s == "two_step_rerank":
            return select_by_rerank(c, self.scorer, self.threshold)
        if s == "two_step_prompt_list":
            return select_by_prompt_list(c, self.generator, self.cfg.list_template)
        workers = min(self.cfg.concurrency, len(c.sentences))
        return select_by_prompt_individual(c, self.generator, self.cfg.individual_template, workers)

    def answer_two_step(self, c: Case) -> tuple[ans.CitedAnswer, SelectionResult]:
        sel = self.select(c)
        essentials = [s for s in c.sentences if s.id in sel.essentials]
        draft = self.generator.complete(
            self.cfg.second_step_template,
            prompt_bindings(c, "\n".join(s.text for s in essentials)),
        )
        cited = ans.assemble(c.case_id, draft, essentials, self.cfg.budget, self.cfg.cap, self.cfg.band)
        return cited, sel

    def answer_e2e(self, c: Case) -> ans.CitedAnswer:
        completion = self.generator.complete(self.cfg.e2e_template, prompt_bindings(c, c.numbered_sentences()))
        lines = ans.repair_lines(completion, c.sentence_ids)
        if lines:
            return fit_cited_lines(c.case_id, lines, self.cfg.budget)
        log.warning("case %s: repair left no cited line; citing by similarity instead", c.case_id)
        return ans.assemble(c.case_id, completion, list(c.sentences), self.cfg.budget, self.cfg.cap, self.cfg.band)

    def run_case(self, c: Case) -> CaseOutcome:
        try:
            if self.cfg.strategy == "e2e":
                cited, sel = self.answer_e2e(c), None
            else:
                cited, sel = self.answer_two_step(c)
            return CaseOutcome(c.case_id, ans.serialize(cited, self.cfg.budget), sel)
        except BackendError as exc:
            return CaseOutcome(c.case_id, error=str(exc), backend_failure=True)
        except SelectionError as exc:
            return CaseOutcome(c.case_id, error=str(exc), backend_failure=isinstance(exc.__cause__, BackendError))
        except (ans.AssemblyError, ValueError) as exc:
            return CaseOutcome(c.case_id, error=str(exc))

    def manifest(self) -> dict:
        return {
            "strategy": self.cfg.strategy,
            "threshold": self.threshold.to_json() if self.threshold else None,
            "backend_id": self.backend.backend_id,
            "scorer_id": self.scorer.backend_id if self.cfg.strategy == "two_step_rerank" else None,
            "template_name": self.cfg.template_name,
            "budget": self.cfg.budget,
            "cap": self.cfg.cap,
        }

    def run(self, dataset: Dataset) -> RunResult:
        if not dataset.cases:
            raise ConfigError("dataset has no cases")
        self.prepare(dataset)
        with ThreadPoolExecutor(max_workers=self.cfg.concurrency) as pool:
            outcomes = list(pool.map(self.run_case, dataset.cases))
        failures = [o for o in outcomes if o.answer is None]
        for o in failures:
            log.error("case %s failed: %s", o.case_id, o.error)
        return RunResult(outcomes, self.manifest(), failures)


def config_to_json(cfg: RunConfig) -> dict:
    return asdict(cfg)
