"""Pipeline orchestration: corpus -> extraction -> generation ->
validation -> SUT -> oracle, with JSONL artifacts for every stage.

Every run gets a content-addressed id derived from the config snapshot
and the corpus digest, so reruns against the same inputs land in the
same directory and are served from the response cache.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import corpus as corpus_mod
from . import oracle as oracle_mod
from . import sut as sut_mod
from .config import RunConfig
from .corpus import ContextRecord, Corpus
from .errors import ConfigError, DataError, ProviderError, SutError, SutTimeoutError
from .extraction import extract_entities, extract_relations
from .gateway import (
    FileCache,
    Gateway,
    HashingEmbedder,
    HttpChatProvider,
    HttpEmbeddingProvider,
    MockChatProvider,
    SentenceTransformerEmbedder,
)
from .generation import (
    CandidateTest,
    candidate_to_dict,
    gen_entity_questions,
    gen_relation_questions,
)
from .oracle import Verdict, adjudicate, verdict_to_dict
from .sut import MockSutAdapter, SutAdapter, query
from .syntax import SyntaxBackend, build_backend, parse_context
from .textnorm import normalize_answer
from .validation import OUTCOMES, TestCase, ValidationReport, dump_test_case, validate

logger = logging.getLogger(__name__)


# -- builders -----------------------------------------------------------------


def build_gateway(config: RunConfig, mock_dir: str | Path | None = None) -> Gateway:
    p = config.provider
    if mock_dir is not None:
        chat = MockChatProvider.from_file(Path(mock_dir) / "chat.json")
    elif p.chat_provider == "mock":
        raise ConfigError("chat provider 'mock' needs --mock-providers DIR")
    elif p.chat_provider == "http":
        if not p.chat_base_url:
            raise ConfigError("chat_base_url required for the http chat provider")
        chat = HttpChatProvider(p.chat_base_url, api_key=p.api_key())
    else:
        raise ConfigError(f"unknown chat provider {p.chat_provider!r}")

    if p.embedding_provider == "hashing":
        embedder = HashingEmbedder(dimension=p.embedding_dimension)
    elif p.embedding_provider == "http":
        if not p.embedding_base_url:
            raise ConfigError("embedding_base_url required for the http embedder")
        embedder = HttpEmbeddingProvider(
            p.embedding_base_url,
            model_id=p.embedding_model,
            dimension=p.embedding_dimension,
            api_key=p.api_key(),
        )
    elif p.embedding_provider == "sentence-transformer":
        embedder = SentenceTransformerEmbedder(p.embedding_model)
    else:
        raise ConfigError(f"unknown embedding provider {p.embedding_provider!r}")

    cache_dir = Path(config.cache_dir)
    return Gateway(
        chat_provider=chat,
        embedding_provider=embedder,
        cache=FileCache(cache_dir),
        max_retries=p.max_retries,
        rate_per_s=p.rate_per_s,
        max_in_flight=p.max_in_flight,
        audit_log=cache_dir / "requests.jsonl",
    )


def build_syntax_backend(config: RunConfig) -> SyntaxBackend:
    s = config.syntax
    if s.backend == "static":
        if not s.fixture_path:
            raise ConfigError("static syntax backend needs fixture_path")
        return build_backend("static", fixture_path=s.fixture_path)
    if s.backend == "http":
        if not s.url:
            raise ConfigError("http syntax backend needs url")
        return build_backend("http", url=s.url)
    return build_backend(s.backend, lang=s.lang)


def build_adapter(config: RunConfig) -> SutAdapter:
    s = config.sut
    if s.kind == "mock":
        if not s.script_path:
            raise ConfigError("mock SUT needs script_path")
        return MockSutAdapter.from_file(s.script_path)
    if s.kind == "http":
        if not s.url:
            raise ConfigError("http SUT needs url")
        return sut_mod.HttpSutAdapter(s.url, identity=s.identity or "http-sut",
                                      timeout_s=s.timeout_s)
    if s.kind == "subprocess":
        if not s.cmd:
            raise ConfigError("subprocess SUT needs cmd")
        return sut_mod.SubprocessSutAdapter(
            s.cmd, identity=s.identity or "subprocess-sut", timeout_s=s.timeout_s
        )
    raise ConfigError(f"unknown SUT kind {s.kind!r}")


def load_corpus(config: RunConfig) -> Corpus:
    if not config.corpus.path:
        raise ConfigError("corpus path is required")
    loaded = corpus_mod.load(config.corpus.dataset, config.corpus.path)
    if config.corpus.sample_n is not None:
        loaded = corpus_mod.sample(loaded, config.corpus.sample_n, config.corpus.seed)
    return loaded


# -- reports ------------------------------------------------------------------


@dataclass(frozen=True)
class BugReport:
    test_ref: str
    context_id: str
    question: str
    gold_answer: str
    sut_answer: str
    kind: str
    stage1_similarity: float
    stage2_score: int | None
    run_id: str

    def to_dict(self) -> dict:
        return {
            "test_ref": self.test_ref,
            "context_id": self.context_id,
            "question": self.question,
            "gold_answer": self.gold_answer,
            "sut_answer": self.sut_answer,
            "kind": self.kind,
            "stage1_similarity": self.stage1_similarity,
            "stage2_score": self.stage2_score,
            "run_id": self.run_id,
        }


@dataclass
class RunReport:
    run_id: str
    config_snapshot: dict
    counts: dict
    wall_time_s: float
    cache_hit_rate: float
    incomplete: bool = False
    context_errors: list = field(default_factory=list)

    def __post_init__(self):
        c = self.counts
        if c["accepted"] > c["candidates"]:
            raise DataError("accepted tests exceed candidates")
        if c["defects"] > c["accepted"]:
            raise DataError("defects exceed accepted tests")
        rejected = sum(v for k, v in c.items() if k.startswith("rejected_"))
        if c["accepted"] + rejected != c["candidates"]:
            raise DataError("validation outcomes do not partition the candidates")

    def to_dict(self) -> dict:
        from . import prompts

        return {
            "run_id": self.run_id,
            "config": self.config_snapshot,
            "prompt_catalog": prompts.CATALOG_VERSION,
            "counts": self.counts,
            "wall_time_s": self.wall_time_s,
            "cache_hit_rate": self.cache_hit_rate,
            "incomplete": self.incomplete,
            "context_errors": list(self.context_errors),
        }


@dataclass
class RunResult:
    report: RunReport
    bugs: list[BugReport]
    tests: list[TestCase]
    out_dir: Path


def compute_run_id(config: RunConfig, corpus: Corpus) -> str:
    corpus_digest = hashlib.sha256(
        "\x1e".join(f"{r.id}\x1f{r.text}" for r in corpus.records).encode("utf-8")
    ).hexdigest()
    blob = json.dumps(
        {"config": config.snapshot(), "corpus": corpus_digest}, sort_keys=True
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


class _JsonlWriter:
    def __init__(self, path: Path):
        self.path = path
        self._fh = open(path, "w", encoding="utf-8")

    def write(self, row: dict) -> None:
        self._fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")

    def close(self) -> None:
        self._fh.close()


@dataclass
class _ContextResult:
    record: ContextRecord
    sentences: int = 0
    entities: list = field(default_factory=list)
    relations: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    tests: list = field(default_factory=list)
    validation: ValidationReport | None = None
    verdicts: list = field(default_factory=list)
    sut_answers: dict = field(default_factory=dict)
    error: str | None = None


def _process_context(
    record: ContextRecord,
    config: RunConfig,
    gateway: Gateway,
    backend: SyntaxBackend,
) -> _ContextResult:
    result = _ContextResult(record=record)
    p = config.provider
    try:
        sentences = parse_context(record, backend)
        result.sentences = len(sentences)
        result.entities = extract_entities(sentences, record)
        result.relations = extract_relations(
            record,
            gateway,
            model_id=p.chat_model,
            temperature=p.extraction_temperature,
            max_output=p.max_output,
        )
        candidates: list[CandidateTest] = []
        for entity in result.entities:
            candidates.extend(
                gen_entity_questions(
                    record,
                    entity,
                    gateway,
                    model_id=p.chat_model,
                    count=config.entity_question_count,
                    temperature=p.generation_temperature,
                    max_output=p.max_output,
                )
            )
        for triple in result.relations:
            candidates.extend(
                gen_relation_questions(
                    record,
                    triple,
                    gateway,
                    model_id=p.chat_model,
                    count=config.relation_question_count,
                    temperature=p.generation_temperature,
                    max_output=p.max_output,
                )
            )
        result.candidates = candidates
        tests, report = validate(
            candidates,
            {record.id: record},
            gateway,
            model_id=p.chat_model,
            threshold=config.thresholds.consistency,
            k=config.reask_k,
            reask_temperature=p.reask_temperature,
            denied=config.deny_set(),
        )
        result.tests = tests
        result.validation = report
    except ProviderError as exc:
        logger.error("context %s failed: %s", record.id, exc)
        result.error = str(exc)
    return result


def _adjudicate_tests(
    result: _ContextResult,
    adapter: SutAdapter,
    config: RunConfig,
    gateway: Gateway,
) -> None:
    for test in result.tests:
        try:
            answer = query(adapter, test, result.record)
        except SutTimeoutError as exc:
            logger.warning("SUT timeout on %s: %s", test.digest(), exc)
            result.verdicts.append(
                Verdict(
                    outcome=oracle_mod.OUTCOME_INCONCLUSIVE,
                    stage1_similarity=float("nan"),
                    stage2=None,
                    test_ref=test.digest(),
                )
            )
            continue
        except SutError as exc:
            logger.warning("SUT error on %s: %s", test.digest(), exc)
            result.verdicts.append(
                Verdict(
                    outcome=oracle_mod.OUTCOME_INCONCLUSIVE,
                    stage1_similarity=float("nan"),
                    stage2=None,
                    test_ref=test.digest(),
                )
            )
            continue
        result.sut_answers[test.digest()] = answer
        verdict = adjudicate(
            test,
            answer,
            result.record,
            gateway,
            judge_model_id=config.judge_model,
            stage1_threshold=config.thresholds.oracle_stage1,
            judge_threshold=config.thresholds.judge,
        )
        result.verdicts.append(verdict)


def run_pipeline(
    config: RunConfig,
    adapter: SutAdapter,
    gateway: Gateway | None = None,
    syntax_backend: SyntaxBackend | None = None,
    mock_dir: str | Path | None = None,
) -> RunResult:
    """Execute the full pipeline and persist every stage as JSONL."""
    started = time.monotonic()
    config.validate()
    loaded = load_corpus(config)
    gateway = gateway or build_gateway(config, mock_dir=mock_dir)
    backend = syntax_backend or build_syntax_backend(config)
    run_id = compute_run_id(config, loaded)
    out_dir = Path(config.output_dir) / run_id
    out_dir.mkdir(parents=True, exist_ok=True)

    records = list(loaded.records)
    if config.workers > 1 and records:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(
                pool.map(
                    lambda r: _process_context(r, config, gateway, backend), records
                )
            )
    else:
        results = [_process_context(r, config, gateway, backend) for r in records]

    sut_errors: list[dict] = []
    wants_sut = any(r.tests for r in results if r.error is None)
    if wants_sut and not adapter.health_check():
        logger.error("SUT %s failed its health check; skipping adjudication", adapter.identity)
        sut_errors.append({"context_id": "*", "error": "SUT health check failed"})
    else:
        for result in results:
            if result.error is None:
                _adjudicate_tests(result, adapter, config, gateway)

    bugs: list[BugReport] = []
    all_tests: list[TestCase] = []
    counts = {
        "contexts": len(records),
        "sentences": 0,
        "entities": 0,
        "relations": 0,
        "candidates": 0,
        "accepted": 0,
        "sut_queries": 0,
        "passes": 0,
        "defects": 0,
        "inconclusive": 0,
    }
    for outcome in OUTCOMES:
        if outcome != "accepted":
            counts[outcome] = 0

    writers = {
        name: _JsonlWriter(out_dir / f"{name}.jsonl")
        for name in ("contexts", "entities", "relations", "candidates", "tests",
                     "verdicts", "bugs")
    }
    validation_entries = []
    context_errors = []
    try:
        for result in results:
            rec = result.record
            writers["contexts"].write(
                {"id": rec.id, "source": rec.source, "text": rec.text}
            )
            if result.error is not None:
                context_errors.append({"context_id": rec.id, "error": result.error})
                continue
            counts["sentences"] += result.sentences
            counts["entities"] += len(result.entities)
            counts["relations"] += len(result.relations)
            counts["candidates"] += len(result.candidates)
            counts["accepted"] += len(result.tests)
            for entity in result.entities:
                writers["entities"].write(
                    {
                        "context_id": rec.id,
                        "kind": entity.kind,
                        "text": entity.text,
                        "sentence_index": entity.sentence_index,
                        "span": list(entity.span),
                    }
                )
            for triple in result.relations:
                writers["relations"].write(
                    {
                        "context_id": rec.id,
                        "entity1": triple.entity1,
                        "relation": triple.relation,
                        "entity2": triple.entity2,
                        "explanation": triple.explanation,
                    }
                )
            for cand in result.candidates:
                writers["candidates"].write(candidate_to_dict(cand))
            for test in result.tests:
                writers["tests"].write(dump_test_case(test))
            all_tests.extend(result.tests)
            if result.validation is not None:
                report_dict = result.validation.to_dict()
                validation_entries.append(
                    {"context_id": rec.id, **report_dict}
                )
                for outcome, n in report_dict["counts"].items():
                    if outcome != "accepted":
                        counts[outcome] += n
            for verdict in result.verdicts:
                counts["sut_queries"] += 1
                row = verdict_to_dict(
                    verdict,
                    sut_identity=adapter.identity,
                    stage1_threshold=config.thresholds.oracle_stage1,
                    judge_threshold=config.thresholds.judge,
                )
                writers["verdicts"].write(row)
                if verdict.outcome == oracle_mod.OUTCOME_PASS:
                    counts["passes"] += 1
                elif verdict.outcome == oracle_mod.OUTCOME_DEFECT:
                    counts["defects"] += 1
                    test = next(
                        t for t in result.tests if t.digest() == verdict.test_ref
                    )
                    answer = result.sut_answers[verdict.test_ref]
                    bug = BugReport(
                        test_ref=verdict.test_ref,
                        context_id=rec.id,
                        question=test.question,
                        gold_answer=test.gold_answer,
                        sut_answer=answer.text,
                        kind=test.kind,
                        stage1_similarity=verdict.stage1_similarity,
                        stage2_score=verdict.stage2.score if verdict.stage2 else None,
                        run_id=run_id,
                    )
                    bugs.append(bug)
                    writers["bugs"].write(bug.to_dict())
                else:
                    counts["inconclusive"] += 1
    finally:
        for writer in writers.values():
            writer.close()

    (out_dir / "validation.json").write_text(
        json.dumps(validation_entries, indent=2, ensure_ascii=False, sort_keys=True),
        encoding="utf-8",
    )
    context_errors.extend(sut_errors)
    report = RunReport(
        run_id=run_id,
        config_snapshot=config.snapshot(),
        counts=counts,
        wall_time_s=round(time.monotonic() - started, 3),
        cache_hit_rate=gateway.stats.cache_hit_rate,
        incomplete=bool(context_errors),
        context_errors=context_errors,
    )
    (out_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, ensure_ascii=False, sort_keys=True),
        encoding="utf-8",
    )
    return RunResult(report=report, bugs=bugs, tests=all_tests, out_dir=out_dir)


# -- fine-tune export ---------------------------------------------------------


def export_finetune(
    tests: Sequence[TestCase],
    records: Mapping[str, ContextRecord],
    sizes: tuple[int, int, int] = (10_000, 1_000, 1_000),
    seed: int = 0,
    out_dir: str | Path = "finetune-out",
) -> dict[str, Path]:
    """Write disjoint train/val/test JSONL splits of (input, target) rows.

    Tests deduplicate on (context_id, normalized question) before
    splitting; asking for more than the unique supply is an error that
    names the shortfall.
    """
    if len(sizes) != 3 or any(s < 0 for s in sizes):
        raise DataError("sizes must be three non-negative counts")
    seen = set()
    unique: list[TestCase] = []
    for test in tests:
        key = (test.context_id, normalize_answer(test.question))
        if key in seen:
            continue
        seen.add(key)
        unique.append(test)
    needed = sum(sizes)
    if len(unique) < needed:
        raise DataError(
            f"not enough unique tests: need {needed}, have {len(unique)} "
            f"(short by {needed - len(unique)})"
        )
    rng = random.Random(seed)
    shuffled = list(unique)
    rng.shuffle(shuffled)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = ("train", "val", "test")
    paths: dict[str, Path] = {}
    offset = 0
    for name, size in zip(names, sizes):
        chunk = shuffled[offset : offset + size]
        offset += size
        path = out_dir / f"{name}.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for test in chunk:
                record = records.get(test.context_id)
                context_text = record.text if record else ""
                row = {
                    "input": f"{test.question}\n{context_text}",
                    "target": test.gold_answer,
                    "context_id": test.context_id,
                    "question": test.question,
                }
                fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
        paths[name] = path
    return paths


# -- dry-run budgeting ----------------------------------------------------------


def estimate_budget(
    config: RunConfig,
    n_contexts: int,
    avg_entities: float = 8.0,
    avg_relations: float = 3.0,
    constraint_survival: float = 0.6,
) -> dict:
    """Deterministic per-stage chat-call estimate for a planned run.

    relation extraction: 1 call per context; generation: 1 call per
    answer; re-asking: one k-sample call per candidate surviving the
    constraint checks; judging: at most 1 call per stage-1 failure.
    """
    answers = n_contexts * (avg_entities + avg_relations)
    candidates = (
        n_contexts * avg_entities * config.entity_question_count
        + n_contexts * avg_relations * config.relation_question_count
    )
    surviving = candidates * constraint_survival
    return {
        "contexts": n_contexts,
        "relation_extraction_calls": n_contexts,
        "generation_calls": math.ceil(answers),
        "reask_calls": math.ceil(surviving),
        "judge_calls_upper_bound": math.ceil(surviving),
        "assumptions": {
            "avg_entities_per_context": avg_entities,
            "avg_relations_per_context": avg_relations,
            "constraint_survival_rate": constraint_survival,
        },
    }
