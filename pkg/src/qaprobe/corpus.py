"""Loaders that normalize the supported QA corpora into context records.

Each loader emits one ContextRecord per source passage, carrying the
original question/answer pairs as seed QAs. Text is NFC-normalized with
LF line endings at load time so downstream substring checks are
encoding-stable.
"""

from __future__ import annotations

import csv
import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import DataError
from .textnorm import collapse_ws, normalize_text

logger = logging.getLogger(__name__)

LOADER_VERSION = "1.0"

NO_ANSWER = "⟨No Answer⟩"

SOURCES = ("boolq", "squad2", "narrativeqa", "custom")


@dataclass(frozen=True)
class SeedQA:
    question: str
    answer: str


@dataclass(frozen=True)
class ContextRecord:
    id: str
    source: str
    text: str
    seed_qas: tuple[SeedQA, ...] = ()

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DataError(f"unknown source {self.source!r}")
        if not collapse_ws(self.text):
            raise DataError(f"record {self.id!r} has empty text")


@dataclass(frozen=True)
class LoadIssue:
    location: str
    message: str


@dataclass(frozen=True)
class Provenance:
    source_path: str
    loader: str
    loader_version: str = LOADER_VERSION


@dataclass(frozen=True)
class Corpus:
    records: tuple[ContextRecord, ...]
    provenance: Provenance
    issues: tuple[LoadIssue, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self) -> dict[str, ContextRecord]:
        return {r.id: r for r in self.records}

    def seed_qa_count(self) -> int:
        return sum(len(r.seed_qas) for r in self.records)


def _check_unique_ids(records: Iterable[ContextRecord], path: str) -> None:
    seen = set()
    for rec in records:
        if rec.id in seen:
            raise DataError(f"duplicate record id {rec.id!r} in {path}")
        seen.add(rec.id)


def _clean(text: str) -> str:
    return normalize_text(text).strip()


def load_boolq(path: str | Path) -> Corpus:
    """Load a BoolQ-style JSONL file: {question, passage, answer} per line.

    Boolean answers map to "yes"/"no". Malformed lines are reported as
    issues with their line number; a missing file is fatal.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"boolq file not found: {path}")
    records: list[ContextRecord] = []
    issues: list[LoadIssue] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                question = str(obj["question"])
                passage = _clean(str(obj["passage"]))
                answer = "yes" if bool(obj["answer"]) else "no"
                if not passage:
                    raise ValueError("empty passage")
                records.append(
                    ContextRecord(
                        id=f"boolq-{lineno}",
                        source="boolq",
                        text=passage,
                        seed_qas=(SeedQA(question=_clean(question), answer=answer),),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                issues.append(LoadIssue(location=f"{path.name}:{lineno}", message=str(exc)))
                logger.warning("skipping malformed boolq line %d: %s", lineno, exc)
    _check_unique_ids(records, str(path))
    return Corpus(
        records=tuple(records),
        provenance=Provenance(source_path=str(path), loader="boolq"),
        issues=tuple(issues),
    )


def load_squad2(path: str | Path) -> Corpus:
    """Load the official nested SQuAD2 JSON; one record per paragraph.

    Unanswerable questions (is_impossible) get the gold answer
    "⟨No Answer⟩"; answerable ones take the first annotated answer text.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"squad2 file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except ValueError as exc:
            raise DataError(f"squad2 file is not valid JSON: {exc}") from exc
    try:
        articles = payload["data"]
    except (KeyError, TypeError):
        raise DataError("squad2 layout error: missing top-level 'data'")
    records: list[ContextRecord] = []
    issues: list[LoadIssue] = []
    for ai, article in enumerate(articles):
        try:
            paragraphs = article["paragraphs"]
        except (KeyError, TypeError):
            raise DataError(f"squad2 layout error: data[{ai}] missing 'paragraphs'")
        for pi, para in enumerate(paragraphs):
            try:
                context = _clean(str(para["context"]))
                qas = para["qas"]
            except (KeyError, TypeError):
                raise DataError(
                    f"squad2 layout error: data[{ai}].paragraphs[{pi}] "
                    "missing 'context' or 'qas'"
                )
            seed: list[SeedQA] = []
            for qa in qas:
                question = _clean(str(qa.get("question", "")))
                if qa.get("is_impossible", False):
                    answer = NO_ANSWER
                else:
                    answers = qa.get("answers", [])
                    answer = _clean(str(answers[0]["text"])) if answers else NO_ANSWER
                seed.append(SeedQA(question=question, answer=answer))
            if not context:
                issues.append(
                    LoadIssue(
                        location=f"data[{ai}].paragraphs[{pi}]",
                        message="empty context",
                    )
                )
                continue
            records.append(
                ContextRecord(
                    id=f"squad2-{ai}-{pi}",
                    source="squad2",
                    text=context,
                    seed_qas=tuple(seed),
                )
            )
    _check_unique_ids(records, str(path))
    return Corpus(
        records=tuple(records),
        provenance=Provenance(source_path=str(path), loader="squad2"),
        issues=tuple(issues),
    )


def load_narrativeqa(path: str | Path) -> Corpus:
    """Load a summary-level NarrativeQA table (CSV).

    Required columns: document_id, summary, question. Answers come from an
    'answers' column or from answer1/answer2. Rows sharing a document id
    collapse into one record; rows with a missing summary are skipped with
    a warning.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"narrativeqa file not found: {path}")
    grouped: dict[str, dict] = {}
    order: list[str] = []
    issues: list[LoadIssue] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"narrativeqa file has no header row: {path}")
        required = {"document_id", "summary", "question"}
        missing = required - set(reader.fieldnames)
        if missing:
            raise DataError(f"narrativeqa missing columns: {sorted(missing)}")
        for rowno, row in enumerate(reader, start=2):
            doc_id = (row.get("document_id") or "").strip()
            summary = _clean(row.get("summary") or "")
            if not doc_id or not summary:
                issues.append(
                    LoadIssue(location=f"{path.name}:{rowno}", message="missing summary")
                )
                logger.warning("skipping narrativeqa row %d: missing summary", rowno)
                continue
            question = _clean(row.get("question") or "")
            answer = _clean(
                row.get("answers") or row.get("answer1") or row.get("answer2") or ""
            )
            entry = grouped.get(doc_id)
            if entry is None:
                entry = {"summary": summary, "qas": []}
                grouped[doc_id] = entry
                order.append(doc_id)
            if question:
                entry["qas"].append(SeedQA(question=question, answer=answer))
    records = tuple(
        ContextRecord(
            id=f"narrativeqa-{doc_id}",
            source="narrativeqa",
            text=grouped[doc_id]["summary"],
            seed_qas=tuple(grouped[doc_id]["qas"]),
        )
        for doc_id in order
    )
    _check_unique_ids(records, str(path))
    return Corpus(
        records=records,
        provenance=Provenance(source_path=str(path), loader="narrativeqa"),
        issues=tuple(issues),
    )


def load_custom(path: str | Path) -> Corpus:
    """Load a plain JSONL of {id, text} records for arbitrary user corpora."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"custom corpus file not found: {path}")
    records: list[ContextRecord] = []
    issues: list[LoadIssue] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                text = _clean(str(obj["text"]))
                if not text:
                    raise ValueError("empty text")
                records.append(
                    ContextRecord(id=str(obj["id"]), source="custom", text=text)
                )
            except (ValueError, KeyError, TypeError) as exc:
                issues.append(LoadIssue(location=f"{path.name}:{lineno}", message=str(exc)))
                logger.warning("skipping malformed custom line %d: %s", lineno, exc)
    _check_unique_ids(records, str(path))
    return Corpus(
        records=tuple(records),
        provenance=Provenance(source_path=str(path), loader="custom"),
        issues=tuple(issues),
    )


LOADERS = {
    "boolq": load_boolq,
    "squad2": load_squad2,
    "narrativeqa": load_narrativeqa,
    "custom": load_custom,
}


def load(dataset: str, path: str | Path) -> Corpus:
    try:
        loader = LOADERS[dataset]
    except KeyError:
        raise DataError(f"unknown dataset {dataset!r}; expected one of {sorted(LOADERS)}")
    return loader(path)


def sample(corpus: Corpus, n: int, seed: int) -> Corpus:
    """Deterministic sample of up to n records, original order preserved."""
    if n < 0:
        raise DataError("sample size must be >= 0")
    if n >= len(corpus.records):
        return corpus
    rng = random.Random(seed)
    picked = sorted(rng.sample(range(len(corpus.records)), n))
    return Corpus(
        records=tuple(corpus.records[i] for i in picked),
        provenance=corpus.provenance,
        issues=corpus.issues,
    )
