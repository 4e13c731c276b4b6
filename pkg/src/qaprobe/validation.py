"""Candidate filtering: constraint checking plus consistency verification.

Constraint checks are cheap, deterministic predicates and run first;
candidates that survive are re-asked to the chat model k times, the
answers are majority-voted, and the vote must embed close enough to the
gold answer. Only candidates passing everything become test cases.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import prompts
from .corpus import ContextRecord
from .errors import ProviderError
from .gateway import ChatRequest, Gateway
from .generation import CandidateTest
from .textnorm import (
    DEMONSTRATIVE_PRONOUNS,
    NON_LEXICAL_VERBS,
    PERSONAL_PRONOUNS,
    is_denied_answer,
    normalize_answer,
    occurs_in,
)

logger = logging.getLogger(__name__)

OUTCOMES = (
    "accepted",
    "rejected_lexical",
    "rejected_completeness",
    "rejected_leakage",
    "rejected_length",
    "rejected_entity_mention",
    "rejected_inconsistent",
)

MIN_QUESTION_CHARS = 25


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    context_id: str
    question: str
    gold_answer: str
    kind: str
    lineage: dict = field(default_factory=dict)

    def digest(self) -> str:
        blob = "\x1f".join([self.context_id, self.question, self.gold_answer, self.kind])
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ValidationEntry:
    candidate_digest: str
    outcome: str
    detail: str = ""


@dataclass
class ValidationReport:
    entries: list[ValidationEntry] = field(default_factory=list)

    def add(self, candidate: CandidateTest, outcome: str, detail: str = "") -> None:
        if outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {outcome!r}")
        self.entries.append(ValidationEntry(candidate.digest(), outcome, detail))

    @property
    def counts(self) -> dict[str, int]:
        counter = Counter(e.outcome for e in self.entries)
        return {outcome: counter.get(outcome, 0) for outcome in OUTCOMES}

    def total(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        return {
            "counts": self.counts,
            "entries": [
                {"candidate": e.candidate_digest, "outcome": e.outcome, "detail": e.detail}
                for e in self.entries
            ],
        }


# -- constraint checks -------------------------------------------------------


def check_lexical_validity(gold_answer: str, denied: frozenset | None = None) -> bool:
    """Reject pronouns, demonstratives and non-lexical verbs as answers.

    `denied` replaces the built-in deny union when given (config override).
    """
    if denied is not None:
        return normalize_answer(gold_answer) not in denied
    return not is_denied_answer(gold_answer)


def check_completeness(candidate: CandidateTest) -> bool:
    """The answer (all triple parts, for relations) must appear in the explanation."""
    if candidate.kind == "entity":
        return occurs_in(candidate.gold_answer, candidate.explanation)
    triple = candidate.answer.triple
    return (
        occurs_in(triple.entity1, candidate.explanation)
        and occurs_in(triple.relation, candidate.explanation)
        and occurs_in(triple.entity2, candidate.explanation)
    )


def check_no_leakage(candidate: CandidateTest) -> bool:
    """The gold answer must not occur inside the question."""
    return not occurs_in(candidate.gold_answer, candidate.question)


def check_entity_mention(candidate: CandidateTest) -> bool:
    """Relation questions must mention both entities of the triple."""
    if candidate.kind != "relation":
        return True
    triple = candidate.answer.triple
    return occurs_in(triple.entity1, candidate.question) and occurs_in(
        triple.entity2, candidate.question
    )


def check_min_length(question: str) -> bool:
    return len(question.strip()) > MIN_QUESTION_CHARS


# -- consistency verification -------------------------------------------------


@dataclass(frozen=True)
class VoteResult:
    winner: str
    samples: tuple[str, ...]
    normalized: tuple[str, ...]
    counts: dict


def majority_vote(normalized_samples: Sequence[str]) -> str:
    """Most frequent answer; ties resolve to the earliest tied sample."""
    if not normalized_samples:
        raise ValueError("cannot vote over zero samples")
    counts = Counter(normalized_samples)
    best = max(counts.values())
    for sample in normalized_samples:
        if counts[sample] == best:
            return sample
    raise AssertionError("unreachable")


def reask(
    record: ContextRecord,
    question: str,
    gateway: Gateway,
    model_id: str,
    k: int = 5,
    temperature: float = 0.0,
    max_output: int = 256,
) -> VoteResult:
    """Ask the model the question k times and majority-vote the answers."""
    prompt = prompts.REASK.format(context=record.text, question=question)
    response = gateway.complete(
        ChatRequest(
            prompt=prompt,
            model_id=model_id,
            temperature=temperature,
            max_output=max_output,
            sample_count=k,
        )
    )
    samples = tuple(response.texts)
    normalized = tuple(normalize_answer(s) for s in samples)
    winner = majority_vote(normalized)
    return VoteResult(
        winner=winner,
        samples=samples,
        normalized=normalized,
        counts=dict(Counter(normalized)),
    )


def verify_consistency(
    gold_answer: str, voted_answer: str, gateway: Gateway, threshold: float = 0.75
) -> tuple[bool, float]:
    """Embedding similarity of gold vs voted answer against the threshold.

    The threshold is inclusive: a score exactly at the threshold passes.
    """
    score = gateway.similarity(normalize_answer(gold_answer), voted_answer)
    return score >= threshold, score


# -- driver -------------------------------------------------------------------


def build_deny_set(extra: Iterable[str] = (), override: Iterable[str] | None = None) -> frozenset:
    """Deny-set for lexical validity: built-ins plus extras, or a full override."""
    if override is not None:
        return frozenset(normalize_answer(w) for w in override)
    base = PERSONAL_PRONOUNS | DEMONSTRATIVE_PRONOUNS | NON_LEXICAL_VERBS
    return base | frozenset(normalize_answer(w) for w in extra)


def validate(
    candidates: Iterable[CandidateTest],
    records: Mapping[str, ContextRecord],
    gateway: Gateway,
    model_id: str,
    threshold: float = 0.75,
    k: int = 5,
    reask_temperature: float = 0.0,
    denied: frozenset | None = None,
) -> tuple[list[TestCase], ValidationReport]:
    """Run every check over the candidates; outcomes partition the input.

    Constraint checks run first so candidates rejected there cost no
    model calls. A gateway failure during re-asking marks the candidate
    rejected_inconsistent with the cause, rather than aborting the batch.
    """
    report = ValidationReport()
    accepted: list[TestCase] = []
    for cand in candidates:
        if not check_lexical_validity(cand.gold_answer, denied=denied):
            report.add(cand, "rejected_lexical", cand.gold_answer)
            continue
        if not check_completeness(cand):
            report.add(cand, "rejected_completeness")
            continue
        if not check_no_leakage(cand):
            report.add(cand, "rejected_leakage")
            continue
        if not check_min_length(cand.question):
            report.add(cand, "rejected_length", str(len(cand.question.strip())))
            continue
        if not check_entity_mention(cand):
            report.add(cand, "rejected_entity_mention")
            continue
        record = records.get(cand.context_id)
        if record is None:
            report.add(cand, "rejected_inconsistent", "unknown context id")
            continue
        try:
            vote = reask(
                record,
                cand.question,
                gateway,
                model_id=model_id,
                k=k,
                temperature=reask_temperature,
            )
            ok, score = verify_consistency(
                cand.gold_answer, vote.winner, gateway, threshold=threshold
            )
        except ProviderError as exc:
            logger.warning("candidate %s unverifiable: %s", cand.digest(), exc)
            report.add(cand, "rejected_inconsistent", f"unverifiable: {exc}")
            continue
        if not ok:
            report.add(
                cand,
                "rejected_inconsistent",
                f"voted={vote.winner!r} sim={score:.4f}",
            )
            continue
        report.add(cand, "accepted")
        accepted.append(
            TestCase(
                context_id=cand.context_id,
                question=cand.question,
                gold_answer=cand.gold_answer,
                kind=cand.kind,
                lineage={
                    "candidate": cand.digest(),
                    "samples": list(vote.samples),
                    "voted": vote.winner,
                    "similarity": score,
                    "threshold": threshold,
                },
            )
        )
    return accepted, report


def dump_test_case(t: TestCase) -> dict:
    return {
        "context_id": t.context_id,
        "question": t.question,
        "gold_answer": t.gold_answer,
        "kind": t.kind,
        "lineage": dict(t.lineage),
    }


def load_test_case(row: dict) -> TestCase:
    return TestCase(
        context_id=row["context_id"],
        question=row["question"],
        gold_answer=row["gold_answer"],
        kind=row["kind"],
        lineage=dict(row.get("lineage", {})),
    )
