"""Evaluation measures over generated tests.

Context coverage asks the judge model to map each question onto the
verbatim context segment it addresses, then measures the merged span
length against the context length. Naturalness scores three 0-5
criteria; hallucination classification separates content violations
from instructional violations.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from . import prompts
from .corpus import ContextRecord
from .errors import InputError
from .gateway import ChatRequest, Gateway
from .generation import CandidateTest

logger = logging.getLogger(__name__)

HALLUCINATION_LABELS = ("none", "content_violation", "instructional_violation")


@dataclass(frozen=True)
class CoverageReport:
    context_id: str
    matched_spans: tuple[tuple[int, int], ...]
    coverage: float

    def __post_init__(self):
        if not (0.0 <= self.coverage <= 1.0):
            raise ValueError(f"coverage {self.coverage} outside [0, 1]")


@dataclass(frozen=True)
class NaturalnessScore:
    cr1: float
    cr2: float
    cr3: float
    avg: float
    rationale: str

    def __post_init__(self):
        for name, value in (("cr1", self.cr1), ("cr2", self.cr2), ("cr3", self.cr3)):
            if not (0.0 <= value <= 5.0):
                raise ValueError(f"{name} score {value} outside [0, 5]")
        expected = (self.cr1 + self.cr2 + self.cr3) / 3.0
        if abs(self.avg - expected) > 1e-9:
            raise ValueError("avg must equal the mean of cr1..cr3")


@dataclass(frozen=True)
class HallucinationLabel:
    label: str
    rationale: str
    warning: bool = False

    def __post_init__(self):
        if self.label not in HALLUCINATION_LABELS:
            raise ValueError(f"unknown label {self.label!r}")


# -- span arithmetic ----------------------------------------------------------


def merge_spans(spans: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    """Merge overlapping or touching [start, end) spans; result is sorted
    and pairwise disjoint."""
    valid = sorted((s, e) for s, e in spans if e > s)
    merged: list[tuple[int, int]] = []
    for start, end in valid:
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def coverage_ratio(spans: Sequence[tuple[int, int]], context_length: int) -> float:
    if context_length <= 0:
        raise InputError("context length must be positive")
    merged = merge_spans(spans)
    total = sum(e - s for s, e in merged)
    return total / context_length


def locate_segment(context: str, segment: str) -> Optional[tuple[int, int]]:
    """Find a segment in the context: exact first, then whitespace-insensitive."""
    segment = segment.strip()
    if not segment:
        return None
    pos = context.find(segment)
    if pos >= 0:
        return (pos, pos + len(segment))
    tokens = segment.split()
    if not tokens:
        return None
    pattern = r"\s+".join(re.escape(tok) for tok in tokens)
    match = re.search(pattern, context)
    if match:
        return (match.start(), match.end())
    return None


# -- prompted metrics ---------------------------------------------------------

_SEGMENT_LINE_RE = re.compile(r"^\s*(\d+)\s*[:.)-]\s*(.*)$")


def compute_coverage(
    record: ContextRecord,
    questions: Sequence[str],
    gateway: Gateway,
    model_id: str,
    max_output: int = 2048,
) -> CoverageReport:
    """Ask the judge which context segment each question addresses and
    measure the merged matched length against the context length.

    Questions whose segment cannot be located contribute no span.
    """
    if not questions:
        return CoverageReport(context_id=record.id, matched_spans=(), coverage=0.0)
    numbered = "\n".join(f"{i}. {q}" for i, q in enumerate(questions, start=1))
    prompt = prompts.COVERAGE_MATCH.format(context=record.text, questions=numbered)
    response = gateway.complete(
        ChatRequest(
            prompt=prompt,
            model_id=model_id,
            temperature=0.0,
            max_output=max_output,
            sample_count=1,
        )
    )
    spans: list[tuple[int, int]] = []
    for line in response.texts[0].splitlines():
        match = _SEGMENT_LINE_RE.match(line)
        if not match:
            continue
        segment = match.group(2).strip()
        if not segment or segment.upper() == "NONE":
            continue
        located = locate_segment(record.text, segment)
        if located is None:
            logger.warning(
                "coverage segment not locatable in %s: %r", record.id, segment[:60]
            )
            continue
        spans.append(located)
    merged = merge_spans(spans)
    return CoverageReport(
        context_id=record.id,
        matched_spans=tuple(merged),
        coverage=coverage_ratio(merged, len(record.text)),
    )


_CR_RE = {
    "cr1": re.compile(r"CR1\s*[:=]\s*([0-5](?:\.\d+)?)", re.IGNORECASE),
    "cr2": re.compile(r"CR2\s*[:=]\s*([0-5](?:\.\d+)?)", re.IGNORECASE),
    "cr3": re.compile(r"CR3\s*[:=]\s*([0-5](?:\.\d+)?)", re.IGNORECASE),
}


def score_naturalness(
    record: ContextRecord,
    question: str,
    gateway: Gateway,
    model_id: str,
    max_output: int = 512,
) -> Optional[NaturalnessScore]:
    """Score one question on the three 0-5 criteria; None when unscorable."""
    prompt = prompts.NATURALNESS.format(context=record.text, question=question)
    for attempt in range(2):
        response = gateway.complete(
            ChatRequest(
                prompt=prompt,
                model_id=model_id,
                temperature=0.0,
                max_output=max_output,
                sample_count=1,
            )
        )
        raw = response.texts[0]
        scores = {}
        for name, pattern in _CR_RE.items():
            match = pattern.search(raw)
            if match:
                scores[name] = float(match.group(1))
        if len(scores) == 3:
            rationale_lines = [
                ln.strip()
                for ln in raw.splitlines()
                if ln.strip() and not any(p.search(ln) for p in _CR_RE.values())
            ]
            cr1, cr2, cr3 = scores["cr1"], scores["cr2"], scores["cr3"]
            return NaturalnessScore(
                cr1=cr1,
                cr2=cr2,
                cr3=cr3,
                avg=(cr1 + cr2 + cr3) / 3.0,
                rationale=" ".join(rationale_lines),
            )
        logger.warning("unparseable naturalness response (attempt %d)", attempt + 1)
    return None


def classify_hallucination(
    candidate: CandidateTest,
    record: ContextRecord,
    gateway: Gateway,
    model_id: str,
    max_output: int = 512,
) -> HallucinationLabel:
    """Label one candidate as none / content_violation / instructional_violation."""
    prompt = prompts.HALLUCINATION_CLASSIFY.format(
        context=record.text, answer=candidate.gold_answer, question=candidate.question
    )
    response = gateway.complete(
        ChatRequest(
            prompt=prompt,
            model_id=model_id,
            temperature=0.0,
            max_output=max_output,
            sample_count=1,
        )
    )
    raw = response.texts[0].strip()
    lines = raw.splitlines()
    head = lines[0].strip().casefold() if lines else ""
    rationale = " ".join(ln.strip() for ln in lines[1:]).strip()
    # specific labels first: "none" is too easy to match by accident
    for label in ("content_violation", "instructional_violation", "none"):
        if label in head or label.replace("_", " ") in head:
            return HallucinationLabel(label=label, rationale=rationale or raw)
    logger.warning("unparseable hallucination label: %r", head[:60])
    return HallucinationLabel(label="none", rationale=raw, warning=True)
