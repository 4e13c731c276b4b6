"""Answer-targeted question generation.

The answer comes first: a mined entity or relation triple is handed to
the chat model together with its sentence and context, and the model
designs questions whose answer is exactly that entity (or the triple's
relation). Raw output is parsed into structured candidates; all quality
filtering happens later in validation.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from typing import Optional

from . import prompts
from .corpus import ContextRecord
from .extraction import EntityCandidate, RelationTriple
from .gateway import ChatRequest, Gateway

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnswerPayload:
    gold_answer: str
    payload_kind: str  # "entity" | "relation"
    triple: Optional[RelationTriple] = None

    def __post_init__(self):
        if self.payload_kind not in ("entity", "relation"):
            raise ValueError(f"unknown payload kind {self.payload_kind!r}")
        if self.payload_kind == "relation":
            if self.triple is None:
                raise ValueError("relation payload requires a triple")
            if self.gold_answer != self.triple.relation:
                raise ValueError("relation payload gold answer must be the relation")


@dataclass(frozen=True)
class CandidateTest:
    context_id: str
    kind: str  # "entity" | "relation"
    answer: AnswerPayload
    question: str
    explanation: str
    gen_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.question or not self.explanation:
            raise ValueError("question and explanation must be non-empty")
        if self.kind != self.answer.payload_kind:
            raise ValueError("candidate kind must match its answer payload")

    @property
    def gold_answer(self) -> str:
        return self.answer.gold_answer

    def digest(self) -> str:
        blob = "\x1f".join(
            [self.context_id, self.kind, self.gold_answer, self.question, self.explanation]
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


_Q_MARK = re.compile(r"question\s*[:：]", re.IGNORECASE)
_E_MARK = re.compile(r"explanation\s*[:：]", re.IGNORECASE)
# a bare list number left dangling at the end, e.g. "...rationale.\n2."
_TRAILING_ENUM = re.compile(r"(?:\n\s*\d+\s*[.)])\s*$")


def _clean_segment(text: str) -> str:
    text = _TRAILING_ENUM.sub("", text.strip()).strip()
    if len(text) >= 2 and text[0] == "[" and text[-1] == "]":
        text = text[1:-1].strip()
    return text


def parse_qe_pairs(raw: str) -> list[tuple[str, str]]:
    """Return every maximal Question/Explanation pair in order.

    Numbering prefixes and surrounding whitespace are tolerated; an
    Explanation without a preceding Question is dropped.
    """
    markers = sorted(
        [(m.start(), m.end(), "q") for m in _Q_MARK.finditer(raw)]
        + [(m.start(), m.end(), "e") for m in _E_MARK.finditer(raw)]
    )
    pairs: list[tuple[str, str]] = []
    i = 0
    while i < len(markers):
        start, end, kind = markers[i]
        if kind != "q":
            i += 1
            continue
        # pair with the next explanation marker before any further question
        j = i + 1
        if j < len(markers) and markers[j][2] == "e":
            q_text = raw[end : markers[j][0]]
            e_end = markers[j + 1][0] if j + 1 < len(markers) else len(raw)
            e_text = raw[markers[j][1] : e_end]
            question = _clean_segment(q_text)
            explanation = _clean_segment(e_text)
            if question and explanation:
                pairs.append((question, explanation))
            i = j + 1
        else:
            i += 1
    return pairs


def _prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


def gen_entity_questions(
    record: ContextRecord,
    entity: EntityCandidate,
    gateway: Gateway,
    model_id: str,
    count: int = 5,
    temperature: float = 0.7,
    max_output: int = 1024,
) -> list[CandidateTest]:
    """Generate candidates whose gold answer is the entity text."""
    sent_start, sent_end = entity.sentence_span
    sentence = record.text[sent_start:sent_end].strip()
    prompt = prompts.ENTITY_QUESTIONS.format(
        count=count, answer=entity.text, sentence=sentence, context=record.text
    )
    response = gateway.complete(
        ChatRequest(
            prompt=prompt,
            model_id=model_id,
            temperature=temperature,
            max_output=max_output,
            sample_count=1,
        )
    )
    pairs = parse_qe_pairs(response.texts[0])
    if not pairs:
        logger.warning(
            "no question/explanation pairs parsed for entity %r in %s",
            entity.text,
            record.id,
        )
    payload = AnswerPayload(gold_answer=entity.text, payload_kind="entity")
    meta = {"model_id": model_id, "prompt_digest": _prompt_digest(prompt)}
    return [
        CandidateTest(
            context_id=record.id,
            kind="entity",
            answer=payload,
            question=q,
            explanation=e,
            gen_meta=meta,
        )
        for q, e in pairs
    ]


def gen_relation_questions(
    record: ContextRecord,
    triple: RelationTriple,
    gateway: Gateway,
    model_id: str,
    count: int = 10,
    temperature: float = 0.7,
    max_output: int = 1536,
) -> list[CandidateTest]:
    """Generate candidates whose gold answer is the triple's relation."""
    prompt = prompts.RELATION_QUESTIONS.format(
        count=count,
        few_shot=prompts.RELATION_FEW_SHOT,
        entity1=triple.entity1,
        relation=triple.relation,
        entity2=triple.entity2,
        context=record.text,
    )
    response = gateway.complete(
        ChatRequest(
            prompt=prompt,
            model_id=model_id,
            temperature=temperature,
            max_output=max_output,
            sample_count=1,
        )
    )
    pairs = parse_qe_pairs(response.texts[0])
    if not pairs:
        logger.warning(
            "no question/explanation pairs parsed for triple %r in %s",
            (triple.entity1, triple.relation, triple.entity2),
            record.id,
        )
    payload = AnswerPayload(
        gold_answer=triple.relation, payload_kind="relation", triple=triple
    )
    meta = {"model_id": model_id, "prompt_digest": _prompt_digest(prompt)}
    return [
        CandidateTest(
            context_id=record.id,
            kind="relation",
            answer=payload,
            question=q,
            explanation=e,
            gen_meta=meta,
        )
        for q, e in pairs
    ]


def candidate_to_dict(c: CandidateTest) -> dict:
    row = {
        "context_id": c.context_id,
        "kind": c.kind,
        "gold_answer": c.gold_answer,
        "question": c.question,
        "explanation": c.explanation,
        "gen_meta": dict(c.gen_meta),
    }
    if c.answer.triple is not None:
        t = c.answer.triple
        row["triple"] = {
            "entity1": t.entity1,
            "relation": t.relation,
            "entity2": t.entity2,
            "explanation": t.explanation,
            "source_context_id": t.source_context_id,
        }
    return row


def candidate_from_dict(row: dict) -> CandidateTest:
    triple = None
    if row.get("triple"):
        t = row["triple"]
        triple = RelationTriple(
            entity1=t["entity1"],
            relation=t["relation"],
            entity2=t["entity2"],
            explanation=t.get("explanation", ""),
            source_context_id=t.get("source_context_id", row["context_id"]),
        )
    payload = AnswerPayload(
        gold_answer=row["gold_answer"], payload_kind=row["kind"], triple=triple
    )
    return CandidateTest(
        context_id=row["context_id"],
        kind=row["kind"],
        answer=payload,
        question=row["question"],
        explanation=row["explanation"],
        gen_meta=dict(row.get("gen_meta", {})),
    )
