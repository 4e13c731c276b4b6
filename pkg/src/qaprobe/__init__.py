"""Context-driven test generation and adjudication for closed-world QA systems."""

__version__ = "0.1.0"

from .corpus import ContextRecord, Corpus, load, sample
from .extraction import EntityCandidate, RelationTriple, extract_entities, extract_relations
from .gateway import ChatRequest, ChatResponse, EmbeddingVector, Gateway, cosine
from .generation import AnswerPayload, CandidateTest, gen_entity_questions, gen_relation_questions
from .oracle import JudgeResult, Verdict, adjudicate
from .sut import SutAdapter, SutAnswer, query
from .validation import TestCase, ValidationReport, validate

__all__ = [
    "AnswerPayload",
    "CandidateTest",
    "ChatRequest",
    "ChatResponse",
    "ContextRecord",
    "Corpus",
    "EmbeddingVector",
    "EntityCandidate",
    "Gateway",
    "JudgeResult",
    "RelationTriple",
    "SutAdapter",
    "SutAnswer",
    "TestCase",
    "ValidationReport",
    "Verdict",
    "adjudicate",
    "cosine",
    "extract_entities",
    "extract_relations",
    "gen_entity_questions",
    "gen_relation_questions",
    "load",
    "query",
    "sample",
    "validate",
]
