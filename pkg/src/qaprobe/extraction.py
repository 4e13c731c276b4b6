"""Mining of ground-truth answers from a context.

Entities (nouns, verbs, noun phrases, verb phrases) come from the
dependency parse plus filtering rules; relation triples come from a chat
model prompt plus hallucination filters. Phrase boundaries are the
contiguous projection of a head noun/verb over its non-clausal
dependents, with punctuation and case markers trimmed at the edges.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import prompts
from .corpus import ContextRecord
from .gateway import ChatRequest, Gateway
from .syntax import ROOT, Sentence, SyntaxToken
from .textnorm import (
    NON_LEXICAL_VERBS,
    PRONOUN_WORDS,
    is_non_lexical_relation,
    normalize_for_match,
    occurs_in,
    trim_entity,
)

logger = logging.getLogger(__name__)

ENTITY_KINDS = ("noun", "verb", "noun_phrase", "verb_phrase")

NOUN_UPOS = frozenset({"NOUN", "PROPN"})

# Dependency labels that head clause subtrees; such subtrees are removed
# from phrases. Matching ignores subtype suffixes (acl:relcl matches acl).
CLAUSAL_DEPRELS = frozenset({"acl", "advcl", "ccomp", "xcomp", "csubj", "parataxis"})

# Subjects are never part of a verb phrase.
SUBJECT_DEPRELS = frozenset({"nsubj", "csubj", "expl"})

# Verbs carrying these relations act as modifiers or infinitival
# complements and are not standalone answers.
MODIFIER_OR_INFINITIVE_DEPRELS = frozenset({"amod", "acl", "xcomp"})

# Function tokens trimmed from phrase edges.
EDGE_TRIM_DEPRELS = frozenset({"punct", "case", "cc", "mark"})


@dataclass(frozen=True)
class EntityCandidate:
    kind: str
    text: str
    sentence_index: int
    span: tuple[int, int]
    sentence_span: tuple[int, int]

    def __post_init__(self):
        if self.kind not in ENTITY_KINDS:
            raise ValueError(f"unknown entity kind {self.kind!r}")


@dataclass(frozen=True)
class RelationTriple:
    entity1: str
    relation: str
    entity2: str
    explanation: str
    source_context_id: str


def base_deprel(deprel: str) -> str:
    return deprel.split(":", 1)[0]


def _children(sentence: Sequence[SyntaxToken]) -> list[list[int]]:
    kids: list[list[int]] = [[] for _ in sentence]
    for i, tok in enumerate(sentence):
        if tok.head != ROOT:
            kids[tok.head].append(i)
    return kids


def _projection(sentence: Sequence[SyntaxToken], head: int, verb_head: bool) -> list[int]:
    """Indices of the head's subtree minus clausal (and, for verbs, subject)
    subtrees, restricted to the contiguous run containing the head."""
    kids = _children(sentence)
    keep: set[int] = set()
    stack = [head]
    while stack:
        i = stack.pop()
        keep.add(i)
        for child in kids[i]:
            rel = base_deprel(sentence[child].deprel)
            if rel in CLAUSAL_DEPRELS:
                continue
            if verb_head and i == head and rel in SUBJECT_DEPRELS:
                continue
            stack.append(child)
    # contiguity: pruning can split the subtree; keep the run around the head
    run = [head]
    i = head - 1
    while i >= 0 and i in keep:
        run.append(i)
        i -= 1
    i = head + 1
    while i < len(sentence) and i in keep:
        run.append(i)
        i += 1
    run.sort()
    # trim function tokens at the edges
    while run and (
        base_deprel(sentence[run[0]].deprel) in EDGE_TRIM_DEPRELS
        or sentence[run[0]].upos == "PUNCT"
    ):
        run.pop(0)
    while run and (
        base_deprel(sentence[run[-1]].deprel) in EDGE_TRIM_DEPRELS
        or sentence[run[-1]].upos == "PUNCT"
    ):
        run.pop()
    return run


def _phrase_candidates(sentence: Sentence, context_text: str) -> list[EntityCandidate]:
    out = []
    for i, tok in enumerate(sentence.tokens):
        if tok.upos in NOUN_UPOS:
            kind = "noun_phrase"
            verb_head = False
        elif tok.upos == "VERB":
            kind = "verb_phrase"
            verb_head = True
        else:
            continue
        run = _projection(sentence.tokens, i, verb_head)
        if not run:
            continue
        start = sentence.tokens[run[0]].start
        end = sentence.tokens[run[-1]].end
        text = context_text[start:end]
        if len(text.split()) < 2:
            continue
        out.append(
            EntityCandidate(
                kind=kind,
                text=text,
                sentence_index=sentence.index,
                span=(start, end),
                sentence_span=(sentence.start, sentence.end),
            )
        )
    return out


def _word_candidates(
    sentence: Sentence, context_text: str, phrase_spans: list[tuple[int, int]]
) -> list[EntityCandidate]:
    out = []
    for tok in sentence.tokens:
        word = tok.text.casefold()
        if tok.upos in NOUN_UPOS:
            if word in PRONOUN_WORDS:
                continue
            kind = "noun"
        elif tok.upos == "VERB":
            if word in NON_LEXICAL_VERBS:
                continue
            if base_deprel(tok.deprel) in MODIFIER_OR_INFINITIVE_DEPRELS:
                continue
            if base_deprel(tok.deprel) in ("aux", "cop"):
                continue
            kind = "verb"
        else:
            continue
        if any(s <= tok.start and tok.end <= e for s, e in phrase_spans):
            continue
        out.append(
            EntityCandidate(
                kind=kind,
                text=context_text[tok.start : tok.end],
                sentence_index=sentence.index,
                span=(tok.start, tok.end),
                sentence_span=(sentence.start, sentence.end),
            )
        )
    return out


def extract_entities(
    sentences: Iterable[Sentence], record: ContextRecord
) -> list[EntityCandidate]:
    """Apply the filtering rules to a parsed context.

    Phrases: multi-word only, clause subtrees removed, duplicates dropped.
    Words: no pronouns among nouns; no non-lexical, modifier or infinitival
    verbs; no words already covered by a phrase in the same sentence.
    """
    phrases: list[EntityCandidate] = []
    words: list[EntityCandidate] = []
    for sentence in sentences:
        sent_phrases = _phrase_candidates(sentence, record.text)
        phrases.extend(sent_phrases)
        spans = [p.span for p in sent_phrases]
        words.extend(_word_candidates(sentence, record.text, spans))
    seen_texts: set[str] = set()
    deduped: list[EntityCandidate] = []
    for cand in phrases:
        key = cand.text.casefold()
        if key in seen_texts:
            continue
        seen_texts.add(key)
        deduped.append(cand)
    result = deduped + words
    result.sort(key=lambda c: (c.sentence_index, c.span, c.kind))
    return result


# --------------------------------------------------------------------------
# Relation triples

_TRIPLE_RE = re.compile(r"\[([^\[\]]+)\]")
_EXPL_PREFIX_RE = re.compile(r"^\s*(?:explanation|reason)\s*[:：]\s*", re.IGNORECASE)


def parse_relation_response(raw: str) -> list[tuple[str, str, str, str]]:
    """Extract (entity1, relation, entity2, explanation) tuples from raw text.

    Accepts both "[a, b, c]" and "Relation: [a, b, c]" line shapes; the
    explanation is whatever follows a triple until the next triple line.
    """
    entries: list[dict] = []
    for line in raw.splitlines():
        match = _TRIPLE_RE.search(line)
        if match:
            parts = [trim_entity(p) for p in match.group(1).split(",")]
            trailing = line[match.end() :].strip()
            if len(parts) == 3 and all(parts):
                entry = {"triple": tuple(parts), "explanation": []}
                if trailing:
                    entry["explanation"].append(_EXPL_PREFIX_RE.sub("", trailing))
                entries.append(entry)
            else:
                logger.warning("skipping malformed triple line: %s", line.strip())
            continue
        if entries and line.strip():
            entries[-1]["explanation"].append(_EXPL_PREFIX_RE.sub("", line.strip()))
    return [
        (e["triple"][0], e["triple"][1], e["triple"][2], " ".join(e["explanation"]).strip())
        for e in entries
    ]


def filter_relations(
    triples: Iterable[RelationTriple], record: ContextRecord
) -> list[RelationTriple]:
    """Keep a triple only when it passes every hallucination filter.

    Both entities must occur in the context and in the explanation, the
    two entities must differ, neither entity may be a pronoun or
    non-lexical verb, and the relation must be a lexical verb.
    """
    kept = []
    for t in triples:
        e1 = normalize_for_match(trim_entity(t.entity1))
        e2 = normalize_for_match(trim_entity(t.entity2))
        if not e1 or not e2 or e1 == e2:
            continue
        if e1 in PRONOUN_WORDS or e2 in PRONOUN_WORDS:
            continue
        if e1 in NON_LEXICAL_VERBS or e2 in NON_LEXICAL_VERBS:
            continue
        if is_non_lexical_relation(t.relation):
            continue
        if not (occurs_in(t.entity1, record.text) and occurs_in(t.entity2, record.text)):
            continue
        if not (occurs_in(t.entity1, t.explanation) and occurs_in(t.entity2, t.explanation)):
            continue
        kept.append(t)
    return kept


def extract_relations(
    record: ContextRecord,
    gateway: Gateway,
    model_id: str,
    temperature: float = 0.0,
    max_output: int = 1024,
) -> list[RelationTriple]:
    """Prompt the chat model for relation triples and filter the result.

    An unparseable response yields zero triples with a warning, never a
    failure.
    """
    prompt = prompts.RELATION_EXTRACTION.format(context=record.text)
    response = gateway.complete(
        ChatRequest(
            prompt=prompt,
            model_id=model_id,
            temperature=temperature,
            max_output=max_output,
            sample_count=1,
        )
    )
    parsed = parse_relation_response(response.texts[0])
    if not parsed:
        logger.warning("no relation triples parsed for context %s", record.id)
        return []
    triples = [
        RelationTriple(
            entity1=e1,
            relation=rel,
            entity2=e2,
            explanation=expl,
            source_context_id=record.id,
        )
        for e1, rel, e2, expl in parsed
    ]
    return filter_relations(triples, record)
