"""Text normalization and word deny-lists used across the pipeline.

All substring/occurrence checks in the harness funnel through this module
so that leakage, completeness and voting behave identically everywhere.
"""

from __future__ import annotations

import re
import unicodedata

_WS_RE = re.compile(r"\s+")

# Punctuation trimmed from the ends of entities and answers before matching.
_EDGE_PUNCT = ".,;:!?\"'()[]{}"

# Terminal punctuation stripped by answer normalization (voting, leakage).
_TERMINAL_PUNCT = ".?!"


def normalize_text(text: str) -> str:
    """NFC-normalize and collapse CR/LF line endings to LF."""
    text = unicodedata.normalize("NFC", text)
    return text.replace("\r\n", "\n").replace("\r", "\n")


def collapse_ws(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


def normalize_answer(text: str) -> str:
    """Canonical form used for majority voting and leakage checks.

    Unicode-casefold, collapse whitespace, strip terminal ``.?!``.
    """
    text = collapse_ws(normalize_text(text)).casefold()
    return text.rstrip(_TERMINAL_PUNCT).strip()


def normalize_for_match(text: str) -> str:
    """Casefolded, whitespace-collapsed form for substring occurrence checks."""
    return collapse_ws(normalize_text(text)).casefold()


def trim_entity(text: str) -> str:
    """Strip whitespace and edge punctuation from an entity or relation string."""
    return text.strip().strip(_EDGE_PUNCT).strip()


def occurs_in(needle: str, haystack: str) -> bool:
    """Case-insensitive substring test after edge-punctuation trimming.

    LLM output re-cases and re-punctuates entities; the check must not
    be defeated by that.
    """
    needle = normalize_for_match(trim_entity(needle))
    if not needle:
        return False
    return needle in normalize_for_match(haystack)


# Deny-lists backing the lexical-validity constraint and the extraction
# filter rules. Personal pronouns include object, possessive and
# reflexive forms.
PERSONAL_PRONOUNS = frozenset(
    """
    i you he she it we they
    me him her us them
    my your his its our their
    mine yours hers ours theirs
    myself yourself himself herself itself ourselves yourselves themselves
    """.split()
)

DEMONSTRATIVE_PRONOUNS = frozenset({"this", "that", "these", "those"})

PRONOUN_WORDS = PERSONAL_PRONOUNS | DEMONSTRATIVE_PRONOUNS | frozenset(
    {"who", "whom", "whose", "which", "what", "one", "someone", "anyone", "everyone"}
)

# be/have/do inflections plus modals.
NON_LEXICAL_VERBS = frozenset(
    """
    be am is are was were been being
    have has had having
    do does did doing done
    will would shall should can could may might must ought
    """.split()
)


def is_denied_answer(answer: str) -> bool:
    """True when the answer is a pronoun, demonstrative or non-lexical verb."""
    word = normalize_answer(answer)
    return (
        word in PERSONAL_PRONOUNS
        or word in DEMONSTRATIVE_PRONOUNS
        or word in NON_LEXICAL_VERBS
    )


def is_non_lexical_relation(relation: str) -> bool:
    """True when every token of the relation is a non-lexical verb or modal."""
    tokens = normalize_answer(relation).split()
    if not tokens:
        return True
    return all(tok in NON_LEXICAL_VERBS for tok in tokens)
