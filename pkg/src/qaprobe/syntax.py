"""Sentence-level syntactic analysis behind a pluggable backend.

Backends return, per sentence, a token list of {text, upos, deprel, head}
where `head` is the 0-based index of the head token within the sentence
and -1 marks the root. parse_context aligns tokens to character offsets
and assigns every character of the input to exactly one sentence.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from .errors import InputError, SyntaxBackendError
from .corpus import ContextRecord

logger = logging.getLogger(__name__)

ROOT = -1


@dataclass(frozen=True)
class SyntaxToken:
    text: str
    upos: str
    deprel: str
    head: int
    sentence_index: int
    start: int
    end: int


@dataclass(frozen=True)
class Sentence:
    index: int
    tokens: tuple[SyntaxToken, ...]
    start: int
    end: int

    def text_in(self, context_text: str) -> str:
        return context_text[self.start : self.end]


class SyntaxBackend(Protocol):
    name: str

    def analyze(self, text: str) -> list[list[dict]]:
        """Return sentences as lists of {text, upos, deprel, head[, start, end]}."""
        ...


class StaticTaggerBackend:
    """Backend serving pre-tagged sentences keyed by exact context text.

    Used for fixtures and golden tests; unknown text is an error so a
    fixture mismatch never produces silently empty parses.
    """

    name = "static"

    def __init__(self, table: Mapping[str, Sequence[Sequence[Mapping]]]):
        self.table = {key: value for key, value in table.items()}

    @classmethod
    def from_file(cls, path: str | Path) -> "StaticTaggerBackend":
        with open(path, encoding="utf-8") as fh:
            entries = json.load(fh)
        return cls({e["text"]: e["sentences"] for e in entries})

    def analyze(self, text: str) -> list[list[dict]]:
        try:
            sentences = self.table[text]
        except KeyError:
            raise SyntaxBackendError(
                f"static tagger has no entry for text starting {text[:60]!r}"
            )
        return [[dict(tok) for tok in sent] for sent in sentences]


class StanzaBackend:
    """In-process tagger built on stanza (requires the `syntax` extra)."""

    name = "stanza"

    def __init__(self, lang: str = "en"):
        try:
            import stanza
        except ImportError as exc:
            raise SyntaxBackendError(
                "stanza is not installed; install the 'syntax' extra"
            ) from exc
        self._pipeline = stanza.Pipeline(
            lang=lang, processors="tokenize,pos,lemma,depparse", verbose=False
        )

    def analyze(self, text: str) -> list[list[dict]]:
        doc = self._pipeline(text)
        out = []
        for sent in doc.sentences:
            tokens = []
            for word in sent.words:
                tokens.append(
                    {
                        "text": word.text,
                        "upos": word.upos,
                        "deprel": word.deprel,
                        # stanza heads are 1-based with 0 for root
                        "head": (word.head - 1) if word.head else ROOT,
                        "start": word.start_char,
                        "end": word.end_char,
                    }
                )
            out.append(tokens)
        return out


class HttpTaggerBackend:
    """Sidecar tagger speaking {text} -> {sentences:[{tokens:[...]}]} JSON."""

    name = "http"

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def analyze(self, text: str) -> list[list[dict]]:
        import requests

        try:
            resp = requests.post(self.url, json={"text": text}, timeout=self.timeout)
            resp.raise_for_status()
            payload = resp.json()
        except requests.RequestException as exc:
            raise SyntaxBackendError(f"tagger sidecar failure: {exc}") from exc
        try:
            return [
                [dict(tok) for tok in sent["tokens"]] for sent in payload["sentences"]
            ]
        except (KeyError, TypeError) as exc:
            raise SyntaxBackendError(f"malformed tagger response: {exc}") from exc


def _align_tokens(text: str, raw_sentences: list[list[dict]]) -> list[list[dict]]:
    """Fill in start/end offsets for tokens that lack them, left to right."""
    cursor = 0
    for sent in raw_sentences:
        for tok in sent:
            if "start" in tok and "end" in tok:
                cursor = max(cursor, tok["end"])
                continue
            pos = text.find(tok["text"], cursor)
            if pos < 0:
                raise SyntaxBackendError(
                    f"token {tok['text']!r} not found in context after offset {cursor}"
                )
            tok["start"] = pos
            tok["end"] = pos + len(tok["text"])
            cursor = tok["end"]
    return raw_sentences


def parse_context(record: ContextRecord, backend: SyntaxBackend) -> list[Sentence]:
    """Analyze a context into sentences of dependency-annotated tokens.

    Sentence spans partition [0, len(text)): each sentence starts where the
    previous one ended and the last one extends to the end of the text.
    """
    if not record.text.strip():
        raise InputError(f"record {record.id!r} has empty text")
    raw = backend.analyze(record.text)
    raw = _align_tokens(record.text, raw)
    sentences: list[Sentence] = []
    prev_end = 0
    for si, sent in enumerate(raw):
        if not sent:
            continue
        tokens = []
        for ti, tok in enumerate(sent):
            head = int(tok["head"])
            if head != ROOT and not (0 <= head < len(sent)):
                raise SyntaxBackendError(
                    f"token {ti} in sentence {si} has head {head} "
                    f"outside [0, {len(sent)})"
                )
            if head == ti:
                raise SyntaxBackendError(f"token {ti} in sentence {si} is its own head")
            tokens.append(
                SyntaxToken(
                    text=tok["text"],
                    upos=tok["upos"],
                    deprel=tok["deprel"],
                    head=head,
                    sentence_index=si,
                    start=int(tok["start"]),
                    end=int(tok["end"]),
                )
            )
        end = tokens[-1].end
        sentences.append(Sentence(index=si, tokens=tuple(tokens), start=prev_end, end=end))
        prev_end = end
    if sentences:
        last = sentences[-1]
        sentences[-1] = Sentence(
            index=last.index, tokens=last.tokens, start=last.start, end=len(record.text)
        )
    return sentences


def build_backend(kind: str, **kwargs) -> SyntaxBackend:
    if kind == "static":
        return StaticTaggerBackend.from_file(kwargs["fixture_path"])
    if kind == "stanza":
        return StanzaBackend(lang=kwargs.get("lang", "en"))
    if kind == "http":
        return HttpTaggerBackend(url=kwargs["url"])
    raise SyntaxBackendError(f"unknown syntax backend {kind!r}")
