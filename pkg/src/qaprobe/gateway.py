"""Uniform access to chat-completion and embedding providers.

The gateway adds a content-addressed file cache, bounded retries for
transient transport errors, a token-bucket rate limit, an in-flight
request cap, and a JSONL audit log. A scripted mock chat provider and a
deterministic hashing embedder make every pipeline stage runnable
offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Protocol, Sequence

import numpy as np

from .errors import (
    GatewayExhaustedError,
    InputError,
    MockScriptError,
    NonRetryableProviderError,
    TransportError,
)
from .textnorm import collapse_ws, normalize_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChatRequest:
    prompt: str
    model_id: str
    temperature: float = 0.0
    max_output: int = 1024
    sample_count: int = 1

    def __post_init__(self):
        if not self.prompt:
            raise InputError("chat prompt must be non-empty")
        if self.sample_count < 1:
            raise InputError("sample_count must be >= 1")
        if self.temperature < 0:
            raise InputError("temperature must be >= 0")


@dataclass(frozen=True)
class ChatResponse:
    texts: tuple[str, ...]
    provider_meta: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    model_id: str

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.values):
            raise InputError("embedding contains non-finite values")


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity in [-1, 1]; raises on dimension mismatch or zero norm."""
    if len(a.values) != len(b.values):
        raise InputError(
            f"embedding dimension mismatch: {len(a.values)} != {len(b.values)}"
        )
    va = np.asarray(a.values, dtype=np.float64)
    vb = np.asarray(b.values, dtype=np.float64)
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise InputError("cosine undefined for zero-norm vector")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


class ChatProvider(Protocol):
    name: str

    def complete(self, request: ChatRequest) -> ChatResponse: ...


class EmbeddingProvider(Protocol):
    name: str
    model_id: str
    dimension: int

    def embed(self, text: str) -> EmbeddingVector: ...


# --------------------------------------------------------------------------
# Providers


@dataclass
class MockRule:
    """One scripted behavior: fires when `contains` occurs in the prompt.

    `responses` is consumed call by call; the last entry repeats once the
    sequence is exhausted. Each entry is either a single text (replicated
    across samples) or a list with exactly one text per requested sample.
    """

    contains: str
    responses: list

    def next_response(self, call_index: int):
        if not self.responses:
            raise MockScriptError(f"mock rule {self.contains!r} has no responses")
        return self.responses[min(call_index, len(self.responses) - 1)]


class MockChatProvider:
    """Deterministic scripted chat provider keyed on prompt content.

    Rules are tried in order; the first whose `contains` string occurs in
    the prompt wins. A missing match falls back to `default`, and if no
    default is configured the call fails loudly so fixtures stay honest.
    """

    name = "mock"

    def __init__(self, rules: Sequence[MockRule] = (), default=None):
        self.rules = list(rules)
        self.default = default
        self.call_count = 0
        self._rule_calls: dict[int, int] = {}
        self._default_calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_dict(cls, spec: Mapping) -> "MockChatProvider":
        rules = [
            MockRule(contains=r["contains"], responses=list(r["responses"]))
            for r in spec.get("rules", [])
        ]
        return cls(rules, default=spec.get("default"))

    @classmethod
    def from_file(cls, path: str | Path) -> "MockChatProvider":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.call_count += 1
            for i, rule in enumerate(self.rules):
                if rule.contains in request.prompt:
                    idx = self._rule_calls.get(i, 0)
                    self._rule_calls[i] = idx + 1
                    entry = rule.next_response(idx)
                    return self._materialize(entry, request.sample_count)
            if self.default is not None:
                entry = self.default
                if isinstance(entry, list) and entry and isinstance(entry[0], (str, list)):
                    idx = min(self._default_calls, len(entry) - 1)
                    self._default_calls += 1
                    entry = entry[idx]
                return self._materialize(entry, request.sample_count)
        raise MockScriptError(
            f"no mock rule matches prompt starting {request.prompt[:80]!r}"
        )

    @staticmethod
    def _materialize(entry, sample_count: int) -> ChatResponse:
        if isinstance(entry, str):
            texts = (entry,) * sample_count
        else:
            texts = tuple(entry)
            if len(texts) == 1 and sample_count > 1:
                texts = texts * sample_count
            if len(texts) != sample_count:
                raise MockScriptError(
                    f"scripted response has {len(texts)} texts, "
                    f"request wants {sample_count}"
                )
        return ChatResponse(texts=texts, provider_meta={"provider": "mock"})


class HttpChatProvider:
    """OpenAI-style chat-completions endpoint over HTTP."""

    name = "http"

    def __init__(self, base_url: str, api_key: str | None = None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout

    def complete(self, request: ChatRequest) -> ChatResponse:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output,
            "n": request.sample_count,
        }
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                headers=headers,
                json=body,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"chat transport failure: {exc}") from exc
        if resp.status_code in (401, 403):
            raise NonRetryableProviderError(f"auth failure: HTTP {resp.status_code}")
        if resp.status_code == 400:
            raise NonRetryableProviderError(f"bad request: {resp.text[:200]}")
        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransportError(f"provider error: HTTP {resp.status_code}")
        try:
            payload = resp.json()
            texts = tuple(c["message"]["content"] for c in payload["choices"])
        except (ValueError, KeyError) as exc:
            raise TransportError(f"malformed provider response: {exc}") from exc
        if len(texts) != request.sample_count:
            # some providers ignore n; repeat the call semantics locally
            if len(texts) == 1:
                texts = texts * request.sample_count
            else:
                raise TransportError(
                    f"provider returned {len(texts)} choices, "
                    f"expected {request.sample_count}"
                )
        return ChatResponse(texts=texts, provider_meta={"status": resp.status_code})


_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


class HashingEmbedder:
    """Deterministic local embedding from hashed character and word n-grams.

    Text is NFC-normalized, casefolded, whitespace-collapsed and stripped of
    terminal punctuation before feature extraction, so trivial surface
    variants ("Yes" vs "yes.") embed identically. Feature indices come from
    sha1 digests, never from the process hash seed.
    """

    name = "hashing"

    def __init__(self, dimension: int = 256, model_id: str = "hashing-ngram-v1"):
        self.dimension = dimension
        self.model_id = model_id

    def _features(self, text: str) -> Iterable[str]:
        padded = f"^{text}$"
        for i in range(len(padded) - 2):
            yield "c3:" + padded[i : i + 3]
        for tok in _TOKEN_RE.findall(text):
            yield "w:" + tok

    def embed(self, text: str) -> EmbeddingVector:
        norm = collapse_ws(normalize_text(text)).casefold().rstrip(".?!").strip()
        if not norm:
            raise InputError("cannot embed empty text")
        vec = np.zeros(self.dimension, dtype=np.float64)
        for feat in self._features(norm):
            digest = hashlib.sha1(feat.encode("utf-8")).digest()
            idx = int.from_bytes(digest[:4], "big") % self.dimension
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[idx] += sign
        norm2 = np.linalg.norm(vec)
        if norm2 == 0.0:
            vec[0] = 1.0
            norm2 = 1.0
        return EmbeddingVector(values=tuple((vec / norm2).tolist()), model_id=self.model_id)


class ScriptedEmbedder:
    """Maps exact strings to fixed vectors; used to stub similarities in tests."""

    name = "scripted"

    def __init__(self, table: Mapping[str, Sequence[float]], dimension: int,
                 model_id: str = "scripted"):
        self.table = {k: tuple(float(x) for x in v) for k, v in table.items()}
        self.dimension = dimension
        self.model_id = model_id

    def embed(self, text: str) -> EmbeddingVector:
        if text not in self.table:
            raise MockScriptError(f"no scripted embedding for {text!r}")
        return EmbeddingVector(values=self.table[text], model_id=self.model_id)


class HttpEmbeddingProvider:
    """OpenAI-style /embeddings endpoint."""

    name = "http"

    def __init__(self, base_url: str, model_id: str, dimension: int,
                 api_key: str | None = None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.dimension = dimension
        self.api_key = api_key
        self.timeout = timeout

    def embed(self, text: str) -> EmbeddingVector:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                f"{self.base_url}/embeddings",
                headers=headers,
                json={"model": self.model_id, "input": text},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"embedding transport failure: {exc}") from exc
        if resp.status_code in (401, 403):
            raise NonRetryableProviderError(f"auth failure: HTTP {resp.status_code}")
        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransportError(f"provider error: HTTP {resp.status_code}")
        try:
            values = tuple(resp.json()["data"][0]["embedding"])
        except (ValueError, KeyError, IndexError) as exc:
            raise TransportError(f"malformed embedding response: {exc}") from exc
        if len(values) != self.dimension:
            raise NonRetryableProviderError(
                f"provider returned dimension {len(values)}, declared {self.dimension}"
            )
        return EmbeddingVector(values=values, model_id=self.model_id)


class SentenceTransformerEmbedder:
    """Local sentence-embedding model (e.g. a SimCSE checkpoint).

    Imported lazily; requires the `embeddings` extra.
    """

    name = "sentence-transformer"

    def __init__(self, model_id: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise NonRetryableProviderError(
                "sentence-transformers is not installed; "
                "install the 'embeddings' extra"
            ) from exc
        self._model = SentenceTransformer(model_id)
        self.model_id = model_id
        self.dimension = int(self._model.get_sentence_embedding_dimension())

    def embed(self, text: str) -> EmbeddingVector:
        vec = self._model.encode([text], convert_to_numpy=True)[0]
        return EmbeddingVector(values=tuple(float(x) for x in vec), model_id=self.model_id)


# --------------------------------------------------------------------------
# Cache and gateway


class FileCache:
    """Content-addressed response cache: one file per request digest.

    Writes go through a temp file and an atomic rename, serialized by a
    lock; reads take no lock.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    @staticmethod
    def key(parts: Mapping[str, object]) -> str:
        canonical = json.dumps(parts, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def load(self, key: str) -> Optional[bytes]:
        path = self._path(key)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            return None

    def store(self, key: str, value: bytes) -> None:
        path = self._path(key)
        with self._write_lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(value)
            os.replace(tmp, path)


class TokenBucket:
    def __init__(self, rate_per_s: float, capacity: float):
        self.rate = rate_per_s
        self.capacity = capacity
        self._tokens = capacity
        self._last = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


@dataclass
class GatewayStats:
    chat_calls: int = 0
    chat_network_calls: int = 0
    chat_cache_hits: int = 0
    embed_calls: int = 0
    embed_cache_hits: int = 0

    @property
    def cache_hit_rate(self) -> float:
        total = self.chat_calls + self.embed_calls
        if total == 0:
            return 0.0
        return (self.chat_cache_hits + self.embed_cache_hits) / total


class Gateway:
    """Front door for all model traffic: caching, retries, limits, audit log."""

    def __init__(
        self,
        chat_provider: ChatProvider,
        embedding_provider: EmbeddingProvider,
        cache: FileCache | None = None,
        max_retries: int = 3,
        retry_base_delay: float = 0.5,
        rate_per_s: float = 0.0,
        max_in_flight: int = 8,
        audit_log: str | Path | None = None,
    ):
        self.chat_provider = chat_provider
        self.embedding_provider = embedding_provider
        self.cache = cache
        self.max_retries = max_retries
        self.retry_base_delay = retry_base_delay
        self._bucket = TokenBucket(rate_per_s, max(rate_per_s, 1.0)) if rate_per_s > 0 else None
        self._in_flight = threading.Semaphore(max_in_flight)
        self._audit_path = Path(audit_log) if audit_log else None
        self._audit_lock = threading.Lock()
        self._stats_lock = threading.Lock()
        self.stats = GatewayStats()

    # -- chat ---------------------------------------------------------------

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._stats_lock:
            self.stats.chat_calls += 1
        key = None
        if self.cache is not None:
            key = FileCache.key(
                {
                    "kind": "chat",
                    "provider": self.chat_provider.name,
                    "model_id": request.model_id,
                    "prompt": request.prompt,
                    "temperature": request.temperature,
                    "sample_count": request.sample_count,
                    "max_output": request.max_output,
                }
            )
            cached = self.cache.load(key)
            if cached is not None:
                with self._stats_lock:
                    self.stats.chat_cache_hits += 1
                texts = tuple(json.loads(cached.decode("utf-8"))["texts"])
                self._audit("chat", request.model_id, request.prompt, cached=True)
                return ChatResponse(texts=texts, provider_meta={"cached": True})

        response = self._call_with_retries(request)
        with self._stats_lock:
            self.stats.chat_network_calls += 1
        if self.cache is not None and key is not None:
            blob = json.dumps({"texts": list(response.texts)}, ensure_ascii=False)
            self.cache.store(key, blob.encode("utf-8"))
        self._audit("chat", request.model_id, request.prompt, cached=False)
        return response

    def _call_with_retries(self, request: ChatRequest) -> ChatResponse:
        attempts = 0
        last_exc: Exception | None = None
        while attempts <= self.max_retries:
            attempts += 1
            if self._bucket is not None:
                self._bucket.acquire()
            with self._in_flight:
                try:
                    return self.chat_provider.complete(request)
                except TransportError as exc:
                    last_exc = exc
                    logger.warning("transient provider failure (attempt %d): %s", attempts, exc)
                    if attempts <= self.max_retries:
                        time.sleep(self.retry_base_delay * (2 ** (attempts - 1)))
        raise GatewayExhaustedError(
            f"provider failed after {attempts} attempts: {last_exc}", attempts=attempts
        )

    # -- embeddings ---------------------------------------------------------

    def embed(self, text: str) -> EmbeddingVector:
        if not collapse_ws(text):
            raise InputError("cannot embed empty text")
        with self._stats_lock:
            self.stats.embed_calls += 1
        key = None
        if self.cache is not None:
            key = FileCache.key(
                {
                    "kind": "embed",
                    "provider": self.embedding_provider.name,
                    "model_id": self.embedding_provider.model_id,
                    "text": text,
                }
            )
            cached = self.cache.load(key)
            if cached is not None:
                with self._stats_lock:
                    self.stats.embed_cache_hits += 1
                values = tuple(json.loads(cached.decode("utf-8"))["values"])
                return EmbeddingVector(values=values, model_id=self.embedding_provider.model_id)
        vec = self.embedding_provider.embed(text)
        if len(vec.values) != self.embedding_provider.dimension:
            raise NonRetryableProviderError(
                f"embedding dimension {len(vec.values)} does not match "
                f"declared {self.embedding_provider.dimension}"
            )
        if self.cache is not None and key is not None:
            blob = json.dumps({"values": list(vec.values)})
            self.cache.store(key, blob.encode("utf-8"))
        return vec

    def similarity(self, a: str, b: str) -> float:
        return cosine(self.embed(a), self.embed(b))

    # -- audit --------------------------------------------------------------

    def _audit(self, kind: str, model_id: str, prompt: str, cached: bool) -> None:
        if self._audit_path is None:
            return
        entry = {
            "ts": time.time(),
            "kind": kind,
            "model_id": model_id,
            "prompt_sha256": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
            "cached": cached,
        }
        line = json.dumps(entry) + "\n"
        with self._audit_lock:
            with open(self._audit_path, "a", encoding="utf-8") as fh:
                fh.write(line)
